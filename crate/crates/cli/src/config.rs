//! Flat TOML config files. Every key can also be given as a command-line flag,
//! and flags win.

use std::fs;
use std::path::Path;

use clap::{Args, ValueEnum};
use hetfair_core::models::{HyperParams, ModelFamily};
use hetfair_core::synth::{FeatureMeans, GeneratorConfig, JointDistribution};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{config_err, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    #[default]
    Uniform,
    /// Class 0 co-occurs with s = 0 and class 1 with s = 1 three times as
    /// often as the mixed pairs.
    Skew3x,
}

impl JointMode {
    pub fn name(self) -> &'static str {
        match self {
            JointMode::Uniform => "uniform",
            JointMode::Skew3x => "skew3x",
        }
    }

    pub fn joint(self) -> JointDistribution {
        match self {
            JointMode::Uniform => JointDistribution::uniform(),
            JointMode::Skew3x => JointDistribution::skew3x(),
        }
    }
}

/// Parses TOML into `T`, rejecting keys `T` does not know.
///
/// Unknown keys are found by serializing the parsed value back: serde's own
/// `deny_unknown_fields` does not see through flattened structs.
pub fn parse<T: DeserializeOwned + Serialize>(text: &str) -> Result<T, String> {
    let input: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let value: T = input.clone().try_into().map_err(|e: toml::de::Error| e.to_string())?;
    let known: toml::Table = toml::Table::try_from(&value).map_err(|e| e.to_string())?;
    let unknown: Vec<&str> = input
        .keys()
        .filter(|k| !known.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(format!("unknown key(s): {}", unknown.join(", ")));
    }
    Ok(value)
}

/// Reads a TOML file into `T`, or `T::default()` when no path is given.
pub fn load<T: DeserializeOwned + Serialize + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Fills every `None` field of `base` from `fallback`.
macro_rules! merge_options {
    ($base:expr, $fallback:expr, [$($field:ident),* $(,)?]) => {
        $( if $base.$field.is_none() { $base.$field = $fallback.$field.clone(); } )*
    };
}
pub(crate) use merge_options;

fn parse_means(s: &str) -> Result<FeatureMeans, String> {
    match s {
        "signed" => Ok(FeatureMeans::Signed),
        "literal" => Ok(FeatureMeans::Literal),
        other => Err(format!("unknown feature_means '{other}' (signed or literal)")),
    }
}

/// Training hyperparameters shared by `train`, `sweep` and `bias-sweep`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Propagation power for SGC.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl HyperOverrides {
    pub fn merged(mut self, file: &HyperOverrides) -> Self {
        merge_options!(self, file, [hidden_dim, depth, dropout, lr, weight_decay, epochs]);
        self
    }

    pub fn resolve(&self) -> HyperParams {
        let d = HyperParams::default();
        HyperParams {
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            depth: self.depth.unwrap_or(d.depth),
            dropout: self.dropout.or(d.dropout),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.unwrap_or(d.epochs),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct GenerateOverrides {
    #[arg(long)]
    pub n_nodes: Option<usize>,
    #[arg(long)]
    pub edges_per_node: Option<usize>,
    #[arg(long)]
    pub h_c: Option<f64>,
    #[arg(long)]
    pub h_s: Option<f64>,
    #[arg(long, value_enum)]
    pub joint: Option<JointMode>,
    /// How strongly features encode the sensitive attribute, in [0, 1].
    #[arg(long = "e")]
    pub feature_bias: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub feature_std: Option<f64>,
    #[arg(long, value_parser = parse_means)]
    pub feature_means: Option<FeatureMeans>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl GenerateOverrides {
    pub fn merged(mut self, file: &GenerateOverrides) -> Self {
        merge_options!(
            self,
            file,
            [n_nodes, edges_per_node, h_c, h_s, joint, feature_bias, feature_dim, feature_std, feature_means, seed]
        );
        self
    }

    pub fn resolve(&self) -> CliResult<GeneratorConfig> {
        let d = GeneratorConfig::default();
        let cfg = GeneratorConfig {
            n_nodes: self.n_nodes.unwrap_or(d.n_nodes),
            edges_per_node: self.edges_per_node.unwrap_or(d.edges_per_node),
            h_c: self.h_c.unwrap_or(d.h_c),
            h_s: self.h_s.unwrap_or(d.h_s),
            joint: self.joint.unwrap_or_default().joint(),
            feature_bias: self.feature_bias.unwrap_or(d.feature_bias),
            feature_dim: self.feature_dim.unwrap_or(d.feature_dim),
            feature_std: self.feature_std.unwrap_or(d.feature_std),
            feature_means: self.feature_means.unwrap_or(d.feature_means),
            seed: self.seed.unwrap_or(d.seed),
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub model: Option<ModelFamily>,
    /// Seeds parameter initialization and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperOverrides,
}

impl TrainOverrides {
    pub fn merged(mut self, file: &TrainOverrides) -> Self {
        merge_options!(self, file, [model, seed, split_seed]);
        self.hyper = self.hyper.merged(&file.hyper);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: GenerateOverrides = parse("n_nodes = 50\nh_c = 0.2\njoint = \"skew3x\"\nfeature_bias = 0.5").unwrap();
        let cli = GenerateOverrides {
            h_c: Some(0.7),
            ..Default::default()
        };
        let cfg = cli.merged(&file).resolve().unwrap();
        assert_eq!((cfg.n_nodes, cfg.h_c, cfg.feature_bias), (50, 0.7, 0.5));
        assert_eq!(cfg.joint, JointDistribution::skew3x());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse::<GenerateOverrides>("n_node = 5").is_err());
        assert!(parse::<HyperOverrides>("learning_rate = 0.1").is_err());
        assert!(parse::<TrainOverrides>("model = \"gcn\"\nepoch = 3").is_err());
        let t: TrainOverrides = parse("model = \"sage\"\nepochs = 3").unwrap();
        assert_eq!((t.model, t.hyper.epochs), (Some(ModelFamily::Sage), Some(3)));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = GenerateOverrides {
            h_s: Some(1.5),
            ..Default::default()
        };
        assert_eq!(bad.resolve().unwrap_err().exit_code(), 1);
    }
}
