//! GNN architectures from two design families, split management and the
//! full-batch training loop.
//!
//! Homophilous designs average the ego node together with its neighbors
//! (GCN, SGC). Heterophilous designs keep the ego representation separate
//! from neighbor aggregates (GraphSAGE-style concatenation, and an H2GCN-style
//! model that also aggregates exact 2-hop neighbors separately).

mod arch;
mod split;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

pub use arch::{forward, Params};
pub use split::{make_splits, Split, SplitMasks};
pub use train::{
    loss_and_grads, run_design_family, run_seed, train, train_with_ops, EpochStats, FamilyRun, Predictions, TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameters do not match {family}: {reason}")]
    BadParams { family: ModelFamily, reason: String },
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: NnError },
    #[error("{model} run {run} failed: {source}")]
    RunFailed {
        model: ModelFamily,
        run: usize,
        source: Box<ModelError>,
    },
    #[error("split needs at least 4 nodes, got {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Gcn,
    Sgc,
    Sage,
    H2gcn,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [Self::Gcn, Self::Sgc, Self::Sage, Self::H2gcn];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Sgc => "sgc",
            Self::Sage => "sage",
            Self::H2gcn => "h2gcn",
        }
    }

    pub fn design(self) -> DesignFamily {
        match self {
            Self::Gcn | Self::Sgc => DesignFamily::Homophilous,
            Self::Sage | Self::H2gcn => DesignFamily::Heterophilous,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "sgc" => Ok(Self::Sgc),
            "sage" | "graphsage" => Ok(Self::Sage),
            "h2gcn" => Ok(Self::H2gcn),
            other => Err(ModelError::Parse(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignFamily {
    Homophilous,
    Heterophilous,
}

impl DesignFamily {
    pub const ALL: [DesignFamily; 2] = [Self::Homophilous, Self::Heterophilous];

    pub fn members(self) -> [ModelFamily; 2] {
        match self {
            Self::Homophilous => [ModelFamily::Gcn, ModelFamily::Sgc],
            Self::Heterophilous => [ModelFamily::Sage, ModelFamily::H2gcn],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Homophilous => "homophilous",
            Self::Heterophilous => "heterophilous",
        }
    }
}

impl fmt::Display for DesignFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "homophilous" | "hom" => Ok(Self::Homophilous),
            "heterophilous" | "het" => Ok(Self::Heterophilous),
            other => Err(ModelError::Parse(format!("unknown design family '{other}'"))),
        }
    }
}

/// Shared training hyperparameters; dropout falls back to the per-model
/// default when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub hidden_dim: usize,
    pub depth: usize,
    pub dropout: Option<f64>,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            depth: 2,
            dropout: None,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 300,
        }
    }
}

/// Small tuning grid: learning rate x hidden width.
pub fn tuning_grid() -> Vec<HyperParams> {
    let mut grid = Vec::new();
    for lr in [0.01, 0.05] {
        for hidden_dim in [16, 64] {
            grid.push(HyperParams {
                lr,
                hidden_dim,
                ..HyperParams::default()
            });
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub hidden_dim: usize,
    /// Propagation power for SGC. GCN and SAGE are fixed at two layers.
    pub depth: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

pub fn default_dropout(family: ModelFamily) -> f64 {
    match family {
        ModelFamily::Sgc => 0.0,
        _ => 0.5,
    }
}

impl ModelConfig {
    pub fn new(family: ModelFamily, hp: &HyperParams, seed: u64) -> Self {
        Self {
            family,
            hidden_dim: hp.hidden_dim,
            depth: hp.depth,
            dropout: hp.dropout.unwrap_or_else(|| default_dropout(family)),
            lr: hp.lr,
            weight_decay: hp.weight_decay,
            epochs: hp.epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        if !(1..=2).contains(&self.depth) {
            return bad(format!("depth must be 1 or 2, got {}", self.depth));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_partition_models() {
        for m in ModelFamily::ALL {
            assert!(m.design().members().contains(&m));
            assert_eq!(m.name().parse::<ModelFamily>().unwrap(), m);
        }
        assert!("gat".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn defaults_follow_family() {
        let hp = HyperParams::default();
        assert_eq!(ModelConfig::new(ModelFamily::Sgc, &hp, 0).dropout, 0.0);
        assert_eq!(ModelConfig::new(ModelFamily::Gcn, &hp, 0).dropout, 0.5);
        assert_eq!(tuning_grid().len(), 4);
        let mut bad = ModelConfig::new(ModelFamily::Gcn, &hp, 0);
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
    }
}
