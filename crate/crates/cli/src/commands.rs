//! The single-shot subcommands. Each writes plain CSV/JSON files into an
//! output directory and is deterministic given its inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context as _};
use hetfair_core::bundle::GraphBundle;
use hetfair_core::fairness::{fairness_report, high_hs_slice, stratified_report, FairnessError};
use hetfair_core::homophily::{global_homophily, homophily_histogram, homophily_profile, Attribute};
use hetfair_core::models::{make_splits, train, ModelConfig, ModelFamily, Split, SplitMasks};
use hetfair_core::synth::{generate, GeneratorConfig};
use hetfair_core::{Labels, NodeId};
use serde::Serialize;

use crate::config::TrainOverrides;
use crate::{config_err, CliResult};

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn read_bundle(dir: &Path) -> anyhow::Result<GraphBundle> {
    GraphBundle::read(dir).with_context(|| format!("reading graph bundle {}", dir.display()))
}

pub fn cmd_generate(cfg: &GeneratorConfig, out: &Path) -> CliResult<GraphBundle> {
    cfg.validate().map_err(config_err)?;
    let (graph, attrs) = generate(cfg).context("generating graph")?;
    let mut bundle = GraphBundle::new(graph, attrs, "synthetic");
    bundle.meta.generator = Some(cfg.clone());
    bundle
        .write(out)
        .with_context(|| format!("writing bundle to {}", out.display()))?;
    Ok(bundle)
}

#[derive(Debug, Serialize)]
struct GlobalSummary {
    n_nodes: usize,
    n_edges: usize,
    class_homophily: Option<f64>,
    sens_homophily: Option<f64>,
}

pub fn profile_csv(profile: &hetfair_core::homophily::LocalHomophilyProfile) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("node_id,class_hom_k1,sens_hom_k1,class_hom_k2,sens_hom_k2\n");
    for u in 0..profile.n_nodes() {
        let get = |k| (profile.class_hom(u, k).unwrap(), profile.sens_hom(u, k).unwrap());
        let ((c1, s1), (c2, s2)) = (get(1), get(2));
        let _ = writeln!(out, "{u},{},{},{},{}", opt(c1), opt(s1), opt(c2), opt(s2));
    }
    out
}

/// Global ratios, the per-node profile, and one histogram per attribute and
/// hop radius.
pub fn cmd_homophily(graph: &Path, ks: &[usize], bin_width: f64, out: &Path) -> CliResult<()> {
    if let Some(k) = ks.iter().find(|k| !(1..=2).contains(*k)) {
        return Err(config_err(format!("k must be 1 or 2, got {k}")));
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(config_err(format!("bin width must be in (0, 1], got {bin_width}")));
    }
    let b = read_bundle(graph)?;
    fs::create_dir_all(out)?;
    let summary = GlobalSummary {
        n_nodes: b.graph.n_nodes(),
        n_edges: b.graph.n_edges(),
        class_homophily: global_homophily(&b.graph, &b.attrs.class).ok(),
        sens_homophily: global_homophily(&b.graph, &b.attrs.sensitive).ok(),
    };
    write(out, "global.json", serde_json::to_string_pretty(&summary).context("json")? + "\n")?;
    let profile = homophily_profile(&b.graph, &b.attrs.class, &b.attrs.sensitive).context("profile")?;
    write(out, "profile.csv", profile_csv(&profile))?;
    for &k in ks {
        for (which, name) in [(Attribute::Class, "class"), (Attribute::Sensitive, "sens")] {
            let hist = homophily_histogram(&profile, which, k, bin_width).context("histogram")?;
            write(out, &format!("hist_{name}_k{k}.csv"), hist.to_csv())?;
        }
    }
    Ok(())
}

pub fn cmd_train(graph: &Path, opts: &TrainOverrides, out: &Path) -> CliResult<()> {
    let model = opts
        .model
        .ok_or_else(|| config_err("model is required (gcn, sgc, sage or h2gcn)"))?;
    let hp = opts.hyper.resolve();
    let cfg = ModelConfig::new(model, &hp, opts.seed.unwrap_or(0));
    cfg.validate().map_err(config_err)?;
    let b = read_bundle(graph)?;
    let splits = make_splits(b.graph.n_nodes(), opts.split_seed.unwrap_or(0)).context("splitting")?;
    let result = train(&b.graph, &b.attrs, &splits, &cfg).with_context(|| format!("training {model}"))?;
    fs::create_dir_all(out)?;
    write(out, "preds.csv", result.predictions.to_csv(&b.attrs, &splits))?;
    write(out, "trace.csv", result.trace_csv())?;
    write(out, "params.txt", result.params.to_text())?;
    write(out, "config.toml", toml::to_string(&cfg).context("toml")?)?;
    let test = fairness_report(&result.predictions.predicted_class, &b.attrs, &splits.test);
    let summary = serde_json::json!({
        "model": model,
        "best_epoch": result.best_epoch,
        "test": test,
    });
    write(out, "summary.json", serde_json::to_string_pretty(&summary).context("json")? + "\n")?;
    Ok(())
}

/// Predictions and split assignment read back from a `preds.csv`.
pub fn read_predictions(path: &Path, truth: &Labels) -> anyhow::Result<(Labels, SplitMasks)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let n = truth.len();
    let mut pred = vec![None; n];
    let mut split = vec![None; n];
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let ctx = || format!("{}:{line}", path.display());
        if rec.len() != 6 {
            bail!("{}: expected 6 columns, got {}", ctx(), rec.len());
        }
        let u: NodeId = rec[0].parse().with_context(ctx)?;
        if u >= n {
            bail!("{}: node {u} is not in the graph ({n} nodes)", ctx());
        }
        let true_class: u8 = rec[1].parse().with_context(ctx)?;
        if true_class != truth.get(u) {
            bail!("{}: true_class of node {u} disagrees with the graph bundle", ctx());
        }
        let p: u8 = rec[3].parse().with_context(ctx)?;
        if p > 1 {
            bail!("{}: predicted_class must be 0 or 1", ctx());
        }
        pred[u] = Some(p);
        split[u] = Some(Split::parse(&rec[5]).with_context(|| format!("{}: unknown split '{}'", ctx(), &rec[5]))?);
    }
    let missing = pred.iter().position(Option::is_none);
    if let Some(u) = missing {
        bail!("{}: no prediction for node {u}", path.display());
    }
    let pred = Labels::new(pred.into_iter().flatten().collect())?;
    let split = SplitMasks::from_assignment(split.into_iter().flatten().collect());
    Ok((pred, split))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluateOptions {
    pub k: usize,
    pub all_nodes: bool,
    /// Threshold for the high sensitive-homophily slice.
    pub hs_threshold: f64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            k: 1,
            all_nodes: false,
            hs_threshold: 0.6,
        }
    }
}

pub fn cmd_evaluate(preds: &Path, graph: &Path, opts: &EvaluateOptions, out: &Path) -> CliResult<()> {
    if !(1..=2).contains(&opts.k) {
        return Err(config_err(format!("k must be 1 or 2, got {}", opts.k)));
    }
    if !(0.0..=1.0).contains(&opts.hs_threshold) {
        return Err(config_err(format!("hs_threshold must be in [0, 1], got {}", opts.hs_threshold)));
    }
    let b = read_bundle(graph)?;
    let (pred, splits) = read_predictions(preds, &b.attrs.class)?;
    let eval = if opts.all_nodes { splits.all_nodes() } else { splits.test.clone() };
    let profile = homophily_profile(&b.graph, &b.attrs.class, &b.attrs.sensitive).context("profile")?;
    let overall = fairness_report(&pred, &b.attrs, &eval);
    let strat = stratified_report(&pred, &b.attrs, &profile, opts.k, &eval).context("stratifying")?;
    fs::create_dir_all(out)?;
    write(out, "report.csv", strat.to_csv())?;
    let slice = match high_hs_slice(&profile, &pred, &b.attrs, opts.hs_threshold, opts.k, &eval) {
        Ok(s) => {
            write(out, "slice.csv", s.to_csv())?;
            Some(s)
        }
        Err(FairnessError::EmptySlice(_)) => None,
        Err(e) => return Err(anyhow::Error::from(e).into()),
    };
    let report = serde_json::json!({
        "eval_nodes": eval.len(),
        "overall": overall,
        "stratified": strat,
        "high_hs_slice": slice.map(|s| serde_json::json!({
            "threshold": s.threshold,
            "coverage": s.coverage,
            "n_nodes": s.nodes.len(),
            "overall": s.overall,
            "bins": s.bins,
        })),
    });
    write(out, "report.json", serde_json::to_string_pretty(&report).context("json")? + "\n")?;
    Ok(())
}

pub fn parse_model(s: &str) -> Result<ModelFamily, String> {
    s.parse().map_err(|e: hetfair_core::models::ModelError| e.to_string())
}
