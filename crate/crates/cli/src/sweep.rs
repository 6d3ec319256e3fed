//! Grid sweeps over (h_c, h_s, e) cells: generate graphs, train every model,
//! write per-run and aggregated reports.
//!
//! Layout under `<out_dir>/<sweep_id>/`:
//!
//! ```text
//! manifest.json              timestamps, durations, completed cells, failures
//! config.toml                resolved spec
//! cells/<cell>/graph_<g>/    graph bundle
//! cells/<cell>/graph_<g>/<model>_run<r>/{preds,trace,report}.csv, report.json
//! cells/<cell>/{records,report,diff}.csv
//! aggregate/{fig2_grid,fig3_diff,fig4_bias}.csv
//! ```
//!
//! Everything except the manifest is a pure function of the spec, whatever the
//! worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use hetfair_core::bundle::GraphBundle;
use hetfair_core::fairness::{
    aggregate_reports, design_comparison, fairness_report, stratified_report, DesignComparison,
    FairnessError, FairnessReport, MeanCell, StratifiedReport, AggregateReport,
};
use hetfair_core::homophily::{homophily_profile, LocalHomophilyProfile};
use hetfair_core::models::{
    make_splits, run_seed, train_with_ops, DesignFamily, HyperParams, ModelConfig, ModelFamily,
    SplitMasks,
};
use hetfair_core::nn::{build_propagation_matrices, PropagationOperators};
use hetfair_core::seed::{derive, real_part, tag_part};
use hetfair_core::synth::{generate, GeneratorConfig};
use hetfair_core::{NodeAttributes, NodeId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{merge_options, HyperOverrides, JointMode};
use crate::{config_err, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 10 graphs per cell, 3 runs per model.
    Default,
    /// 3 graphs per cell, 1 run per model.
    Quick,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Quick => "quick",
        }
    }

    fn sizes(self) -> (usize, usize) {
        match self {
            Preset::Default => (10, 3),
            Preset::Quick => (3, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Sweep,
    BiasSweep,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::Sweep => "sweep",
            SweepKind::BiasSweep => "bias-sweep",
        }
    }
}

pub const DEFAULT_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_BIAS_E: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_BIAS_HS: f64 = 0.9;

/// Fully resolved sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub sweep_id: String,
    pub out_dir: PathBuf,
    pub h_c: Vec<f64>,
    pub h_s: Vec<f64>,
    pub e: Vec<f64>,
    pub joint: JointMode,
    pub graphs_per_cell: usize,
    pub runs_per_model: usize,
    pub models: Vec<ModelFamily>,
    pub master_seed: u64,
    /// Thread count; results do not depend on it.
    pub workers: usize,
    /// Hop radius used for stratification.
    pub k: usize,
    /// Evaluate on every node instead of the test split.
    pub eval_all_nodes: bool,
    pub n_nodes: usize,
    pub edges_per_node: usize,
    pub feature_dim: usize,
    #[serde(flatten)]
    pub hyper: HyperParams,
}

/// Sweep keys as they appear in config files and on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct SweepOverrides {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub sweep_id: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub h_c: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub h_s: Option<Vec<f64>>,
    /// Feature bias values.
    #[arg(long = "e", value_delimiter = ',', num_args = 1..)]
    pub e: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub joint: Option<JointMode>,
    #[arg(long)]
    pub graphs_per_cell: Option<usize>,
    #[arg(long)]
    pub runs_per_model: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub models: Option<Vec<ModelFamily>>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// 0 uses every available core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eval_all_nodes: Option<bool>,
    #[arg(long)]
    pub n_nodes: Option<usize>,
    #[arg(long)]
    pub edges_per_node: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: HyperOverrides,
}

fn check_unit_list(name: &str, values: &[f64]) -> CliResult<()> {
    if values.is_empty() {
        return Err(config_err(format!("{name} must not be empty")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(config_err(format!("{name} value {v} is outside [0, 1]")));
    }
    Ok(())
}

impl SweepOverrides {
    pub fn merged(mut self, file: &SweepOverrides) -> Self {
        merge_options!(
            self,
            file,
            [
                preset,
                sweep_id,
                out_dir,
                h_c,
                h_s,
                e,
                joint,
                graphs_per_cell,
                runs_per_model,
                models,
                master_seed,
                workers,
                k,
                eval_all_nodes,
                n_nodes,
                edges_per_node,
                feature_dim
            ]
        );
        self.hyper = self.hyper.merged(&file.hyper);
        self
    }

    pub fn resolve(&self, kind: SweepKind) -> CliResult<SweepSpec> {
        let preset = self.preset.unwrap_or(Preset::Default);
        let (graphs, runs) = preset.sizes();
        let joint = self.joint.unwrap_or_default();
        let master_seed = self.master_seed.unwrap_or(0);
        let (default_hs, default_e) = match kind {
            SweepKind::Sweep => (DEFAULT_GRID.to_vec(), vec![1.0]),
            SweepKind::BiasSweep => (vec![DEFAULT_BIAS_HS], DEFAULT_BIAS_E.to_vec()),
        };
        let mut models = self.models.clone().unwrap_or_else(|| ModelFamily::ALL.to_vec());
        models.sort();
        models.dedup();
        let spec = SweepSpec {
            kind,
            sweep_id: self.sweep_id.clone().unwrap_or_else(|| {
                format!("{}-{}-{}-seed{master_seed}", kind.name(), joint.name(), preset.name())
            }),
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("results")),
            h_c: self.h_c.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec()),
            h_s: self.h_s.clone().unwrap_or(default_hs),
            e: self.e.clone().unwrap_or(default_e),
            joint,
            graphs_per_cell: self.graphs_per_cell.unwrap_or(graphs),
            runs_per_model: self.runs_per_model.unwrap_or(runs),
            models,
            master_seed,
            workers: self.workers.unwrap_or(1),
            k: self.k.unwrap_or(1),
            eval_all_nodes: self.eval_all_nodes.unwrap_or(false),
            n_nodes: self.n_nodes.unwrap_or(1000),
            edges_per_node: self.edges_per_node.unwrap_or(10),
            feature_dim: self.feature_dim.unwrap_or(2),
            hyper: self.hyper.resolve(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepSpec {
    pub fn validate(&self) -> CliResult<()> {
        check_unit_list("h_c", &self.h_c)?;
        check_unit_list("h_s", &self.h_s)?;
        check_unit_list("e", &self.e)?;
        if self.graphs_per_cell == 0 || self.runs_per_model == 0 {
            return Err(config_err("graphs_per_cell and runs_per_model must be positive"));
        }
        if self.models.is_empty() {
            return Err(config_err("models must not be empty"));
        }
        if !(1..=2).contains(&self.k) {
            return Err(config_err(format!("k must be 1 or 2, got {}", self.k)));
        }
        if self.sweep_id.is_empty() || self.sweep_id.contains(['/', '\\']) {
            return Err(config_err(format!("invalid sweep_id '{}'", self.sweep_id)));
        }
        for cell in self.cells() {
            self.generator_config(&cell, 0).validate().map_err(config_err)?;
        }
        for &m in &self.models {
            ModelConfig::new(m, &self.hyper, 0).validate().map_err(config_err)?;
        }
        Ok(())
    }

    pub fn root(&self) -> PathBuf {
        self.out_dir.join(&self.sweep_id)
    }

    /// Cells in execution order: e, then h_c, then h_s.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &e in &self.e {
            for &h_c in &self.h_c {
                for &h_s in &self.h_s {
                    out.push(Cell {
                        h_c,
                        h_s,
                        e,
                        joint: self.joint,
                    });
                }
            }
        }
        out
    }

    pub fn graph_seed(&self, cell: &Cell, graph: usize) -> u64 {
        derive(&[
            self.master_seed,
            real_part(cell.h_c),
            real_part(cell.h_s),
            real_part(cell.e),
            tag_part(cell.joint.name()),
            graph as u64,
        ])
    }

    pub fn generator_config(&self, cell: &Cell, graph: usize) -> GeneratorConfig {
        GeneratorConfig {
            n_nodes: self.n_nodes,
            edges_per_node: self.edges_per_node,
            h_c: cell.h_c,
            h_s: cell.h_s,
            joint: cell.joint.joint(),
            feature_bias: cell.e,
            feature_dim: self.feature_dim,
            seed: self.graph_seed(cell, graph),
            ..GeneratorConfig::default()
        }
    }

    /// Settings that determine results; worker count and location excluded.
    fn fingerprint(&self) -> SweepSpec {
        SweepSpec {
            workers: 0,
            out_dir: PathBuf::new(),
            ..self.clone()
        }
    }

    pub fn total_runs(&self) -> usize {
        self.cells().len() * self.graphs_per_cell * self.models.len() * self.runs_per_model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub h_c: f64,
    pub h_s: f64,
    pub e: f64,
    pub joint: JointMode,
}

impl Cell {
    pub fn id(&self) -> String {
        format!("hc{}_hs{}_e{}_{}", self.h_c, self.h_s, self.e, self.joint.name())
    }
}

/// Result of one training run, stored as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub cell_id: String,
    pub graph: usize,
    pub graph_seed: u64,
    pub model: ModelFamily,
    pub design: DesignFamily,
    pub run: usize,
    pub run_seed: u64,
    pub best_epoch: usize,
    pub eval_nodes: usize,
    pub overall: FairnessReport,
    pub stratified: StratifiedReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell_id: String,
    pub graph: usize,
    /// `None` when the graph itself could not be built.
    pub model: Option<ModelFamily>,
    pub run: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub graph: usize,
    pub model: ModelFamily,
    pub run: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub id: String,
    pub cell: Cell,
    pub completed: bool,
    pub started_unix: u64,
    pub seconds: f64,
    pub runs_ok: usize,
    pub failures: Vec<Failure>,
    pub timings: Vec<RunTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SweepSpec,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub cells: Vec<CellEntry>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(root: &Path) -> anyhow::Result<Option<Manifest>> {
        let path = root.join(Self::FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(Some(m))
    }

    fn save(&mut self, root: &Path) -> anyhow::Result<()> {
        self.updated_unix = unix_now();
        let tmp = root.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(&tmp, root.join(Self::FILE))?;
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Failure> {
        self.cells.iter().flat_map(|c| &c.failures)
    }

    fn completed(&self, id: &str) -> bool {
        self.cells.iter().any(|c| c.id == id && c.completed)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub root: PathBuf,
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
    pub cells_run: usize,
    pub cells_skipped: usize,
}

struct GraphCtx {
    index: usize,
    seed: u64,
    attrs: NodeAttributes,
    ops: PropagationOperators,
    profile: LocalHomophilyProfile,
    splits: SplitMasks,
    dir: PathBuf,
}

fn run_dir(graph_dir: &Path, model: ModelFamily, run: usize) -> PathBuf {
    graph_dir.join(format!("{model}_run{run}"))
}

fn prepare_graph(spec: &SweepSpec, cell: &Cell, index: usize, cell_dir: &Path) -> anyhow::Result<GraphCtx> {
    let cfg = spec.generator_config(cell, index);
    let (graph, attrs) = generate(&cfg)?;
    let ops = build_propagation_matrices(&graph);
    let profile = homophily_profile(&graph, &attrs.class, &attrs.sensitive)?;
    let splits = make_splits(graph.n_nodes(), derive(&[cfg.seed, tag_part("split")]))?;
    let dir = cell_dir.join(format!("graph_{index}"));
    let mut bundle = GraphBundle::new(graph, attrs, "synthetic");
    bundle.meta.generator = Some(cfg.clone());
    bundle.write(&dir)?;
    Ok(GraphCtx {
        index,
        seed: cfg.seed,
        attrs: bundle.attrs,
        ops,
        profile,
        splits,
        dir,
    })
}

fn run_one(
    spec: &SweepSpec,
    cell: &Cell,
    ctx: &GraphCtx,
    model: ModelFamily,
    run: usize,
) -> anyhow::Result<RunRecord> {
    let seed = run_seed(ctx.seed, model, run);
    let cfg = ModelConfig::new(model, &spec.hyper, seed);
    let out = train_with_ops(&ctx.ops, &ctx.attrs, &ctx.splits, &cfg)?;
    let all;
    let eval: &[NodeId] = if spec.eval_all_nodes {
        all = ctx.splits.all_nodes();
        &all
    } else {
        &ctx.splits.test
    };
    let pred = &out.predictions.predicted_class;
    let stratified = stratified_report(pred, &ctx.attrs, &ctx.profile, spec.k, eval)?;
    let record = RunRecord {
        cell: *cell,
        cell_id: cell.id(),
        graph: ctx.index,
        graph_seed: ctx.seed,
        model,
        design: model.design(),
        run,
        run_seed: seed,
        best_epoch: out.best_epoch,
        eval_nodes: eval.len(),
        overall: fairness_report(pred, &ctx.attrs, eval),
        stratified,
    };
    let dir = run_dir(&ctx.dir, model, run);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("preds.csv"), out.predictions.to_csv(&ctx.attrs, &ctx.splits))?;
    fs::write(dir.join("trace.csv"), out.trace_csv())?;
    fs::write(dir.join("report.csv"), record.stratified.to_csv())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(record)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(
        "h_c,h_s,e,joint,graph,graph_seed,model,design,run,run_seed,best_epoch,eval_nodes,f1,acc,delta_sp,delta_eo\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.h_c,
            r.cell.h_s,
            r.cell.e,
            r.cell.joint.name(),
            r.graph,
            r.graph_seed,
            r.model,
            r.design,
            r.run,
            r.run_seed,
            r.best_epoch,
            r.eval_nodes,
            r.overall.f1,
            r.overall.accuracy,
            opt(r.overall.delta_sp),
            opt(r.overall.delta_eo)
        );
    }
    out
}

fn family_reports(records: &[RunRecord], design: DesignFamily) -> Vec<&StratifiedReport> {
    records
        .iter()
        .filter(|r| r.design == design)
        .map(|r| &r.stratified)
        .collect()
}

/// Per-family aggregates over `records`, for the families that have any.
pub fn family_aggregates(records: &[RunRecord]) -> Result<Vec<(DesignFamily, AggregateReport)>, FairnessError> {
    let mut out = Vec::new();
    for design in DesignFamily::ALL {
        let reports = family_reports(records, design);
        if !reports.is_empty() {
            out.push((design, aggregate_reports(&reports)?));
        }
    }
    Ok(out)
}

/// Heterophilous minus homophilous family means over `records`.
pub fn family_comparison(records: &[RunRecord]) -> Result<DesignComparison, FairnessError> {
    design_comparison(
        &family_reports(records, DesignFamily::Heterophilous),
        &family_reports(records, DesignFamily::Homophilous),
    )
}

/// Mean test-set metrics per feature-bias value and family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub e: f64,
    pub design: DesignFamily,
    /// `None` for the family-wide row.
    pub model: Option<ModelFamily>,
    pub n_runs: usize,
    pub f1: MeanCell,
    pub delta_sp: MeanCell,
    pub delta_eo: MeanCell,
}

pub fn bias_rows(records: &[RunRecord]) -> Vec<BiasRow> {
    let mut es: Vec<f64> = records.iter().map(|r| r.cell.e).collect();
    es.sort_by(f64::total_cmp);
    es.dedup();
    let mut rows = Vec::new();
    for e in es {
        for design in DesignFamily::ALL {
            let scopes = std::iter::once(None).chain(design.members().map(Some));
            for model in scopes {
                let sel: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.cell.e == e && r.design == design && model.is_none_or(|m| r.model == m))
                    .collect();
                if sel.is_empty() {
                    continue;
                }
                let mean = |f: &dyn Fn(&FairnessReport) -> Option<f64>| {
                    let vals: Vec<f64> = sel.iter().filter_map(|r| f(&r.overall)).collect();
                    MeanCell {
                        mean: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                        count: vals.len(),
                        excluded: sel.len() - vals.len(),
                    }
                };
                rows.push(BiasRow {
                    e,
                    design,
                    model,
                    n_runs: sel.len(),
                    f1: mean(&|r| Some(r.f1)),
                    delta_sp: mean(&|r| r.delta_sp),
                    delta_eo: mean(&|r| r.delta_eo),
                });
            }
        }
    }
    rows
}

pub fn bias_csv(rows: &[BiasRow]) -> String {
    let mut out = String::from("e,design,model,n_runs,f1,delta_sp,delta_eo,n_sp,n_eo\n");
    for r in rows {
        let model = r.model.map_or("all", ModelFamily::name);
        let _ = writeln!(
            out,
            "{},{},{model},{},{},{},{},{},{}",
            r.e,
            r.design,
            r.n_runs,
            opt(r.f1.mean),
            opt(r.delta_sp.mean),
            opt(r.delta_eo.mean),
            r.delta_sp.count,
            r.delta_eo.count
        );
    }
    out
}

fn grid_csv(scopes: &[(String, &[RunRecord])]) -> Result<String, FairnessError> {
    let mut out = format!("scope,design,{}\n", AggregateReport::csv_header());
    for (scope, records) in scopes {
        for (design, agg) in family_aggregates(records)? {
            out.push_str(&agg.csv_rows(&format!("{scope},{design}")));
        }
    }
    Ok(out)
}

fn diff_csv(scopes: &[(String, &[RunRecord])]) -> String {
    let mut out = format!("scope,{}\n", DesignComparison::csv_header());
    for (scope, records) in scopes {
        if let Ok(cmp) = family_comparison(records) {
            out.push_str(&cmp.csv_rows(scope));
        }
    }
    out
}

fn write_cell_summary(cell_dir: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    fs::write(cell_dir.join("records.csv"), records_csv(records))?;
    let mut report = format!("design,{}\n", AggregateReport::csv_header());
    for (design, agg) in family_aggregates(records)? {
        report.push_str(&agg.csv_rows(design.name()));
    }
    fs::write(cell_dir.join("report.csv"), report)?;
    if let Ok(cmp) = family_comparison(records) {
        fs::write(cell_dir.join("diff.csv"), cmp.to_csv())?;
    }
    Ok(())
}

/// Reads every run record of `spec` that exists on disk, in spec order.
pub fn load_records(spec: &SweepSpec) -> anyhow::Result<Vec<RunRecord>> {
    let root = spec.root();
    let mut out = Vec::new();
    for cell in spec.cells() {
        let cell_dir = root.join("cells").join(cell.id());
        for g in 0..spec.graphs_per_cell {
            let graph_dir = cell_dir.join(format!("graph_{g}"));
            for &model in &spec.models {
                for run in 0..spec.runs_per_model {
                    let path = run_dir(&graph_dir, model, run).join("report.json");
                    if !path.exists() {
                        continue;
                    }
                    let text = fs::read_to_string(&path)?;
                    let rec: RunRecord =
                        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                    out.push(rec);
                }
            }
        }
    }
    Ok(out)
}

/// Rewrites `aggregate/` from the given records.
pub fn write_aggregates(spec: &SweepSpec, records: &[RunRecord]) -> anyhow::Result<()> {
    let dir = spec.root().join("aggregate");
    fs::create_dir_all(&dir)?;
    let mut by_cell: BTreeMap<usize, Vec<RunRecord>> = BTreeMap::new();
    let cells = spec.cells();
    for r in records {
        if let Some(i) = cells.iter().position(|c| c.id() == r.cell_id) {
            by_cell.entry(i).or_default().push(r.clone());
        }
    }
    let mut scopes: Vec<(String, &[RunRecord])> = vec![("pooled".into(), records)];
    for (i, recs) in &by_cell {
        scopes.push((cells[*i].id(), recs));
    }
    fs::write(dir.join("fig2_grid.csv"), grid_csv(&scopes)?)?;
    fs::write(dir.join("fig3_diff.csv"), diff_csv(&scopes))?;
    fs::write(dir.join("fig4_bias.csv"), bias_csv(&bias_rows(records)))?;
    Ok(())
}

fn run_cell(
    spec: &SweepSpec,
    cell: &Cell,
    cell_dir: &Path,
) -> anyhow::Result<(Vec<RunRecord>, Vec<Failure>, Vec<RunTiming>)> {
    if cell_dir.exists() {
        // leftovers of an interrupted attempt
        fs::remove_dir_all(cell_dir)?;
    }
    fs::create_dir_all(cell_dir)?;
    let id = cell.id();
    let prepared: Vec<anyhow::Result<GraphCtx>> = (0..spec.graphs_per_cell)
        .into_par_iter()
        .map(|g| prepare_graph(spec, cell, g, cell_dir))
        .collect();
    let mut failures = Vec::new();
    let mut graphs = Vec::new();
    for (g, res) in prepared.into_iter().enumerate() {
        match res {
            Ok(ctx) => graphs.push(ctx),
            Err(e) => failures.push(Failure {
                cell_id: id.clone(),
                graph: g,
                model: None,
                run: None,
                error: format!("{e:#}"),
            }),
        }
    }
    let jobs: Vec<(&GraphCtx, ModelFamily, usize)> = graphs
        .iter()
        .flat_map(|ctx| {
            spec.models
                .iter()
                .flat_map(move |&m| (0..spec.runs_per_model).map(move |r| (ctx, m, r)))
        })
        .collect();
    let results: Vec<(anyhow::Result<RunRecord>, f64)> = jobs
        .par_iter()
        .map(|&(ctx, model, run)| {
            let t = Instant::now();
            let res = run_one(spec, cell, ctx, model, run);
            (res, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (&(ctx, model, run), (res, seconds)) in jobs.iter().zip(results) {
        timings.push(RunTiming {
            graph: ctx.index,
            model,
            run,
            seconds,
        });
        match res {
            Ok(r) => records.push(r),
            Err(e) => failures.push(Failure {
                cell_id: id.clone(),
                graph: ctx.index,
                model: Some(model),
                run: Some(run),
                error: format!("{e:#}"),
            }),
        }
    }
    write_cell_summary(cell_dir, &records)?;
    Ok((records, failures, timings))
}

/// Runs (or resumes) a sweep. Cells already marked complete in an existing
/// manifest are skipped; aggregates are rebuilt from every record on disk.
pub fn run_sweep(spec: &SweepSpec) -> CliResult<SweepOutcome> {
    spec.validate()?;
    let root = spec.root();
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let mut manifest = match Manifest::load(&root)? {
        Some(m) if m.spec.fingerprint() != spec.fingerprint() => {
            return Err(config_err(format!(
                "{} holds a sweep with different settings; pick another sweep_id",
                root.display()
            )));
        }
        Some(mut m) => {
            m.spec = spec.clone();
            m
        }
        None => Manifest {
            spec: spec.clone(),
            created_unix: unix_now(),
            updated_unix: 0,
            cells: Vec::new(),
        },
    };
    let resolved = toml::to_string(spec).context("serializing config")?;
    fs::write(root.join("config.toml"), resolved)?;

    let workers = if spec.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        spec.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;

    let cells = spec.cells();
    let (mut cells_run, mut cells_skipped) = (0, 0);
    for (i, cell) in cells.iter().enumerate() {
        let id = cell.id();
        if manifest.completed(&id) {
            cells_skipped += 1;
            continue;
        }
        let started = Instant::now();
        let started_unix = unix_now();
        let cell_dir = root.join("cells").join(&id);
        let (records, failures, timings) = pool
            .install(|| run_cell(spec, cell, &cell_dir))
            .with_context(|| format!("cell {id}"))?;
        let seconds = started.elapsed().as_secs_f64();
        eprintln!(
            "[{}/{}] {id}: {} runs ok, {} failed, {seconds:.1}s",
            i + 1,
            cells.len(),
            records.len(),
            failures.len()
        );
        manifest.cells.retain(|c| c.id != id);
        manifest.cells.push(CellEntry {
            id,
            cell: *cell,
            completed: true,
            started_unix,
            seconds,
            runs_ok: records.len(),
            failures,
            timings,
        });
        manifest.save(&root)?;
        cells_run += 1;
    }

    let records = load_records(spec)?;
    write_aggregates(spec, &records)?;
    manifest.save(&root)?;
    let failures: Vec<Failure> = manifest.failures().cloned().collect();
    Ok(SweepOutcome {
        root,
        records,
        failures,
        cells_run,
        cells_skipped,
    })
}

impl From<FairnessError> for CliError {
    fn from(e: FairnessError) -> Self {
        CliError::Runtime(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> SweepSpec {
        SweepOverrides {
            out_dir: Some(dir.to_path_buf()),
            h_c: Some(vec![0.3]),
            h_s: Some(vec![0.9]),
            graphs_per_cell: Some(1),
            runs_per_model: Some(1),
            n_nodes: Some(40),
            edges_per_node: Some(2),
            hyper: HyperOverrides {
                epochs: Some(5),
                ..Default::default()
            },
            ..Default::default()
        }
        .resolve(SweepKind::Sweep)
        .unwrap()
    }

    #[test]
    fn presets_and_counts() {
        let quick = SweepOverrides {
            preset: Some(Preset::Quick),
            ..Default::default()
        }
        .resolve(SweepKind::Sweep)
        .unwrap();
        assert_eq!(quick.total_runs(), 300);
        let full = SweepOverrides::default().resolve(SweepKind::Sweep).unwrap();
        assert_eq!(full.total_runs(), 3000);
        let bias = SweepOverrides::default().resolve(SweepKind::BiasSweep).unwrap();
        assert_eq!((bias.h_s.clone(), bias.e.len()), (vec![0.9], 5));
    }

    #[test]
    fn bad_specs_are_config_errors() {
        let bad = SweepOverrides {
            h_s: Some(vec![]),
            ..Default::default()
        };
        assert_eq!(bad.resolve(SweepKind::Sweep).unwrap_err().exit_code(), 1);
        let bad = SweepOverrides {
            e: Some(vec![1.5]),
            ..Default::default()
        };
        assert!(bad.resolve(SweepKind::Sweep).is_err());
    }

    #[test]
    fn seeds_differ_per_cell_and_graph() {
        let spec = SweepOverrides::default().resolve(SweepKind::Sweep).unwrap();
        let mut seeds: Vec<u64> = spec
            .cells()
            .iter()
            .flat_map(|c| (0..spec.graphs_per_cell).map(|g| spec.graph_seed(c, g)))
            .collect();
        let n = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
    }

    #[test]
    fn config_file_keys_are_flat() {
        let file: SweepOverrides =
            crate::config::parse("preset = \"quick\"\nh_c = [0.1]\nepochs = 7\nmodels = [\"gcn\", \"h2gcn\"]").unwrap();
        let spec = SweepOverrides::default().merged(&file).resolve(SweepKind::Sweep).unwrap();
        assert_eq!((spec.graphs_per_cell, spec.hyper.epochs), (3, 7));
        assert_eq!(spec.models, vec![ModelFamily::Gcn, ModelFamily::H2gcn]);
        assert!(crate::config::parse::<SweepOverrides>("epoch = 7").is_err());
    }

    #[test]
    fn tiny_sweep_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny(dir.path());
        let first = run_sweep(&spec).unwrap();
        assert_eq!(first.records.len(), 4);
        assert!(first.failures.is_empty());
        let root = spec.root();
        for f in ["manifest.json", "config.toml", "aggregate/fig2_grid.csv", "aggregate/fig3_diff.csv"] {
            assert!(root.join(f).exists(), "{f}");
        }
        let again = run_sweep(&spec).unwrap();
        assert_eq!((again.cells_run, again.cells_skipped), (0, 1));
        assert_eq!(again.records, first.records);
        let mut other = spec.clone();
        other.hyper.epochs = 6;
        assert_eq!(run_sweep(&other).unwrap_err().exit_code(), 1);
    }
}
