use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{fairness_report, FairnessReport};
use super::FairnessError;
use crate::graph::{Labels, NodeAttributes, NodeId};
use crate::homophily::{bin_index, round_edge, LocalHomophilyProfile};

pub const BIN_WIDTH: f64 = 0.2;
pub const N_BINS: usize = 5;

/// Cell of the 5x5 lattice over (local class homophily, local sensitive
/// homophily).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HomophilyBin {
    pub class_bin: usize,
    pub sens_bin: usize,
}

impl HomophilyBin {
    pub fn of(class_hom: f64, sens_hom: f64) -> Self {
        Self {
            class_bin: bin_index(class_hom, BIN_WIDTH),
            sens_bin: bin_index(sens_hom, BIN_WIDTH),
        }
    }

    /// All 25 bins, class-major.
    pub fn all() -> impl Iterator<Item = HomophilyBin> {
        (0..N_BINS).flat_map(|class_bin| (0..N_BINS).map(move |sens_bin| HomophilyBin { class_bin, sens_bin }))
    }

    /// `(lo, hi)` edges of bin index `i`.
    pub fn edges(i: usize) -> (f64, f64) {
        (round_edge(i as f64 * BIN_WIDTH), round_edge((i + 1) as f64 * BIN_WIDTH))
    }

    pub(crate) fn csv_prefix(&self) -> String {
        let (clo, chi) = Self::edges(self.class_bin);
        let (slo, shi) = Self::edges(self.sens_bin);
        format!("{clo},{chi},{slo},{shi}")
    }
}

pub(crate) fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stratification {
    pub bins: BTreeMap<HomophilyBin, Vec<NodeId>>,
    /// Nodes whose k-hop subgraph has no edges.
    pub undefined: Vec<NodeId>,
}

fn check_profile(profile: &LocalHomophilyProfile, n: usize) -> Result<(), FairnessError> {
    if profile.n_nodes() != n {
        return Err(FairnessError::LengthMismatch {
            what: "homophily profile",
            got: profile.n_nodes(),
            expected: n,
        });
    }
    Ok(())
}

/// Partitions `eval_nodes` by their k-hop (class, sensitive) homophily bin.
pub fn stratify(
    profile: &LocalHomophilyProfile,
    k: usize,
    eval_nodes: &[NodeId],
) -> Result<Stratification, FairnessError> {
    let mut out = Stratification::default();
    for &u in eval_nodes {
        match (profile.class_hom(u, k)?, profile.sens_hom(u, k)?) {
            (Some(c), Some(s)) => out.bins.entry(HomophilyBin::of(c, s)).or_default().push(u),
            _ => out.undefined.push(u),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: HomophilyBin,
    pub n_nodes: usize,
    pub report: FairnessReport,
}

/// Per-bin reports for the populated bins, in bin order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub k: usize,
    pub bins: Vec<BinReport>,
    pub undefined_node_count: usize,
}

impl StratifiedReport {
    pub fn get(&self, bin: HomophilyBin) -> Option<&BinReport> {
        self.bins
            .binary_search_by(|b| b.bin.cmp(&bin))
            .ok()
            .map(|i| &self.bins[i])
    }

    pub fn evaluated_nodes(&self) -> usize {
        self.bins.iter().map(|b| b.n_nodes).sum::<usize>() + self.undefined_node_count
    }

    /// One row per lattice cell; empty bins and undefined gaps leave blank
    /// metric cells.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("class_bin_lo,class_bin_hi,sens_bin_lo,sens_bin_hi,n_nodes,f1,acc,delta_sp,delta_eo\n");
        for bin in HomophilyBin::all() {
            let prefix = bin.csv_prefix();
            match self.get(bin) {
                Some(b) => {
                    let r = &b.report;
                    let _ = writeln!(
                        out,
                        "{prefix},{},{},{},{},{}",
                        b.n_nodes,
                        r.f1,
                        r.accuracy,
                        opt_cell(r.delta_sp),
                        opt_cell(r.delta_eo)
                    );
                }
                None => {
                    let _ = writeln!(out, "{prefix},0,,,,");
                }
            }
        }
        out
    }
}

pub fn stratified_report(
    pred: &Labels,
    attrs: &NodeAttributes,
    profile: &LocalHomophilyProfile,
    k: usize,
    eval_nodes: &[NodeId],
) -> Result<StratifiedReport, FairnessError> {
    check_profile(profile, attrs.n_nodes())?;
    let strata = stratify(profile, k, eval_nodes)?;
    let bins = strata
        .bins
        .into_iter()
        .map(|(bin, nodes)| BinReport {
            bin,
            n_nodes: nodes.len(),
            report: fairness_report(pred, attrs, &nodes),
        })
        .collect();
    Ok(StratifiedReport {
        k,
        bins,
        undefined_node_count: strata.undefined.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceBin {
    pub class_bin: usize,
    pub n_nodes: usize,
    pub report: FairnessReport,
}

/// Nodes with high local sensitive homophily, binned by class homophily only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighHsSlice {
    pub threshold: f64,
    pub k: usize,
    pub nodes: Vec<NodeId>,
    /// Fraction of the evaluated nodes that fall in the slice.
    pub coverage: f64,
    pub overall: FairnessReport,
    pub bins: Vec<SliceBin>,
}

impl HighHsSlice {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_bin_lo,class_bin_hi,n_nodes,f1,acc,delta_sp,delta_eo\n");
        for b in &self.bins {
            let (lo, hi) = HomophilyBin::edges(b.class_bin);
            let r = &b.report;
            let _ = writeln!(
                out,
                "{lo},{hi},{},{},{},{},{}",
                b.n_nodes,
                r.f1,
                r.accuracy,
                opt_cell(r.delta_sp),
                opt_cell(r.delta_eo)
            );
        }
        out
    }
}

/// Keeps nodes whose k-hop sensitive homophily is strictly above `threshold`.
pub fn high_hs_slice(
    profile: &LocalHomophilyProfile,
    pred: &Labels,
    attrs: &NodeAttributes,
    threshold: f64,
    k: usize,
    eval_nodes: &[NodeId],
) -> Result<HighHsSlice, FairnessError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(FairnessError::BadThreshold(threshold));
    }
    check_profile(profile, attrs.n_nodes())?;
    let mut by_class: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    let mut nodes = Vec::new();
    for &u in eval_nodes {
        if let (Some(s), Some(c)) = (profile.sens_hom(u, k)?, profile.class_hom(u, k)?) {
            if s > threshold {
                nodes.push(u);
                by_class.entry(bin_index(c, BIN_WIDTH)).or_default().push(u);
            }
        }
    }
    if nodes.is_empty() {
        return Err(FairnessError::EmptySlice(threshold));
    }
    let bins = by_class
        .into_iter()
        .map(|(class_bin, members)| SliceBin {
            class_bin,
            n_nodes: members.len(),
            report: fairness_report(pred, attrs, &members),
        })
        .collect();
    Ok(HighHsSlice {
        threshold,
        k,
        coverage: nodes.len() as f64 / eval_nodes.len() as f64,
        overall: fairness_report(pred, attrs, &nodes),
        nodes,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::homophily::homophily_profile;
    use crate::nn::Tensor;

    #[test]
    fn bin_arithmetic() {
        assert_eq!(HomophilyBin::of(0.95, 0.1), HomophilyBin { class_bin: 4, sens_bin: 0 });
        assert_eq!(HomophilyBin::of(1.0, 0.0), HomophilyBin { class_bin: 4, sens_bin: 0 });
        assert_eq!(HomophilyBin::of(0.6, 0.4).class_bin, 3);
        assert_eq!(HomophilyBin::all().count(), 25);
        assert_eq!(HomophilyBin::edges(2), (0.4, 0.6));
    }

    fn clique_attrs() -> (Graph, NodeAttributes) {
        // K4 with one isolated node: every clique node sees the whole clique
        let g = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let class = Labels::new(vec![1, 1, 0, 0, 1]).unwrap();
        let sens = Labels::new(vec![1, 0, 1, 0, 0]).unwrap();
        let attrs = NodeAttributes::new(class, sens, Tensor::zeros(5, 1)).unwrap();
        (g, attrs)
    }

    #[test]
    fn single_bin_matches_global_metrics() {
        let (g, attrs) = clique_attrs();
        let profile = homophily_profile(&g, &attrs.class, &attrs.sensitive).unwrap();
        let pred = Labels::new(vec![1, 0, 1, 0, 1]).unwrap();
        let nodes: Vec<_> = (0..5).collect();
        let rep = stratified_report(&pred, &attrs, &profile, 1, &nodes).unwrap();
        assert_eq!(rep.bins.len(), 1);
        assert_eq!(rep.undefined_node_count, 1);
        assert_eq!(rep.evaluated_nodes(), 5);
        let only = &rep.bins[0];
        // 2 of 6 edges agree on class and on sens
        assert_eq!(only.bin, HomophilyBin { class_bin: 1, sens_bin: 1 });
        assert_eq!(only.report, fairness_report(&pred, &attrs, &[0, 1, 2, 3]));
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 26);
        assert!(csv.contains("0,0.2,0,0.2,0,,,,"));
    }

    #[test]
    fn undefined_gaps_stay_blank() {
        let (g, attrs) = clique_attrs();
        let profile = homophily_profile(&g, &attrs.class, &attrs.sensitive).unwrap();
        let pred = Labels::new(vec![1, 0, 1, 0, 1]).unwrap();
        // nodes 0 and 2 are both s = 1
        let rep = stratified_report(&pred, &attrs, &profile, 1, &[0, 2]).unwrap();
        assert_eq!(rep.bins[0].report.delta_sp, None);
        assert!(rep.to_csv().contains(",2,0.6666666666666666,0.5,,\n"));
    }

    #[test]
    fn slice_is_strict() {
        let (g, attrs) = clique_attrs();
        let profile = homophily_profile(&g, &attrs.class, &attrs.sensitive).unwrap();
        let pred = attrs.class.clone();
        let nodes: Vec<_> = (0..5).collect();
        let err = high_hs_slice(&profile, &pred, &attrs, 1.0, 1, &nodes).unwrap_err();
        assert_eq!(err, FairnessError::EmptySlice(1.0));
        let s = high_hs_slice(&profile, &pred, &attrs, 0.3, 1, &nodes).unwrap();
        assert_eq!(s.nodes, vec![0, 1, 2, 3]);
        assert_eq!(s.coverage, 0.8);
        assert!(high_hs_slice(&profile, &pred, &attrs, 1.5, 1, &nodes).is_err());
    }
}
