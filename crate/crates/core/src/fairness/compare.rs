use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::strata::{opt_cell, HomophilyBin, StratifiedReport};
use super::FairnessError;

/// Mean over the reports where a value was defined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanCell {
    pub mean: Option<f64>,
    /// Reports that contributed a value.
    pub count: usize,
    /// Reports that populated the bin but left this value undefined.
    pub excluded: usize,
}

impl MeanCell {
    fn from_values(values: impl Iterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut count, mut excluded) = (0.0, 0, 0);
        for v in values {
            match v {
                Some(x) => {
                    sum += x;
                    count += 1;
                }
                None => excluded += 1,
            }
        }
        let mean = (count > 0).then(|| sum / count as f64);
        Self {
            mean,
            count,
            excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateBin {
    pub bin: HomophilyBin,
    /// Nodes summed over all reports.
    pub n_nodes: usize,
    pub f1: MeanCell,
    pub accuracy: MeanCell,
    pub delta_sp: MeanCell,
    pub delta_eo: MeanCell,
}

/// Per-bin means over a list of stratified reports; all 25 bins, class-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub k: usize,
    pub n_reports: usize,
    pub bins: Vec<AggregateBin>,
}

fn common_k(reports: &[&StratifiedReport]) -> Result<usize, FairnessError> {
    let k = reports.first().map_or(1, |r| r.k);
    match reports.iter().find(|r| r.k != k) {
        Some(r) => Err(FairnessError::MixedHops(k, r.k)),
        None => Ok(k),
    }
}

pub fn aggregate_reports(reports: &[&StratifiedReport]) -> Result<AggregateReport, FairnessError> {
    let k = common_k(reports)?;
    let bins = HomophilyBin::all()
        .map(|bin| {
            let present: Vec<_> = reports.iter().filter_map(|r| r.get(bin)).collect();
            let cell = |f: &dyn Fn(&super::FairnessReport) -> Option<f64>| {
                MeanCell::from_values(present.iter().map(|b| f(&b.report)))
            };
            AggregateBin {
                bin,
                n_nodes: present.iter().map(|b| b.n_nodes).sum(),
                f1: cell(&|r| Some(r.f1)),
                accuracy: cell(&|r| Some(r.accuracy)),
                delta_sp: cell(&|r| r.delta_sp),
                delta_eo: cell(&|r| r.delta_eo),
            }
        })
        .collect();
    Ok(AggregateReport {
        k,
        n_reports: reports.len(),
        bins,
    })
}

impl AggregateReport {
    pub fn get(&self, bin: HomophilyBin) -> &AggregateBin {
        &self.bins[bin.class_bin * super::N_BINS + bin.sens_bin]
    }

    pub fn csv_header() -> &'static str {
        "class_bin_lo,class_bin_hi,sens_bin_lo,sens_bin_hi,n_nodes,f1,acc,delta_sp,delta_eo,n_f1,n_sp,n_eo,excluded_sp,excluded_eo"
    }

    /// Rows without a header, each prefixed by `prefix` when it is nonempty.
    pub fn csv_rows(&self, prefix: &str) -> String {
        let mut out = String::new();
        for b in &self.bins {
            if !prefix.is_empty() {
                out.push_str(prefix);
                out.push(',');
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                b.bin.csv_prefix(),
                b.n_nodes,
                opt_cell(b.f1.mean),
                opt_cell(b.accuracy.mean),
                opt_cell(b.delta_sp.mean),
                opt_cell(b.delta_eo.mean),
                b.f1.count,
                b.delta_sp.count,
                b.delta_eo.count,
                b.delta_sp.excluded,
                b.delta_eo.excluded
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::csv_header(), self.csv_rows(""))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBin {
    pub bin: HomophilyBin,
    pub het: AggregateBin,
    pub hom: AggregateBin,
    /// Heterophilous mean minus homophilous mean, where both are defined.
    pub f1_diff: Option<f64>,
    pub delta_sp_diff: Option<f64>,
    pub delta_eo_diff: Option<f64>,
}

impl ComparisonBin {
    /// (hom - het) / hom for Δ_SP; positive means the heterophilous family is
    /// fairer. `None` when undefined or the homophilous gap is zero.
    pub fn relative_sp_improvement(&self) -> Option<f64> {
        let (het, hom) = (self.het.delta_sp.mean?, self.hom.delta_sp.mean?);
        (hom > 0.0).then(|| (hom - het) / hom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignComparison {
    pub k: usize,
    pub bins: Vec<ComparisonBin>,
}

fn diff(het: &MeanCell, hom: &MeanCell) -> Option<f64> {
    Some(het.mean? - hom.mean?)
}

/// Per-bin heterophilous-minus-homophilous differences of the family means.
pub fn design_comparison(
    het_reports: &[&StratifiedReport],
    hom_reports: &[&StratifiedReport],
) -> Result<DesignComparison, FairnessError> {
    let het = aggregate_reports(het_reports)?;
    let hom = aggregate_reports(hom_reports)?;
    if !het_reports.is_empty() && !hom_reports.is_empty() && het.k != hom.k {
        return Err(FairnessError::MixedHops(het.k, hom.k));
    }
    let bins: Vec<ComparisonBin> = het
        .bins
        .into_iter()
        .zip(hom.bins)
        .map(|(het, hom)| ComparisonBin {
            bin: het.bin,
            f1_diff: diff(&het.f1, &hom.f1),
            delta_sp_diff: diff(&het.delta_sp, &hom.delta_sp),
            delta_eo_diff: diff(&het.delta_eo, &hom.delta_eo),
            het,
            hom,
        })
        .collect();
    if bins.iter().all(|b| b.f1_diff.is_none()) {
        return Err(FairnessError::NoOverlap);
    }
    Ok(DesignComparison { k: het.k, bins })
}

impl DesignComparison {
    pub fn get(&self, bin: HomophilyBin) -> &ComparisonBin {
        &self.bins[bin.class_bin * super::N_BINS + bin.sens_bin]
    }

    pub fn csv_header() -> &'static str {
        "class_bin_lo,class_bin_hi,sens_bin_lo,sens_bin_hi,f1_diff,delta_sp_diff,delta_eo_diff,\
         het_f1,hom_f1,het_delta_sp,hom_delta_sp,het_delta_eo,hom_delta_eo,\
         het_n_sp,hom_n_sp,het_n_eo,hom_n_eo"
    }

    pub fn csv_rows(&self, prefix: &str) -> String {
        let mut out = String::new();
        for b in &self.bins {
            if !prefix.is_empty() {
                out.push_str(prefix);
                out.push(',');
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                b.bin.csv_prefix(),
                opt_cell(b.f1_diff),
                opt_cell(b.delta_sp_diff),
                opt_cell(b.delta_eo_diff),
                opt_cell(b.het.f1.mean),
                opt_cell(b.hom.f1.mean),
                opt_cell(b.het.delta_sp.mean),
                opt_cell(b.hom.delta_sp.mean),
                opt_cell(b.het.delta_eo.mean),
                opt_cell(b.hom.delta_eo.mean),
                b.het.delta_sp.count,
                b.hom.delta_sp.count,
                b.het.delta_eo.count,
                b.hom.delta_eo.count
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::csv_header(), self.csv_rows(""))
    }
}
