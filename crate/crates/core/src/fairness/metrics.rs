use serde::{Deserialize, Serialize};

use crate::graph::{Labels, NodeAttributes, NodeId};

/// Positive-prediction rate of each sensitive group over `nodes`, or `None`
/// when a group is empty.
fn group_rates<'a>(
    pred: &Labels,
    sens: &Labels,
    nodes: impl Iterator<Item = &'a NodeId>,
) -> Option<f64> {
    let mut total = [0usize; 2];
    let mut positive = [0usize; 2];
    for &u in nodes {
        let s = sens.get(u) as usize;
        total[s] += 1;
        positive[s] += pred.get(u) as usize;
    }
    if total[0] == 0 || total[1] == 0 {
        return None;
    }
    let rate = |g: usize| positive[g] as f64 / total[g] as f64;
    Some((rate(1) - rate(0)).abs())
}

/// |P(ŷ=1 | s=1) - P(ŷ=1 | s=0)| over `subset`.
pub fn statistical_parity(pred: &Labels, sens: &Labels, subset: &[NodeId]) -> Option<f64> {
    group_rates(pred, sens, subset.iter())
}

/// Statistical parity restricted to nodes whose true class is 1.
pub fn equal_opportunity(
    pred: &Labels,
    truth: &Labels,
    sens: &Labels,
    subset: &[NodeId],
) -> Option<f64> {
    group_rates(pred, sens, subset.iter().filter(|&&u| truth.get(u) == 1))
}

/// F1 for the positive class 1. Zero when precision + recall is zero, which
/// includes an empty subset.
pub fn f1_binary(pred: &Labels, truth: &Labels, subset: &[NodeId]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for &u in subset {
        match (pred.get(u), truth.get(u)) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fneg += 1,
            _ => {}
        }
    }
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn)
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

/// Fraction of correct predictions; zero on an empty subset.
pub fn accuracy(pred: &Labels, truth: &Labels, subset: &[NodeId]) -> f64 {
    if subset.is_empty() {
        return 0.0;
    }
    let correct = subset.iter().filter(|&&u| pred.get(u) == truth.get(u)).count();
    correct as f64 / subset.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub f1: f64,
    pub accuracy: f64,
    pub delta_sp: Option<f64>,
    pub delta_eo: Option<f64>,
    /// Node counts indexed `[sensitive][class]`.
    pub group_counts: [[usize; 2]; 2],
}

impl FairnessReport {
    pub fn n_nodes(&self) -> usize {
        self.group_counts.iter().flatten().sum()
    }
}

pub fn fairness_report(pred: &Labels, attrs: &NodeAttributes, subset: &[NodeId]) -> FairnessReport {
    let mut group_counts = [[0; 2]; 2];
    for &u in subset {
        group_counts[attrs.sensitive.get(u) as usize][attrs.class.get(u) as usize] += 1;
    }
    FairnessReport {
        f1: f1_binary(pred, &attrs.class, subset),
        accuracy: accuracy(pred, &attrs.class, subset),
        delta_sp: statistical_parity(pred, &attrs.sensitive, subset),
        delta_eo: equal_opportunity(pred, &attrs.class, &attrs.sensitive, subset),
        group_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: &[u8]) -> Labels {
        Labels::new(v.to_vec()).unwrap()
    }

    fn all(n: usize) -> Vec<NodeId> {
        (0..n).collect()
    }

    #[test]
    fn parity_counts() {
        let s = l(&[1, 1, 1, 0, 0]);
        let p = l(&[1, 0, 1, 1, 0]);
        let sp = statistical_parity(&p, &s, &all(5)).unwrap();
        assert!((sp - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(statistical_parity(&p, &s, &[0, 1, 2]), None);
        assert_eq!(statistical_parity(&l(&[1, 1, 0, 0]), &l(&[1, 0, 1, 0]), &all(4)), Some(0.0));
    }

    #[test]
    fn opportunity_counts() {
        let s = l(&[1, 1, 0, 0]);
        let c = l(&[1, 1, 1, 1]);
        let p = l(&[1, 0, 1, 1]);
        assert_eq!(equal_opportunity(&p, &c, &s, &all(4)), Some(0.5));
        assert_eq!(equal_opportunity(&c, &c, &s, &all(4)), Some(0.0));
        assert_eq!(equal_opportunity(&p, &l(&[0, 0, 0, 0]), &s, &all(4)), None);
    }

    #[test]
    fn f1_counts() {
        let p = l(&[1, 1, 0, 0]);
        let c = l(&[1, 0, 1, 0]);
        assert_eq!(f1_binary(&p, &c, &all(4)), 0.5);
        assert_eq!(f1_binary(&c, &c, &all(4)), 1.0);
        assert_eq!(f1_binary(&l(&[0, 0, 0, 0]), &c, &all(4)), 0.0);
        assert_eq!(accuracy(&p, &c, &all(4)), 0.5);
        assert_eq!(accuracy(&p, &c, &[]), 0.0);
    }
}
