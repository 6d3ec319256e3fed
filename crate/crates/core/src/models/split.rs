use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::graph::NodeId;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Disjoint train/validation/test node sets covering every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    assignment: Vec<Split>,
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl SplitMasks {
    pub fn from_assignment(assignment: Vec<Split>) -> Self {
        let pick = |which| {
            assignment
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == which)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            train: pick(Split::Train),
            val: pick(Split::Val),
            test: pick(Split::Test),
            assignment,
        }
    }

    pub fn split_of(&self, u: NodeId) -> Split {
        self.assignment[u]
    }

    pub fn n_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn all_nodes(&self) -> Vec<NodeId> {
        (0..self.n_nodes()).collect()
    }
}

/// Uniform random 50/25/25 partition. Sizes are `round(n/2)`, `round(n/4)`
/// and the remainder.
pub fn make_splits(n: usize, seed: u64) -> Result<SplitMasks, ModelError> {
    if n < 4 {
        return Err(ModelError::TooFewNodes(n));
    }
    let n_train = (n + 1) / 2;
    let n_val = (n + 2) / 4;
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let mut assignment = vec![Split::Test; n];
    for (rank, &u) in order.iter().enumerate() {
        assignment[u] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitMasks::from_assignment(assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standard_sizes() {
        let s = make_splits(1000, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (500, 250, 250));
        let s = make_splits(4, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2, 1, 1));
        assert!(make_splits(3, 1).is_err());
    }

    #[test]
    fn seeded() {
        assert_eq!(make_splits(100, 5).unwrap(), make_splits(100, 5).unwrap());
        assert_ne!(make_splits(100, 5).unwrap(), make_splits(100, 6).unwrap());
    }

    proptest! {
        #[test]
        fn partition_within_one_node(n in 4usize..2000, seed in any::<u64>()) {
            let s = make_splits(n, seed).unwrap();
            let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let nf = n as f64;
            prop_assert!((s.train.len() as f64 - nf * 0.5).abs() <= 1.0);
            prop_assert!((s.val.len() as f64 - nf * 0.25).abs() <= 1.0);
            prop_assert!((s.test.len() as f64 - nf * 0.25).abs() <= 1.0);
        }
    }
}
