use std::collections::BTreeSet;

use hetfair_core::homophily::{
    global_homophily, homophily_histogram, homophily_profile, local_homophily, Attribute,
};
use hetfair_core::{Graph, Labels};
use proptest::prelude::*;

/// Nodes within `k` hops, by repeated frontier expansion over the raw edge list.
fn ball(n: usize, edges: &BTreeSet<(usize, usize)>, u: usize, k: usize) -> Vec<bool> {
    let mut inside = vec![false; n];
    inside[u] = true;
    for _ in 0..k {
        let mut next = inside.clone();
        for &(a, b) in edges {
            if inside[a] {
                next[b] = true;
            }
            if inside[b] {
                next[a] = true;
            }
        }
        inside = next;
    }
    inside
}

fn ratio(edges: impl Iterator<Item = (usize, usize)>, labels: &[u8]) -> Option<f64> {
    let (mut same, mut total) = (0usize, 0usize);
    for (a, b) in edges {
        total += 1;
        same += usize::from(labels[a] == labels[b]);
    }
    (total > 0).then(|| same as f64 / total as f64)
}

fn naive_local(n: usize, edges: &BTreeSet<(usize, usize)>, labels: &[u8], u: usize, k: usize) -> Option<f64> {
    let inside = ball(n, edges, u, k);
    ratio(edges.iter().copied().filter(|&(a, b)| inside[a] && inside[b]), labels)
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<u8>, Vec<u8>)> {
    (1usize..=50).prop_flat_map(|n| {
        let pairs = prop::collection::vec((0..n, 0..n), 0..(3 * n));
        let labels = prop::collection::vec(0u8..=1, n);
        (Just(n), pairs, labels.clone(), labels)
    })
}

fn normalize(pairs: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    pairs
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force((n, pairs, class, sens) in graph_strategy()) {
        let edges = normalize(&pairs);
        let g = Graph::from_edges(n, edges.iter().copied()).unwrap();
        let (c, s) = (Labels::new(class.clone()).unwrap(), Labels::new(sens.clone()).unwrap());
        prop_assert_eq!(global_homophily(&g, &c).ok(), ratio(edges.iter().copied(), &class));
        let profile = homophily_profile(&g, &c, &s).unwrap();
        for u in 0..n {
            for k in [1, 2] {
                let want_c = naive_local(n, &edges, &class, u, k);
                let want_s = naive_local(n, &edges, &sens, u, k);
                prop_assert_eq!(local_homophily(&g, &c, u, k).unwrap(), want_c);
                prop_assert_eq!(profile.class_hom(u, k).unwrap(), want_c);
                prop_assert_eq!(profile.sens_hom(u, k).unwrap(), want_s);
            }
        }
    }

    #[test]
    fn label_flip_is_invisible((n, pairs, class, _s) in graph_strategy()) {
        let g = Graph::from_edges(n, normalize(&pairs)).unwrap();
        let c = Labels::new(class).unwrap();
        let flipped = c.flipped();
        prop_assert_eq!(global_homophily(&g, &c).ok(), global_homophily(&g, &flipped).ok());
        let a = homophily_profile(&g, &c, &c).unwrap();
        let b = homophily_profile(&g, &flipped, &flipped).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn histogram_partitions_nodes((n, pairs, class, sens) in graph_strategy()) {
        let g = Graph::from_edges(n, normalize(&pairs)).unwrap();
        let profile = homophily_profile(&g, &Labels::new(class).unwrap(), &Labels::new(sens).unwrap()).unwrap();
        for k in [1, 2] {
            for which in [Attribute::Class, Attribute::Sensitive] {
                let h = homophily_histogram(&profile, which, k, 0.2).unwrap();
                prop_assert_eq!(h.counts.len(), 5);
                prop_assert_eq!(h.defined_total() + h.undefined_count, n);
            }
        }
    }

    #[test]
    fn ratios_stay_in_unit_interval((n, pairs, class, sens) in graph_strategy()) {
        let g = Graph::from_edges(n, normalize(&pairs)).unwrap();
        let profile = homophily_profile(&g, &Labels::new(class).unwrap(), &Labels::new(sens).unwrap()).unwrap();
        for k in [1, 2] {
            for v in profile.values(Attribute::Class, k).unwrap().iter().flatten() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}

#[test]
fn isolated_node_is_undefined() {
    let g = Graph::from_edges(3, [(0, 1)]).unwrap();
    let c = Labels::new(vec![0, 1, 1]).unwrap();
    assert_eq!(local_homophily(&g, &c, 2, 1).unwrap(), None);
    assert_eq!(local_homophily(&g, &c, 0, 1).unwrap(), Some(0.0));
}
