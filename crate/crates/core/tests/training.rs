use hetfair_core::fairness::f1_binary;
use hetfair_core::models::{forward, make_splits, train, HyperParams, ModelConfig, ModelFamily, Params};
use hetfair_core::nn::{build_propagation_matrices, Tensor};
use hetfair_core::seed::rng_from;
use hetfair_core::synth::{generate, GeneratorConfig};
use hetfair_core::{Graph, Labels, NodeAttributes};
use rand::seq::SliceRandom;
use rand::Rng as _;

#[test]
fn noise_labels_are_not_learnable() {
    let cfg = GeneratorConfig {
        n_nodes: 400,
        edges_per_node: 4,
        seed: 21,
        ..GeneratorConfig::default()
    };
    let (g, attrs) = generate(&cfg).unwrap();
    let mut rng = rng_from(99);
    let noise = Labels::from_bools((0..400).map(|_| rng.random::<bool>()));
    let attrs = NodeAttributes::new(noise, attrs.sensitive, attrs.features).unwrap();
    let splits = make_splits(400, 2).unwrap();
    let hp = HyperParams {
        epochs: 100,
        ..HyperParams::default()
    };
    let out = train(&g, &attrs, &splits, &ModelConfig::new(ModelFamily::Gcn, &hp, 5)).unwrap();
    let pred = &out.predictions.predicted_class;
    let observed = f1_binary(pred, &attrs.class, &splits.test);
    // permutation baseline: shuffle the test labels against the predictions
    let mut truth: Vec<u8> = attrs.class.as_slice().to_vec();
    let mut test_labels: Vec<u8> = splits.test.iter().map(|&u| truth[u]).collect();
    let mut null = Vec::new();
    for _ in 0..999 {
        test_labels.shuffle(&mut rng);
        for (&u, &c) in splits.test.iter().zip(&test_labels) {
            truth[u] = c;
        }
        null.push(f1_binary(pred, &Labels::new(truth.clone()).unwrap(), &splits.test));
    }
    let above = null.iter().filter(|&&f| f >= observed).count();
    let p = (above + 1) as f64 / 1000.0;
    assert!(p > 0.01, "observed F1 {observed} beats the permutation null (p = {p})");
}

#[test]
fn decoupled_models_use_only_the_ego_path_without_neighbors() {
    let g = Graph::empty(6);
    let ops = build_propagation_matrices(&g);
    let mut rng = rng_from(4);
    let x = Tensor::from_vec(6, 2, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    for family in [ModelFamily::Sage, ModelFamily::H2gcn] {
        let mut p = Params::init(family, 2, 4, &mut rng);
        let before = forward(&p, &x, &ops, 2).unwrap();
        // scramble every weight that only reads neighbor aggregates
        match family {
            ModelFamily::Sage => {
                for r in 2..4 {
                    for c in 0..4 {
                        p.tensors[0].set(r, c, 7.0);
                    }
                }
                for r in 4..8 {
                    for c in 0..4 {
                        p.tensors[1].set(r, c, -3.0);
                    }
                }
            }
            _ => {
                for r in 4..12 {
                    for c in 0..2 {
                        p.tensors[1].set(r, c, 5.0);
                    }
                }
            }
        }
        assert_eq!(forward(&p, &x, &ops, 2).unwrap(), before, "{family}");
    }
}

#[test]
fn homophilous_models_mix_neighbors_in() {
    // GCN output of an isolated node differs from a connected one with equal features
    let g = Graph::from_edges(3, [(0, 1)]).unwrap();
    let ops = build_propagation_matrices(&g);
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 2.0], vec![1.0, 0.0]]).unwrap();
    let p = Params::init(ModelFamily::Sgc, 2, 4, &mut rng_from(1));
    let z = forward(&p, &x, &ops, 2).unwrap();
    assert_ne!(z.row(0), z.row(2));
}
