use std::fmt::Write as _;

use super::arch::{forward_on_tape, Dropout};
use super::{DesignFamily, HyperParams, ModelConfig, ModelError, ModelFamily, Params, SplitMasks};
use crate::fairness::f1_binary;
use crate::graph::{Graph, Labels, NodeAttributes};
use crate::nn::{build_propagation_matrices, softmax_rows, Adam, NnError, PropagationOperators, Tape, Tensor};
use crate::seed::{derive, rng_from, tag_part};

/// Hard predictions and class-1 probabilities for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub predicted_class: Labels,
    pub prob_class1: Vec<f64>,
}

impl Predictions {
    /// Thresholds class-1 probabilities at 0.5.
    pub fn from_probs(prob_class1: Vec<f64>) -> Self {
        let predicted_class = Labels::from_bools(prob_class1.iter().map(|&p| p >= 0.5));
        Self {
            predicted_class,
            prob_class1,
        }
    }

    pub fn len(&self) -> usize {
        self.prob_class1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob_class1.is_empty()
    }

    /// CSV with columns `node_id,true_class,sensitive,predicted_class,prob_class1,split`.
    pub fn to_csv(&self, attrs: &NodeAttributes, splits: &SplitMasks) -> String {
        let mut out = String::from("node_id,true_class,sensitive,predicted_class,prob_class1,split\n");
        for u in 0..self.len() {
            let _ = writeln!(
                out,
                "{u},{},{},{},{},{}",
                attrs.class.get(u),
                attrs.sensitive.get(u),
                self.predicted_class.get(u),
                self.prob_class1[u],
                splits.split_of(u).name()
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub predictions: Predictions,
    pub trace: Vec<EpochStats>,
    /// Epoch (0-based) whose parameters produced `predictions`.
    pub best_epoch: usize,
    pub params: Params,
}

impl TrainOutcome {
    /// CSV with columns `epoch,train_loss,val_f1`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_f1\n");
        for s in &self.trace {
            let _ = writeln!(out, "{},{},{}", s.epoch, s.train_loss, s.val_f1);
        }
        out
    }
}

fn class1_probs(logits: &Tensor) -> Vec<f64> {
    let p = softmax_rows(logits);
    (0..p.rows()).map(|r| p.get(r, 1)).collect()
}

fn diverged(epoch: usize) -> impl Fn(NnError) -> ModelError {
    move |source| ModelError::Diverged { epoch, source }
}

/// Masked mean cross-entropy of the eval-mode forward pass and its gradient
/// with respect to each parameter tensor, in [`Params`] order.
pub fn loss_and_grads(
    params: &Params,
    features: &Tensor,
    labels: &[u8],
    mask: &[usize],
    ops: &PropagationOperators,
    depth: usize,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    params.check(features.cols())?;
    let mut tape = Tape::new();
    let weights = params
        .tensors
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let x = tape.constant(features.clone())?;
    let logits = forward_on_tape(&mut tape, params.family, &weights, x, ops, depth, None)?;
    let loss = tape.cross_entropy_masked(logits, labels, mask)?;
    tape.backward(loss)?;
    let value = tape.value(loss)?.get(0, 0);
    let grads = weights
        .iter()
        .zip(&params.tensors)
        .map(|(&w, p)| {
            tape.grad(w)
                .map(|g| g.cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((value, grads))
}

pub fn train(
    g: &Graph,
    attrs: &NodeAttributes,
    splits: &SplitMasks,
    cfg: &ModelConfig,
) -> Result<TrainOutcome, ModelError> {
    let ops = build_propagation_matrices(g);
    train_with_ops(&ops, attrs, splits, cfg)
}

/// Full-batch training. Keeps the parameters of the epoch with the highest
/// validation F1 (earliest on ties) and predicts every node with them.
pub fn train_with_ops(
    ops: &PropagationOperators,
    attrs: &NodeAttributes,
    splits: &SplitMasks,
    cfg: &ModelConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    let n = attrs.n_nodes();
    if ops.sym_norm.shape().0 != n || splits.n_nodes() != n {
        return Err(ModelError::BadConfig(format!(
            "graph has {} nodes, attributes {n}, splits {}",
            ops.sym_norm.shape().0,
            splits.n_nodes()
        )));
    }
    let mut init_rng = rng_from(derive(&[cfg.seed, tag_part("init")]));
    let mut drop_rng = rng_from(derive(&[cfg.seed, tag_part("dropout")]));
    let mut params = Params::init(cfg.family, attrs.feature_dim(), cfg.hidden_dim, &mut init_rng);
    let mut opt = Adam::new(cfg.lr, cfg.weight_decay);
    let labels = attrs.class.as_slice();

    let mut tape = Tape::new();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Params, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        let err = diverged(epoch);
        tape.reset();
        let weights = params
            .tensors
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(&err)?;
        let x = tape.constant(attrs.features.clone()).map_err(&err)?;
        let dropout = Dropout {
            rate: cfg.dropout,
            rng: &mut drop_rng,
        };
        let logits = forward_on_tape(&mut tape, cfg.family, &weights, x, ops, cfg.depth, Some(dropout))
            .map_err(|e| match e {
                ModelError::Nn(source) => ModelError::Diverged { epoch, source },
                other => other,
            })?;
        let loss = tape
            .cross_entropy_masked(logits, labels, &splits.train)
            .map_err(&err)?;
        let train_loss = tape.value(loss).map_err(&err)?.get(0, 0);
        tape.backward(loss).map_err(&err)?;
        let grads = weights
            .iter()
            .zip(&params.tensors)
            .map(|(&w, p)| {
                tape.grad(w)
                    .map(|g| g.cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(&err)?;
        opt.step(&mut params.tensors, &grads).map_err(&err)?;

        let eval_logits = super::arch::forward(&params, &attrs.features, ops, cfg.depth).map_err(|e| {
            match e {
                ModelError::Nn(source) => ModelError::Diverged { epoch, source },
                other => other,
            }
        })?;
        let probs = class1_probs(&eval_logits);
        let preds = Predictions::from_probs(probs);
        let val_f1 = f1_binary(&preds.predicted_class, &attrs.class, &splits.val);
        trace.push(EpochStats {
            epoch,
            train_loss,
            val_f1,
        });
        if best.as_ref().is_none_or(|(f1, ..)| val_f1 > *f1) {
            best = Some((val_f1, epoch, params.clone(), preds.prob_class1));
        }
    }

    let (_, best_epoch, params, probs) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        predictions: Predictions::from_probs(probs),
        trace,
        best_epoch,
        params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRun {
    pub model: ModelFamily,
    pub run: usize,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

/// Seed of one training run, derived from `(base_seed, model, run_index)`.
pub fn run_seed(base_seed: u64, model: ModelFamily, run: usize) -> u64 {
    derive(&[base_seed, tag_part(model.name()), run as u64])
}

/// Trains every member of `design` `runs` times, seeding each with
/// [`run_seed`].
pub fn run_design_family(
    ops: &PropagationOperators,
    attrs: &NodeAttributes,
    splits: &SplitMasks,
    design: DesignFamily,
    runs: usize,
    base_seed: u64,
    hp: &HyperParams,
) -> Result<Vec<FamilyRun>, ModelError> {
    let mut out = Vec::with_capacity(2 * runs);
    for model in design.members() {
        for run in 0..runs {
            let seed = run_seed(base_seed, model, run);
            let cfg = ModelConfig::new(model, hp, seed);
            let outcome =
                train_with_ops(ops, attrs, splits, &cfg).map_err(|e| ModelError::RunFailed {
                    model,
                    run,
                    source: Box::new(e),
                })?;
            out.push(FamilyRun {
                model,
                run,
                seed,
                outcome,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_splits;
    use crate::synth::{generate, GeneratorConfig};

    /// Features carry the class directly, so every family should fit it.
    fn separable(n: usize) -> (Graph, NodeAttributes) {
        let cfg = GeneratorConfig {
            n_nodes: n,
            edges_per_node: 3,
            h_c: 0.8,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let (g, attrs) = generate(&cfg).unwrap();
        let feats: Vec<f64> = (0..n)
            .flat_map(|u| {
                let c = attrs.class.get(u) as f64;
                [2.0 * c - 1.0, 0.3]
            })
            .collect();
        let attrs = NodeAttributes::new(
            attrs.class.clone(),
            attrs.sensitive.clone(),
            Tensor::from_vec(n, 2, feats).unwrap(),
        )
        .unwrap();
        (g, attrs)
    }

    #[test]
    fn every_family_fits_separable_features() {
        let (g, attrs) = separable(120);
        let splits = make_splits(120, 3).unwrap();
        let hp = HyperParams {
            epochs: 60,
            lr: 0.05,
            ..HyperParams::default()
        };
        for fam in ModelFamily::ALL {
            let out = train(&g, &attrs, &splits, &ModelConfig::new(fam, &hp, 1)).unwrap();
            let f1 = f1_binary(&out.predictions.predicted_class, &attrs.class, &splits.test);
            assert!(f1 > 0.8, "{fam}: test F1 {f1}");
            assert_eq!(out.trace.len(), 60);
        }
    }

    #[test]
    fn snapshot_is_first_best_validation_epoch() {
        let (g, attrs) = separable(80);
        let splits = make_splits(80, 4).unwrap();
        let hp = HyperParams {
            epochs: 30,
            ..HyperParams::default()
        };
        let out = train(&g, &attrs, &splits, &ModelConfig::new(ModelFamily::Gcn, &hp, 2)).unwrap();
        let best = out.trace.iter().map(|s| s.val_f1).fold(f64::MIN, f64::max);
        let first = out.trace.iter().position(|s| s.val_f1 == best).unwrap();
        assert_eq!(out.best_epoch, first);
        let ops = build_propagation_matrices(&g);
        let logits = crate::models::forward(&out.params, &attrs.features, &ops, 2).unwrap();
        assert_eq!(class1_probs(&logits), out.predictions.prob_class1);
    }

    #[test]
    fn training_is_seeded() {
        let (g, attrs) = separable(60);
        let splits = make_splits(60, 5).unwrap();
        let hp = HyperParams {
            epochs: 10,
            ..HyperParams::default()
        };
        let cfg = ModelConfig::new(ModelFamily::Sage, &hp, 9);
        assert_eq!(train(&g, &attrs, &splits, &cfg).unwrap(), train(&g, &attrs, &splits, &cfg).unwrap());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (g, attrs) = separable(40);
        let splits = make_splits(30, 5).unwrap();
        let cfg = ModelConfig::new(ModelFamily::Gcn, &HyperParams::default(), 0);
        assert!(matches!(train(&g, &attrs, &splits, &cfg), Err(ModelError::BadConfig(_))));
    }

    #[test]
    fn csv_exports() {
        let (g, attrs) = separable(20);
        let splits = make_splits(20, 1).unwrap();
        let hp = HyperParams {
            epochs: 3,
            ..HyperParams::default()
        };
        let out = train(&g, &attrs, &splits, &ModelConfig::new(ModelFamily::Sgc, &hp, 0)).unwrap();
        let preds = out.predictions.to_csv(&attrs, &splits);
        assert_eq!(preds.lines().count(), 21);
        assert!(preds.starts_with("node_id,true_class,sensitive,predicted_class,prob_class1,split\n"));
        assert_eq!(out.trace_csv().lines().count(), 4);
    }
}
