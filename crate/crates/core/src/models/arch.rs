use std::fmt::Write as _;

use rand::Rng as _;

use super::{ModelError, ModelFamily};
use crate::nn::{dropout_mask, PropagationOperators, Tape, Tensor, Var};
use crate::seed::Rng;

const N_CLASSES: usize = 2;

/// Weight matrices of one model, in a fixed per-family order:
///
/// - GCN: `w0 (d×h)`, `w1 (h×2)`
/// - SGC: `w (d×2)`
/// - SAGE: `w0 (2d×h)`, `w1 (2h×h)`, `head (h×2)`
/// - H2GCN: `embed (d×h)`, `head (3h×2)`
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub family: ModelFamily,
    pub tensors: Vec<Tensor>,
}

fn shapes(family: ModelFamily, in_dim: usize, hidden: usize) -> Vec<(&'static str, usize, usize)> {
    match family {
        ModelFamily::Gcn => vec![("w0", in_dim, hidden), ("w1", hidden, N_CLASSES)],
        ModelFamily::Sgc => vec![("w", in_dim, N_CLASSES)],
        ModelFamily::Sage => vec![
            ("w0", 2 * in_dim, hidden),
            ("w1", 2 * hidden, hidden),
            ("head", hidden, N_CLASSES),
        ],
        ModelFamily::H2gcn => vec![("embed", in_dim, hidden), ("head", 3 * hidden, N_CLASSES)],
    }
}

impl Params {
    /// Glorot-uniform initialization.
    pub fn init(family: ModelFamily, in_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let tensors = shapes(family, in_dim, hidden)
            .into_iter()
            .map(|(_, r, c)| {
                let a = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c).map(|_| rng.random_range(-a..a)).collect();
                Tensor::from_vec(r, c, data).expect("finite init")
            })
            .collect();
        Self { family, tensors }
    }

    /// Hidden width implied by the stored shapes.
    fn hidden(&self) -> Option<usize> {
        match self.family {
            ModelFamily::Sgc => Some(0),
            _ => self.tensors.first().map(Tensor::cols),
        }
    }

    pub fn check(&self, in_dim: usize) -> Result<(), ModelError> {
        let hidden = self.hidden().ok_or_else(|| ModelError::BadParams {
            family: self.family,
            reason: "no parameter tensors (uninitialized)".into(),
        })?;
        let expected = shapes(self.family, in_dim, hidden);
        if expected.len() != self.tensors.len() {
            return Err(ModelError::BadParams {
                family: self.family,
                reason: format!("expected {} tensors, got {}", expected.len(), self.tensors.len()),
            });
        }
        for ((name, r, c), t) in expected.iter().zip(&self.tensors) {
            if t.shape() != (*r, *c) {
                return Err(ModelError::BadParams {
                    family: self.family,
                    reason: format!("{name} should be {r}x{c}, got {:?}", t.shape()),
                });
            }
        }
        Ok(())
    }

    /// Plain-text dump: a `family` line, then per tensor a header
    /// `tensor <name> <rows> <cols>` followed by one line of space-separated
    /// values in row-major order.
    pub fn to_text(&self) -> String {
        let names = shapes(self.family, 0, 0);
        let mut out = format!("family {}\n", self.family);
        for ((name, _, _), t) in names.iter().zip(&self.tensors) {
            let _ = writeln!(out, "tensor {name} {} {}", t.rows(), t.cols());
            let values: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let parse_err = |m: &str| ModelError::Parse(format!("params: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let family: ModelFamily = lines
            .next()
            .and_then(|l| l.strip_prefix("family "))
            .ok_or_else(|| parse_err("missing family line"))?
            .trim()
            .parse()?;
        let mut tensors = Vec::new();
        while let Some(header) = lines.next() {
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" {
                return Err(parse_err(&format!("bad tensor header '{header}'")));
            }
            let rows: usize = parts[2].parse().map_err(|_| parse_err("bad row count"))?;
            let cols: usize = parts[3].parse().map_err(|_| parse_err("bad column count"))?;
            let values = lines
                .next()
                .ok_or_else(|| parse_err("missing values line"))?
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| parse_err("bad value")))
                .collect::<Result<Vec<_>, _>>()?;
            tensors.push(Tensor::from_vec(rows, cols, values)?);
        }
        Ok(Self { family, tensors })
    }
}

/// Dropout source for training-mode forward passes.
pub(crate) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = tape.value(x)?.shape();
        let mask = dropout_mask(r, c, self.rate, self.rng);
        Ok(tape.dropout_mask_apply(x, mask)?)
    }
}

/// Records the forward pass on `tape`. `weights` are tape vars for the
/// family's parameters in [`Params`] order.
pub(crate) fn forward_on_tape(
    tape: &mut Tape,
    family: ModelFamily,
    weights: &[Var],
    x: Var,
    ops: &PropagationOperators,
    depth: usize,
    mut dropout: Option<Dropout<'_>>,
) -> Result<Var, ModelError> {
    let mut drop = |tape: &mut Tape, v: Var| -> Result<Var, ModelError> {
        match dropout.as_mut() {
            Some(d) => d.apply(tape, v),
            None => Ok(v),
        }
    };
    match family {
        ModelFamily::Gcn => {
            // Â·relu(Â·X·W0)·W1; the sparse product is taken on the narrower side
            let x = drop(tape, x)?;
            let ax = tape.spmm(&ops.sym_norm, x)?;
            let pre = tape.matmul(ax, weights[0])?;
            let h1 = tape.relu(pre)?;
            let h1 = drop(tape, h1)?;
            let hw = tape.matmul(h1, weights[1])?;
            Ok(tape.spmm(&ops.sym_norm, hw)?)
        }
        ModelFamily::Sgc => {
            let mut ax = x;
            for _ in 0..depth {
                ax = tape.spmm(&ops.sym_norm, ax)?;
            }
            let ax = drop(tape, ax)?;
            Ok(tape.matmul(ax, weights[0])?)
        }
        ModelFamily::Sage => {
            let mut h = x;
            for w in &weights[..2] {
                let nb = tape.spmm(&ops.mean_1hop, h)?;
                let cat = tape.concat_cols(&[h, nb])?;
                let pre = tape.matmul(cat, *w)?;
                h = tape.relu(pre)?;
                h = drop(tape, h)?;
            }
            Ok(tape.matmul(h, weights[2])?)
        }
        ModelFamily::H2gcn => {
            let pre = tape.matmul(x, weights[0])?;
            let h0 = tape.relu(pre)?;
            let one = tape.spmm(&ops.mean_1hop, h0)?;
            let two = tape.spmm(&ops.mean_2hop, h0)?;
            let r = tape.concat_cols(&[h0, one, two])?;
            let r = drop(tape, r)?;
            Ok(tape.matmul(r, weights[1])?)
        }
    }
}

/// Evaluation-mode logits (`n × 2`), no dropout.
pub fn forward(
    params: &Params,
    features: &Tensor,
    ops: &PropagationOperators,
    depth: usize,
) -> Result<Tensor, ModelError> {
    params.check(features.cols())?;
    let mut tape = Tape::new();
    let weights = params
        .tensors
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let x = tape.constant(features.clone())?;
    let logits = forward_on_tape(&mut tape, params.family, &weights, x, ops, depth, None)?;
    Ok(tape.value(logits)?.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::nn::build_propagation_matrices;
    use crate::seed::rng_from;

    #[test]
    fn init_shapes_match_family() {
        for fam in ModelFamily::ALL {
            let p = Params::init(fam, 3, 8, &mut rng_from(0));
            p.check(3).unwrap();
            assert!(p.check(4).is_err());
        }
    }

    #[test]
    fn empty_params_are_rejected() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let ops = build_propagation_matrices(&g);
        let p = Params {
            family: ModelFamily::Gcn,
            tensors: vec![],
        };
        let err = forward(&p, &Tensor::zeros(2, 2), &ops, 2).unwrap_err();
        assert!(matches!(err, ModelError::BadParams { .. }));
    }

    #[test]
    fn sgc_zero_weights_give_zero_logits() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let ops = build_propagation_matrices(&g);
        let p = Params {
            family: ModelFamily::Sgc,
            tensors: vec![Tensor::zeros(2, 2)],
        };
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]).unwrap();
        let z = forward(&p, &x, &ops, 2).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let probs = crate::nn::softmax_rows(&z);
        assert!(probs.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gcn_matches_hand_computation_on_single_edge() {
        // Â = [[.5, .5], [.5, .5]] on one edge
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let ops = build_propagation_matrices(&g);
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let w0 = Tensor::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap();
        let w1 = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        // ÂX = [[.5, 1.5], [.5, 1.5]]; ÂXW0 = [[2, 1], [2, 1]]; relu same;
        // H1 W1 = [[4, 1], [4, 1]]; Â(...) = [[4, 1], [4, 1]]
        let p = Params {
            family: ModelFamily::Gcn,
            tensors: vec![w0, w1],
        };
        let z = forward(&p, &x, &ops, 2).unwrap();
        for (got, want) in z.data().iter().zip([4.0, 1.0, 4.0, 1.0]) {
            approx::assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn h2gcn_without_two_hop_pairs() {
        // triangle: every node is within one hop of every other
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let ops = build_propagation_matrices(&g);
        let mut p = Params::init(ModelFamily::H2gcn, 2, 4, &mut rng_from(1));
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -2.0]]).unwrap();
        let z = forward(&p, &x, &ops, 2).unwrap();
        // zeroing the 2-hop block of the head leaves the logits unchanged
        for r in 8..12 {
            for c in 0..2 {
                p.tensors[1].set(r, c, 0.0);
            }
        }
        assert_eq!(forward(&p, &x, &ops, 2).unwrap(), z);
    }

    #[test]
    fn params_text_roundtrip() {
        let p = Params::init(ModelFamily::Sage, 2, 3, &mut rng_from(9));
        let back = Params::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
        assert!(Params::from_text("family gcn\ntensor w0 1 2\n1.0\n").is_err());
    }
}
