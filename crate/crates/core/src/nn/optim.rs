use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Adam with coupled L2 weight decay (the decay term is added to the
/// gradient before the moment updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place. Fails without touching anything when a
    /// gradient is non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::ParamCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "optimizer_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NanGradient(i));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(NnError::ParamCount {
                params: params.len(),
                grads: self.first.len(),
            });
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                let grad = gj + self.weight_decay * pd[j];
                md[j] = self.beta1 * md[j] + (1.0 - self.beta1) * grad;
                vd[j] = self.beta2 * vd[j] + (1.0 - self.beta2) * grad * grad;
                let m_hat = md[j] / bc1;
                let v_hat = vd[j] / bc2;
                pd[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut opt = Adam::new(0.01, 0.0);
        let mut p = vec![Tensor::from_vec(1, 2, vec![0.3, -0.7]).unwrap()];
        let before = p.clone();
        for _ in 0..5 {
            opt.step(&mut p, &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_unit_scaled() {
        let mut opt = Adam::new(0.01, 0.0);
        let mut p = vec![Tensor::scalar(0.0)];
        opt.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        // m_hat = v_hat = 1  =>  delta = -lr / (1 + eps)
        assert_abs_diff_eq!(p[0].get(0, 0), -0.01, epsilon = 1e-9);
    }

    #[test]
    fn weight_decay_shrinks_towards_zero() {
        let mut opt = Adam::new(0.01, 0.1);
        let mut p = vec![Tensor::from_vec(1, 2, vec![1.0, -1.0]).unwrap()];
        for _ in 0..10 {
            opt.step(&mut p, &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert!(p[0].get(0, 0) < 1.0 && p[0].get(0, 0) > 0.0);
        assert!(p[0].get(0, 1) > -1.0 && p[0].get(0, 1) < 0.0);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let mut opt = Adam::new(0.01, 0.0);
        let mut p = vec![Tensor::scalar(1.0)];
        let bad = Tensor::from_parts(1, 1, vec![f64::NAN]);
        assert_eq!(opt.step(&mut p, &[bad]).unwrap_err(), NnError::NanGradient(0));
        assert_eq!(p[0].get(0, 0), 1.0);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = Adam::new(0.01, 0.0);
        let mut p = vec![Tensor::zeros(2, 2)];
        assert!(opt.step(&mut p, &[Tensor::zeros(1, 2)]).is_err());
    }
}
