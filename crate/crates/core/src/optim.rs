//! First-order optimizers over the logit table.

use crate::config::OptimizerKind;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F = f64> {
    pub kind: OptimizerKind,
    pub learning_rate: F,
    first_moment: Vec<F>,
    second_moment: Vec<F>,
    steps: u64,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(kind: OptimizerKind, learning_rate: F, param_count: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => param_count,
        };
        Self {
            kind,
            learning_rate,
            first_moment: vec![F::zero(); moments],
            second_moment: vec![F::zero(); moments],
            steps: 0,
        }
    }

    pub fn for_policy(kind: OptimizerKind, learning_rate: F, policy: &Policy<F>) -> Self {
        Self::new(kind, learning_rate, policy.logits().len())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One descent step on `policy` along `gradient` (a gradient of the loss).
    pub fn apply_update(&mut self, policy: &mut Policy<F>, gradient: &[F]) -> Result<()> {
        let params = policy.logits_mut();
        if gradient.len() != params.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                actual: gradient.len(),
            });
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(gradient) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.len() != params.len() {
                    return Err(Error::LengthMismatch {
                        expected: self.first_moment.len(),
                        actual: params.len(),
                    });
                }
                let (b1, b2, eps) = (F::lit(ADAM_BETA1), F::lit(ADAM_BETA2), F::lit(ADAM_EPS));
                let t = i32::try_from(self.steps).unwrap_or(i32::MAX);
                let c1 = F::one() - b1.powi(t);
                let c2 = F::one() - b2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(gradient)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = b1 * *m + (F::one() - b1) * g;
                    *v = b2 * *v + (F::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
