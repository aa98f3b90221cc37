//! Straight noising path and the velocity objective.

use alloc::vec::Vec;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::FlowError;
use crate::data::NormalizedWindow;
use crate::model::{DitsModel, ModelInput};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// `x_t = (1 − t)·x0 + t·eps`.
pub fn noising(x0: &[f64], eps: &[f64], t: f64) -> Result<Vec<f64>, FlowError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::InvalidTime(t));
    }
    if x0.len() != eps.len() {
        return Err(FlowError::LengthMismatch {
            expected: x0.len(),
            found: eps.len(),
        });
    }
    Ok(x0.iter().zip(eps).map(|(&x, &e)| (1.0 - t) * x + t * e).collect())
}

/// Velocity along the straight path, `eps − x0`.
pub fn velocity_target(x0: &[f64], eps: &[f64]) -> Vec<f64> {
    x0.iter().zip(eps).map(|(&x, &e)| e - x).collect()
}

pub fn standard_normal(rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// One training example: a window with its flow time and noise draw.
#[derive(Debug, Clone)]
pub struct BatchItem<'a> {
    pub window: &'a NormalizedWindow,
    pub t: f64,
    pub eps: Vec<f64>,
}

/// Model input `[history ‖ x_t]` for every item, plus the flattened `[B, H]` velocity target.
pub fn assemble(items: &[BatchItem<'_>]) -> Result<(ModelInput, Vec<f64>), FlowError> {
    let first = items.first().ok_or(FlowError::EmptyBatch)?.window;
    let (lp, h, c) = (first.hist_len(), first.horizon(), first.n_cov);
    let mut input = ModelInput::zeros(items.len(), lp + h, c);
    let mut target = Vec::with_capacity(items.len() * h);
    let mut x = Vec::with_capacity(lp + h);
    for (b, item) in items.iter().enumerate() {
        let w = item.window;
        if w.hist_len() != lp || w.horizon() != h || w.n_cov != c {
            return Err(FlowError::LengthMismatch {
                expected: lp + h,
                found: w.total_len(),
            });
        }
        x.clear();
        x.extend_from_slice(&w.x_hist);
        x.extend(noising(&w.y_pred, &item.eps, item.t)?);
        input.set_sample(b, &x, &w.cov, item.t);
        target.extend(velocity_target(&w.y_pred, &item.eps));
    }
    Ok((input, target))
}

/// Mean over horizon elements of `(v̂ − (eps − x0))²`; history is excluded.
pub fn velocity_loss(
    g: &mut Graph,
    model: &DitsModel,
    params: &ParamStore,
    items: &[BatchItem<'_>],
    dropout: Option<&mut dyn RngCore>,
) -> Result<Var, FlowError> {
    let (input, target) = assemble(items)?;
    let lp = items[0].window.hist_len();
    let b = items.len();
    let h = target.len() / b;
    let v = model.forward_full(g, params, &input, dropout)?;
    let v_h = g.slice(v, 1, lp, lp + h)?;
    let y = g.constant(Tensor::new(alloc::vec![b, h], target)?);
    Ok(g.mse(v_h, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let x0 = [0.3, -1.0];
        let eps = [2.0, 5.0];
        assert_eq!(noising(&x0, &eps, 0.0).unwrap(), x0);
        assert_eq!(noising(&x0, &eps, 1.0).unwrap(), eps);
        assert_eq!(noising(&[2.0], &[0.0], 0.5).unwrap(), [1.0]);
        assert!(matches!(noising(&x0, &eps, 1.5), Err(FlowError::InvalidTime(_))));
    }
}
