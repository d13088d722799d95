//! Adam with bias correction, and global-norm gradient clipping.

use crate::error::{NnError, Result};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.second[index]
    }
}

impl Adam {
    /// Applies one update using the gradients stored on each parameter.
    ///
    /// Parameters without a gradient buffer, or frozen ones, are left untouched.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&self, store: &mut ParamStore, state: &mut OptimizerState, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {lr}")));
        }
        if state.first.len() != store.len() {
            return Err(NnError::Config("optimizer state does not match parameter store".into()));
        }
        for id in store.ids() {
            let t = store.get(id);
            if state.first[id.index()].len() != t.len() {
                return Err(NnError::Shape {
                    op: "adam",
                    axis: 0,
                    expected: t.len(),
                    found: state.first[id.index()].len(),
                });
            }
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NnError::NonFiniteGradient {
                        param: store.name(id).to_string(),
                    });
                }
            }
        }

        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            if store.is_frozen(id) {
                continue;
            }
            let i = id.index();
            let tensor = store.get_mut(id);
            let Some(grad) = tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let m = &mut state.first[i];
            let v = &mut state.second[i];
            for (j, (w, g)) in tensor.data_mut().iter_mut().zip(&grad).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales all trainable gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let ids: Vec<_> = store.ids().filter(|&id| !store.is_frozen(id)).collect();
    let total: f64 = ids
        .iter()
        .filter_map(|&id| store.get(id).grad())
        .flat_map(|g| g.iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt();
    if total > max_norm && total.is_finite() {
        let factor = max_norm / total;
        for id in ids {
            if let Some(g) = store.get_mut(id).grad_mut() {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }
    total
}
