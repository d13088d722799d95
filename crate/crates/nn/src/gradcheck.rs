//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::ParamStore;

/// Denominator floor for relative errors, so that gradients which are zero up
/// to rounding are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Location of the worst entry: (parameter or input name, flat index).
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            if e >= self.max_rel_error {
                self.worst = Some((name.to_string(), index));
            }
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Checks d(loss)/d(param) for every scalar of every parameter accepted by `filter`.
pub fn check_params<F>(
    store: &mut ParamStore,
    step: f64,
    filter: impl Fn(&str) -> bool,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        Ok(g.scalar(l))
    };
    let mut report = GradCheckReport::default();
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        if !filter(&name) {
            continue;
        }
        let n = store.get(id).len();
        let grad = analytic.param(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for j in 0..n {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + step;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig - step;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig;
            report.record(&name, j, grad[j], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Checks d(loss)/d(input) for a `[rows, cols]` input matrix fed to `loss`.
pub fn check_input<F>(
    store: &ParamStore,
    rows: usize,
    cols: usize,
    input: &[f64],
    step: f64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |x: Vec<f64>| -> Result<f64> {
        let mut g = Graph::new(store);
        let v = g.input(rows, cols, x)?;
        let l = loss(&mut g, v)?;
        Ok(g.scalar(l))
    };
    let mut g = Graph::new(store);
    let v = g.input(rows, cols, input.to_vec())?;
    let l = loss(&mut g, v)?;
    let grads = g.backward(l)?;
    let analytic = grads
        .wrt(v)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; input.len()]);
    let mut report = GradCheckReport::default();
    for j in 0..input.len() {
        let mut x = input.to_vec();
        x[j] += step;
        let plus = eval(x.clone())?;
        x[j] -= 2.0 * step;
        let minus = eval(x)?;
        report.record("input", j, analytic[j], (plus - minus) / (2.0 * step));
    }
    Ok(report)
}
