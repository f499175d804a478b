//! Central finite-difference checks of analytic parameter gradients.

use crate::graph::{Graph, Var};
use crate::params::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error <= tolerance
    }
}

/// Relative error with an absolute floor so that two gradients that are
/// both ~0 compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        diff / 1e-7
    } else {
        diff / scale
    }
}

/// Checks every scalar of every parameter.
pub fn check_gradients<F>(store: &ParamStore, eps: f64, f: F) -> GradCheckReport
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    check_gradients_sampled(store, eps, usize::MAX, f)
}

/// Like [`check_gradients`] but limits each parameter tensor to an evenly
/// strided subset of at most `per_param` entries.
pub fn check_gradients_sampled<F>(store: &ParamStore, eps: f64, per_param: usize, f: F) -> GradCheckReport
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    let analytic = {
        let mut g = Graph::with_params(store);
        let root = f(&mut g);
        let grads = g.backward(root);
        g.param_grads(&grads)
    };

    let mut perturbed = store.clone();
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0, worst: None };
    for id in store.ids() {
        let n = store.get(id).len();
        let stride = if n > per_param { n.div_ceil(per_param) } else { 1 };
        for k in (0..n).step_by(stride) {
            let orig = store.get(id).data()[k];
            perturbed.get_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(&perturbed, &f);
            perturbed.get_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(&perturbed, &f);
            perturbed.get_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.0].data()[k];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((store.name(id).to_string(), k, a, numeric));
            }
        }
    }
    report
}

fn eval<F>(store: &ParamStore, f: &F) -> f64
where
    F: Fn(&mut Graph<'_>) -> Var,
{
    let mut g = Graph::with_params(store);
    let root = f(&mut g);
    g.scalar(root)
}
