//! Central finite-difference comparison for every parameter group.

use super::params::ModelParams;

pub const FD_STEP: f64 = 1e-5;

/// Relative error `|g - fd| / max(|g|, |fd|)` (Euclidean norms over the
/// group) for each tensor, in parameter order.
pub fn check_all(
    params: &ModelParams,
    grads: &ModelParams,
    loss: impl Fn(&ModelParams) -> f64,
) -> Vec<(String, f64)> {
    let names = params.names();
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    grads.for_each(|_, t| analytic.push(t.to_vec()));
    let mut out = Vec::with_capacity(names.len());
    for (gi, name) in names.iter().enumerate() {
        let len = analytic[gi].len();
        let mut fd = vec![0.0; len];
        for (k, slot) in fd.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut idx = 0;
                p.for_each_mut(|_, t| {
                    if idx == gi {
                        t[k] += delta;
                    }
                    idx += 1;
                });
                loss(&p)
            };
            *slot = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
        }
        let diff: f64 = analytic[gi].iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic[gi].iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nf);
        out.push((name.clone(), if denom == 0.0 { 0.0 } else { diff / denom }));
    }
    out
}
