use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check(logits: &Array2<f64>, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    if logits.nrows() != targets.len() {
        return Err(Error::Shape {
            expected: format!("{} logit rows", targets.len()),
            actual: format!("{} rows", logits.nrows()),
        });
    }
    if let Some(t) = targets.iter().find(|&&t| t >= logits.ncols()) {
        return Err(Error::precondition(format!(
            "target class {t} out of range for {} classes",
            logits.ncols()
        )));
    }
    Ok(())
}

/// `(1 - p)^gamma` with `1 - p` taken from the log-probability for accuracy.
fn modulating(logp: f64, gamma: f64) -> (f64, f64) {
    let one_minus_p = -logp.exp_m1();
    (one_minus_p, if gamma == 0.0 { 1.0 } else { one_minus_p.powf(gamma) })
}

/// Mean over the batch of `-(1 - p_t)^gamma * log p_t`.
pub fn focal_loss(logits: &Array2<f64>, targets: &[usize], gamma: f64) -> Result<f64> {
    Ok(focal_loss_grad(logits, targets, gamma)?.0)
}

/// Mean cross-entropy.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    check(logits, targets)?;
    let lp = log_softmax_rows(logits);
    Ok(-targets.iter().enumerate().map(|(i, &t)| lp[[i, t]]).sum::<f64>() / targets.len() as f64)
}

/// Focal loss and its gradient with respect to the logits.
///
/// For one sample, `d loss / d z_j = [gamma (1-p)^(gamma-1) p log p - (1-p)^gamma] (delta_jt - p_j)`.
pub fn focal_loss_grad(logits: &Array2<f64>, targets: &[usize], gamma: f64) -> Result<(f64, Array2<f64>)> {
    check(logits, targets)?;
    let n = targets.len() as f64;
    let lp = log_softmax_rows(logits);
    let mut grad = lp.mapv(f64::exp);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let logp = lp[[i, t]];
        let p = logp.exp();
        let (q, w) = modulating(logp, gamma);
        loss -= w * logp;
        let first = if gamma == 0.0 || q == 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * p * logp
        };
        let coeff = first - w;
        let mut row = grad.row_mut(i);
        // row currently holds p_j; gradient is coeff * (delta_jt - p_j).
        row.mapv_inplace(|pj| -coeff * pj);
        row[t] += coeff;
        row.mapv_inplace(|g| g / n);
    }
    Ok((loss / n, grad))
}
