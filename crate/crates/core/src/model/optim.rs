use super::config::TrainConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

/// Cosine annealing from `lr0` at epoch 0 to `eta_min` at the last epoch.
pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::precondition(format!(
            "epoch {epoch} out of range for {} epochs",
            cfg.epochs
        )));
    }
    if cfg.epochs == 1 {
        return Ok(cfg.lr0);
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    Ok(cfg.eta_min + 0.5 * (cfg.lr0 - cfg.eta_min) * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

fn layout(p: &ModelParams) -> Vec<usize> {
    let mut out = Vec::new();
    p.for_each(|_, t| out.push(t.len()));
    out
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let shape = layout(params);
    if layout(grads) != shape || layout(&state.m) != shape || layout(&state.v) != shape {
        return Err(Error::Shape {
            expected: "gradients and moments shaped like the parameters".into(),
            actual: "mismatched tensor layout".into(),
        });
    }
    state.step += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    state.m.zip_mut(grads, |m, g| {
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
    });
    state.v.zip_mut(grads, |v, g| {
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
    });
    let mut m_flat: Vec<&[f64]> = Vec::new();
    state.m.for_each(|_, t| m_flat.push(t));
    let mut v_flat: Vec<&[f64]> = Vec::new();
    state.v.for_each(|_, t| v_flat.push(t));
    let mut i = 0;
    params.for_each_mut(|_, p| {
        for ((pi, mi), vi) in p.iter_mut().zip(m_flat[i]).zip(v_flat[i]) {
            *pi -= lr * (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
        }
        i += 1;
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert_eq!(cosine_lr(0, &cfg).unwrap(), 1e-2);
        assert!((cosine_lr(49, &cfg).unwrap() - 1e-5).abs() < 1e-18);
        let odd = TrainConfig {
            epochs: 51,
            ..cfg.clone()
        };
        assert!((cosine_lr(25, &odd).unwrap() - (1e-2 + 1e-5) / 2.0).abs() < 1e-15);
        assert!(cosine_lr(50, &cfg).is_err());
        let mut prev = f64::INFINITY;
        for e in 0..50 {
            let lr = cosine_lr(e, &cfg).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn params() -> ModelParams {
        ModelParams::init(&ModelConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 1e-2, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        let mut k = 0.0;
        g.for_each_mut(|_, t| {
            for v in t.iter_mut() {
                k += 1.0;
                *v = if (k as i64) % 3 == 0 { -0.5 * k } else { 0.01 * k };
            }
        });
        let mut s = AdamState::new(&p);
        let lr = 1e-3;
        adam_step(&mut p, &g, &mut s, lr, &TrainConfig::default()).unwrap();
        let mut a = Vec::new();
        p.for_each(|_, t| a.extend_from_slice(t));
        let mut b = Vec::new();
        before.for_each(|_, t| b.extend_from_slice(t));
        let mut gs = Vec::new();
        g.for_each(|_, t| gs.extend_from_slice(t));
        for ((x, y), gi) in a.iter().zip(&b).zip(&gs) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!(((x - y) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_runs_identical_state() {
        let run = || {
            let mut p = params();
            let mut g = p.zeros_like();
            g.for_each_mut(|_, t| t.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin()));
            let mut s = AdamState::new(&p);
            for _ in 0..3 {
                adam_step(&mut p, &g, &mut s, 1e-2, &TrainConfig::default()).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = params();
        let other = ModelParams::init(
            &ModelConfig {
                n_classes: 5,
                ..ModelConfig::tiny()
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &other, &mut s, 1e-2, &TrainConfig::default()).is_err());
    }
}
