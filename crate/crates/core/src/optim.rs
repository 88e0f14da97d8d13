//! Adam with bias correction, and the early-stopping epoch loop shared by
//! every trainable predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len(), "parameter block size changed");
        assert_eq!(grads.len(), self.m.len(), "gradient block size mismatch");
        self.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - b1.powi(self.t);
        let bc2 = T::one() - b2.powi(self.t);
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(cfg.eps);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &mut [T], grads: &[T], cfg: &AdamConfig) {
    state.step(params, grads, cfg);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<P> {
    pub best: P,
    /// Epoch whose parameters were kept (1-based; 0 means the initial state).
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Runs up to `max_epochs` calls of `step`, tracking the dev metric.
///
/// `step` advances the parameters by one epoch and returns the training
/// objective evaluated before the update. `dev_metric` scores the updated
/// parameters (higher is better); when it returns `None` on every epoch the
/// final parameters are kept. Training stops once the metric has not
/// strictly improved for `patience` consecutive epochs.
pub fn fit_with_early_stopping<P, S, D>(
    mut params: P,
    max_epochs: usize,
    patience: usize,
    mut step: S,
    mut dev_metric: D,
) -> Result<FitOutcome<P>>
where
    P: Clone,
    S: FnMut(&mut P, usize) -> Result<f64>,
    D: FnMut(&P) -> Option<f64>,
{
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, P)> = None;
    let mut since_best = 0;
    for epoch in 1..=max_epochs {
        let loss = step(&mut params, epoch)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let metric = dev_metric(&params);
        log.push(EpochRecord {
            epoch,
            train_loss: loss,
            dev_metric: metric,
        });
        let Some(metric) = metric else {
            continue;
        };
        match &best {
            Some((b, _, _)) if metric <= *b => {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
            _ => {
                best = Some((metric, epoch, params.clone()));
                since_best = 0;
            }
        }
    }
    Ok(match best {
        Some((_, best_epoch, best)) => FitOutcome {
            best,
            best_epoch,
            log,
        },
        None => FitOutcome {
            best_epoch: log.len(),
            best: params,
            log,
        },
    })
}
