//! Two-parameter logistic IRT: `ẑ = σ(a_i θ_u − b_i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ObservationSet, ObservedPair};
use crate::error::{Error, Result};
use crate::lrmf::TrainConfig;
use crate::metrics::auc_roc;
use crate::optim::{fit_with_early_stopping, AdamState, EpochRecord};
use crate::predictor::Predictor;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IrtModel<T> {
    pub model_ids: Vec<String>,
    pub instance_ids: Vec<String>,
    /// Ability per model.
    pub theta: Vec<T>,
    /// Discrimination per instance.
    pub a: Vec<T>,
    /// Difficulty per instance.
    pub b: Vec<T>,
    pub config: TrainConfig,
    pub training_log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Gradient blocks of the IRT objective.
#[derive(Debug, Clone, PartialEq)]
pub struct IrtGradients<T> {
    pub theta: Vec<T>,
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> IrtModel<T> {
    pub fn new(model_ids: Vec<String>, instance_ids: Vec<String>, theta: Vec<T>, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if theta.len() != model_ids.len() || a.len() != instance_ids.len() || b.len() != instance_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: instance_ids.len(),
                found: a.len().min(b.len()),
            });
        }
        Ok(Self {
            model_ids,
            instance_ids,
            theta,
            a,
            b,
            config: TrainConfig::default(),
            training_log: Vec::new(),
            best_epoch: 0,
        })
    }

    fn logit(&self, u: usize, i: usize) -> T {
        self.a[i] * self.theta[u] - self.b[i]
    }
}

fn objective_impl<T: Scalar>(
    m: &IrtModel<T>,
    pairs: &[ObservedPair],
    lambda_l2: T,
    grads: Option<&mut IrtGradients<T>>,
) -> T {
    let eps = T::of(1e-12).max(T::epsilon());
    let inv_n = T::one() / T::of(pairs.len() as f64);
    let mut bce = T::zero();
    let mut grads = grads;
    if let Some(g) = grads.as_deref_mut() {
        g.theta.iter_mut().for_each(|v| *v = T::zero());
        g.a.iter_mut().for_each(|v| *v = T::zero());
        g.b.iter_mut().for_each(|v| *v = T::zero());
    }
    for p in pairs {
        let zhat = sigmoid(m.logit(p.model, p.instance));
        let c = zhat.max(eps).min(T::one() - eps);
        bce -= if p.score == 1 { c.ln() } else { (T::one() - c).ln() };
        if let Some(g) = grads.as_deref_mut() {
            let r = (zhat - T::of(f64::from(p.score))) * inv_n;
            g.theta[p.model] += r * m.a[p.instance];
            g.a[p.instance] += r * m.theta[p.model];
            g.b[p.instance] -= r;
        }
    }
    let sq = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>();
    let l2 = lambda_l2 * (sq(&m.theta) + sq(&m.a) + sq(&m.b));
    if let Some(g) = grads {
        let two_l = T::of(2.0) * lambda_l2;
        for (gv, &v) in g.theta.iter_mut().zip(&m.theta) {
            *gv += two_l * v;
        }
        for (gv, &v) in g.a.iter_mut().zip(&m.a) {
            *gv += two_l * v;
        }
        for (gv, &v) in g.b.iter_mut().zip(&m.b) {
            *gv += two_l * v;
        }
    }
    bce * inv_n + l2
}

fn check_pairs<T: Scalar>(m: &IrtModel<T>, pairs: &[ObservedPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    for p in pairs {
        if p.model >= m.theta.len() || p.instance >= m.a.len() {
            return Err(Error::IndexOutOfRange {
                kind: "pair",
                index: p.model.max(p.instance),
                len: m.theta.len().min(m.a.len()),
            });
        }
    }
    Ok(())
}

/// Mean BCE plus `λ_L2 (‖θ‖² + ‖a‖² + ‖b‖²)`.
pub fn irt_objective<T: Scalar>(m: &IrtModel<T>, pairs: &[ObservedPair]) -> Result<T> {
    check_pairs(m, pairs)?;
    Ok(objective_impl(m, pairs, T::of(m.config.lambda_l2), None))
}

pub fn irt_gradients<T: Scalar>(m: &IrtModel<T>, pairs: &[ObservedPair]) -> Result<IrtGradients<T>> {
    check_pairs(m, pairs)?;
    let mut g = IrtGradients {
        theta: vec![T::zero(); m.theta.len()],
        a: vec![T::zero(); m.a.len()],
        b: vec![T::zero(); m.b.len()],
    };
    objective_impl(m, pairs, T::of(m.config.lambda_l2), Some(&mut g));
    Ok(g)
}

pub fn irt_predict<T: Scalar>(m: &IrtModel<T>, u: usize, i: usize) -> Result<T> {
    if u >= m.theta.len() {
        return Err(Error::IndexOutOfRange { kind: "model", index: u, len: m.theta.len() });
    }
    if i >= m.a.len() {
        return Err(Error::IndexOutOfRange { kind: "instance", index: i, len: m.a.len() });
    }
    Ok(sigmoid(m.logit(u, i)))
}

#[derive(Clone)]
struct State<T> {
    model: IrtModel<T>,
    adam: [AdamState<T>; 3],
}

/// Fits abilities, discriminations and difficulties with Adam and dev-AUC
/// early stopping. Discriminations start at 1.
pub fn irt_train<T: Scalar>(obs: &ObservationSet, config: &TrainConfig) -> Result<IrtModel<T>> {
    config.validate()?;
    let omega = obs.fit_pairs(config.dev_visibility);
    if omega.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let dev = super::dev_pairs(obs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = |s: f64| -> T {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::of(z * s)
    };
    let theta = (0..obs.n_models()).map(|_| normal(config.init_scale)).collect();
    let a = vec![T::one(); obs.n_instances()];
    let b = (0..obs.n_instances()).map(|_| normal(config.init_scale)).collect();
    let mut model = IrtModel::new(obs.model_ids(), obs.instance_ids(), theta, a, b)?;
    model.config = config.clone();
    let adam_cfg = config.adam();
    let lambda = T::of(config.lambda_l2);
    let state = State {
        adam: [
            AdamState::new(model.theta.len()),
            AdamState::new(model.a.len()),
            AdamState::new(model.b.len()),
        ],
        model,
    };
    let mut g = IrtGradients {
        theta: vec![T::zero(); obs.n_models()],
        a: vec![T::zero(); obs.n_instances()],
        b: vec![T::zero(); obs.n_instances()],
    };
    let step = |s: &mut State<T>, _: usize| -> Result<f64> {
        let loss = objective_impl(&s.model, &omega, lambda, Some(&mut g));
        let [st, sa, sb] = &mut s.adam;
        st.step(&mut s.model.theta, &g.theta, &adam_cfg);
        sa.step(&mut s.model.a, &g.a, &adam_cfg);
        sb.step(&mut s.model.b, &g.b, &adam_cfg);
        Ok(loss.as_f64())
    };
    let metric = |s: &State<T>| {
        if dev.is_empty() {
            return None;
        }
        let scored: Vec<(T, u8)> = dev
            .iter()
            .map(|p| (sigmoid(s.model.logit(p.model, p.instance)), p.score))
            .collect();
        auc_roc(&scored).ok()
    };
    let out = fit_with_early_stopping(state, config.max_epochs, config.patience, step, metric)?;
    let mut model = out.best.model;
    model.training_log = out.log;
    model.best_epoch = out.best_epoch;
    Ok(model)
}

impl<T: Scalar> Predictor for IrtModel<T> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        sigmoid(self.logit(model, instance)).as_f64()
    }
}
