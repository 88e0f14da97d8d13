//! Neural collaborative filtering with model and task factors.
//!
//! Input: model-id embedding, instance embedding, embeddings of the
//! architecture type, model type and benchmark, and the log parameter size
//! as a raw scalar. Two ReLU layers feed a sigmoid output unit. Factor
//! vocabularies come from the fitted models and instances in sorted order;
//! anything unseen maps to a trailing "unknown" row, which is also the
//! id embedding used for models without observations.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ModelType, ObservationSet, ObservedPair};
use crate::error::{Error, Result};
use crate::lrmf::TrainConfig;
use crate::metrics::auc_roc;
use crate::optim::{fit_with_early_stopping, AdamState, EpochRecord};
use crate::predictor::Predictor;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NcfConfig {
    /// Optimizer, penalty and early-stopping settings; `latent_dim` sizes the
    /// id embeddings.
    pub train: TrainConfig,
    pub factor_dim: usize,
    pub hidden: [usize; 2],
}

impl Default for NcfConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            factor_dim: 8,
            hidden: [128, 128],
        }
    }
}

/// Categorical vocabularies and per-record slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEmbedding {
    pub architectures: Vec<String>,
    pub model_types: Vec<ModelType>,
    pub benchmarks: Vec<String>,
    /// Median log parameter size of fitted models, used when a size is unknown.
    pub log_size_fill: f64,
    /// Models with fitted observations; slot `n_warm_models` is the unknown id.
    pub n_warm_models: usize,
    pub model_slot: Vec<usize>,
    pub arch_slot: Vec<usize>,
    pub type_slot: Vec<usize>,
    pub log_size: Vec<f64>,
    pub bench_slot: Vec<usize>,
}

fn slot_of<K: Ord>(vocab: &[K], key: &K) -> usize {
    vocab.binary_search(key).unwrap_or(vocab.len())
}

impl FactorEmbedding {
    fn build(obs: &ObservationSet, omega: &[ObservedPair]) -> Self {
        let mut warm = vec![false; obs.n_models()];
        let mut seen_inst = vec![false; obs.n_instances()];
        for p in omega {
            warm[p.model] = true;
            seen_inst[p.instance] = true;
        }
        let warm_models: Vec<usize> = (0..obs.n_models()).filter(|&u| warm[u]).collect();
        let models = obs.models();
        let architectures: Vec<String> = warm_models
            .iter()
            .map(|&u| models[u].architecture_type.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let model_types: Vec<ModelType> = warm_models
            .iter()
            .map(|&u| models[u].model_type)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let benchmarks: Vec<String> = (0..obs.n_instances())
            .filter(|&i| seen_inst[i])
            .map(|i| obs.instances()[i].benchmark_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let mut logs: Vec<f64> = warm_models
            .iter()
            .filter_map(|&u| models[u].parameter_size.map(f64::ln))
            .collect();
        logs.sort_by(f64::total_cmp);
        let log_size_fill = match logs.len() {
            0 => 0.0,
            n if n % 2 == 1 => logs[n / 2],
            n => 0.5 * (logs[n / 2 - 1] + logs[n / 2]),
        };

        let mut next = 0;
        let mut model_slot = vec![0; obs.n_models()];
        for (u, slot) in model_slot.iter_mut().enumerate() {
            if warm[u] {
                *slot = next;
                next += 1;
            }
        }
        for (u, slot) in model_slot.iter_mut().enumerate() {
            if !warm[u] {
                *slot = next;
            }
        }
        Self {
            arch_slot: models.iter().map(|m| slot_of(&architectures, &m.architecture_type)).collect(),
            type_slot: models.iter().map(|m| slot_of(&model_types, &m.model_type)).collect(),
            log_size: models
                .iter()
                .map(|m| m.parameter_size.map_or(log_size_fill, f64::ln))
                .collect(),
            bench_slot: obs
                .instances()
                .iter()
                .map(|i| slot_of(&benchmarks, &i.benchmark_id))
                .collect(),
            n_warm_models: next,
            model_slot,
            architectures,
            model_types,
            benchmarks,
            log_size_fill,
        }
    }

    /// Warm models plus the unknown row.
    pub fn n_model_slots(&self) -> usize {
        self.n_warm_models + 1
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcfLayout {
    pub id_dim: usize,
    pub factor_dim: usize,
    pub hidden: [usize; 2],
    pub input_dim: usize,
    model_emb: usize,
    inst_emb: usize,
    arch_emb: usize,
    type_emb: usize,
    bench_emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl NcfLayout {
    fn new(f: &FactorEmbedding, n_inst: usize, id_dim: usize, factor_dim: usize, hidden: [usize; 2]) -> Self {
        let input_dim = 2 * id_dim + 3 * factor_dim + 1;
        let mut off = 0;
        let mut take = |n: usize| {
            let start = off;
            off += n;
            start
        };
        let model_emb = take(f.n_model_slots() * id_dim);
        let inst_emb = take(n_inst * id_dim);
        let arch_emb = take((f.architectures.len() + 1) * factor_dim);
        let type_emb = take((f.model_types.len() + 1) * factor_dim);
        let bench_emb = take((f.benchmarks.len() + 1) * factor_dim);
        let w1 = take(hidden[0] * input_dim);
        let b1 = take(hidden[0]);
        let w2 = take(hidden[1] * hidden[0]);
        let b2 = take(hidden[1]);
        let w3 = take(hidden[1]);
        let b3 = take(1);
        Self {
            id_dim,
            factor_dim,
            hidden,
            input_dim,
            model_emb,
            inst_emb,
            arch_emb,
            type_emb,
            bench_emb,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            len: off,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn is_bias(&self, idx: usize) -> bool {
        (self.b1..self.b1 + self.hidden[0]).contains(&idx)
            || (self.b2..self.b2 + self.hidden[1]).contains(&idx)
            || idx == self.b3
    }

    /// Offsets of the embedding rows that make up the input vector, in order.
    fn input_segments(&self, f: &FactorEmbedding, u: usize, i: usize) -> [(usize, usize); 5] {
        let (d, k) = (self.id_dim, self.factor_dim);
        [
            (self.model_emb + f.model_slot[u] * d, d),
            (self.inst_emb + i * d, d),
            (self.arch_emb + f.arch_slot[u] * k, k),
            (self.type_emb + f.type_slot[u] * k, k),
            (self.bench_emb + f.bench_slot[i] * k, k),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NcfModel<T> {
    pub model_ids: Vec<String>,
    pub instance_ids: Vec<String>,
    pub factors: FactorEmbedding,
    pub layout: NcfLayout,
    /// Flat parameter vector, see [`NcfLayout`].
    pub params: Vec<T>,
    pub config: NcfConfig,
    pub training_log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

struct Scratch<T> {
    input: Vec<T>,
    pre1: Vec<T>,
    h1: Vec<T>,
    pre2: Vec<T>,
    h2: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(l: &NcfLayout) -> Self {
        Self {
            input: vec![T::zero(); l.input_dim],
            pre1: vec![T::zero(); l.hidden[0]],
            h1: vec![T::zero(); l.hidden[0]],
            pre2: vec![T::zero(); l.hidden[1]],
            h2: vec![T::zero(); l.hidden[1]],
            d1: vec![T::zero(); l.hidden[0]],
            d2: vec![T::zero(); l.hidden[1]],
        }
    }
}

fn forward<T: Scalar>(p: &[T], l: &NcfLayout, f: &FactorEmbedding, u: usize, i: usize, s: &mut Scratch<T>) -> T {
    let mut pos = 0;
    for (start, len) in l.input_segments(f, u, i) {
        s.input[pos..pos + len].copy_from_slice(&p[start..start + len]);
        pos += len;
    }
    s.input[pos] = T::of(f.log_size[u]);

    let [h1n, h2n] = l.hidden;
    let din = l.input_dim;
    for j in 0..h1n {
        let w = &p[l.w1 + j * din..l.w1 + (j + 1) * din];
        let z = crate::scalar::dot(w, &s.input) + p[l.b1 + j];
        s.pre1[j] = z;
        s.h1[j] = z.max(T::zero());
    }
    for j in 0..h2n {
        let w = &p[l.w2 + j * h1n..l.w2 + (j + 1) * h1n];
        let z = crate::scalar::dot(w, &s.h1) + p[l.b2 + j];
        s.pre2[j] = z;
        s.h2[j] = z.max(T::zero());
    }
    crate::scalar::dot(&p[l.w3..l.w3 + h2n], &s.h2) + p[l.b3]
}

/// Backpropagates `delta = ∂loss/∂logit` for the pair last run through `forward`.
#[allow(clippy::too_many_arguments)]
fn backward<T: Scalar>(
    p: &[T],
    l: &NcfLayout,
    f: &FactorEmbedding,
    u: usize,
    i: usize,
    delta: T,
    s: &mut Scratch<T>,
    g: &mut [T],
) {
    let [h1n, h2n] = l.hidden;
    let din = l.input_dim;
    g[l.b3] += delta;
    for j in 0..h2n {
        g[l.w3 + j] += delta * s.h2[j];
        s.d2[j] = if s.pre2[j] > T::zero() { delta * p[l.w3 + j] } else { T::zero() };
    }
    s.d1.iter_mut().for_each(|v| *v = T::zero());
    for j in 0..h2n {
        let dj = s.d2[j];
        if dj == T::zero() {
            continue;
        }
        g[l.b2 + j] += dj;
        let row = l.w2 + j * h1n;
        for k in 0..h1n {
            g[row + k] += dj * s.h1[k];
            s.d1[k] += dj * p[row + k];
        }
    }
    let mut d_input = vec![T::zero(); din];
    for k in 0..h1n {
        let dk = if s.pre1[k] > T::zero() { s.d1[k] } else { T::zero() };
        if dk == T::zero() {
            continue;
        }
        g[l.b1 + k] += dk;
        let row = l.w1 + k * din;
        for (c, di) in d_input.iter_mut().enumerate() {
            g[row + c] += dk * s.input[c];
            *di += dk * p[row + c];
        }
    }
    let mut pos = 0;
    for (start, len) in l.input_segments(f, u, i) {
        for c in 0..len {
            g[start + c] += d_input[pos + c];
        }
        pos += len;
    }
}

fn objective_impl<T: Scalar>(m: &NcfModel<T>, pairs: &[ObservedPair], grads: Option<&mut [T]>) -> T {
    let l = &m.layout;
    let eps = T::of(1e-12).max(T::epsilon());
    let inv_n = T::one() / T::of(pairs.len() as f64);
    let lambda = T::of(m.config.train.lambda_l2);
    let mut s = Scratch::new(l);
    let mut bce = T::zero();
    let mut grads = grads;
    if let Some(g) = grads.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = T::zero());
    }
    for p in pairs {
        let logit = forward(&m.params, l, &m.factors, p.model, p.instance, &mut s);
        let zhat = sigmoid(logit);
        let c = zhat.max(eps).min(T::one() - eps);
        bce -= if p.score == 1 { c.ln() } else { (T::one() - c).ln() };
        if let Some(g) = grads.as_deref_mut() {
            let delta = (zhat - T::of(f64::from(p.score))) * inv_n;
            backward(&m.params, l, &m.factors, p.model, p.instance, delta, &mut s, g);
        }
    }
    let mut l2 = T::zero();
    for (idx, &v) in m.params.iter().enumerate() {
        if !l.is_bias(idx) {
            l2 += v * v;
        }
    }
    if let Some(g) = grads {
        let two_l = T::of(2.0) * lambda;
        for (idx, (gv, &v)) in g.iter_mut().zip(&m.params).enumerate() {
            if !l.is_bias(idx) {
                *gv += two_l * v;
            }
        }
    }
    bce * inv_n + lambda * l2
}

impl<T: Scalar> NcfModel<T> {
    /// Builds vocabularies from the fitted observations and draws initial weights.
    pub fn initialize(obs: &ObservationSet, config: &NcfConfig) -> Result<Self> {
        config.train.validate()?;
        if config.factor_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::InvalidConfig("factor_dim and hidden sizes must be positive".into()));
        }
        let omega = obs.fit_pairs(config.train.dev_visibility);
        if omega.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let factors = FactorEmbedding::build(obs, &omega);
        let layout = NcfLayout::new(
            &factors,
            obs.n_instances(),
            config.train.latent_dim,
            config.factor_dim,
            config.hidden,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let mut params = vec![T::zero(); layout.len()];
        let mut fill = |range: std::ops::Range<usize>, scale: f64, params: &mut [T]| {
            for v in &mut params[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::of(z * scale);
            }
        };
        let init = config.train.init_scale;
        fill(layout.model_emb..layout.w1, init, &mut params);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        fill(layout.w1..layout.b1, he(layout.input_dim), &mut params);
        fill(layout.w2..layout.b2, he(layout.hidden[0]), &mut params);
        fill(layout.w3..layout.b3, (1.0 / layout.hidden[1] as f64).sqrt(), &mut params);
        Ok(Self {
            model_ids: obs.model_ids(),
            instance_ids: obs.instance_ids(),
            factors,
            layout,
            params,
            config: config.clone(),
            training_log: Vec::new(),
            best_epoch: 0,
        })
    }

    pub fn logit(&self, u: usize, i: usize) -> T {
        let mut s = Scratch::new(&self.layout);
        forward(&self.params, &self.layout, &self.factors, u, i, &mut s)
    }

    /// Output-layer weights and bias, e.g. for zeroing in tests.
    pub fn output_layer_mut(&mut self) -> &mut [T] {
        let l = self.layout;
        &mut self.params[l.w3..=l.b3]
    }
}

fn check_pairs<T: Scalar>(m: &NcfModel<T>, pairs: &[ObservedPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let (nm, ni) = (m.factors.model_slot.len(), m.factors.bench_slot.len());
    for p in pairs {
        if p.model >= nm || p.instance >= ni {
            return Err(Error::IndexOutOfRange {
                kind: "pair",
                index: p.model.max(p.instance),
                len: nm.min(ni),
            });
        }
    }
    Ok(())
}

/// Mean BCE plus `λ_L2` times the squared norm of all non-bias parameters.
pub fn ncf_objective<T: Scalar>(m: &NcfModel<T>, pairs: &[ObservedPair]) -> Result<T> {
    check_pairs(m, pairs)?;
    Ok(objective_impl(m, pairs, None))
}

/// Gradient of [`ncf_objective`] in flat parameter layout.
pub fn ncf_gradients<T: Scalar>(m: &NcfModel<T>, pairs: &[ObservedPair]) -> Result<Vec<T>> {
    check_pairs(m, pairs)?;
    let mut g = vec![T::zero(); m.params.len()];
    objective_impl(m, pairs, Some(&mut g));
    Ok(g)
}

pub fn ncf_predict<T: Scalar>(m: &NcfModel<T>, u: usize, i: usize) -> Result<T> {
    check_pairs(m, &[ObservedPair { model: u, instance: i, score: 0 }])?;
    Ok(sigmoid(m.logit(u, i)))
}

#[derive(Clone)]
struct State<T> {
    model: NcfModel<T>,
    adam: AdamState<T>,
}

pub fn ncf_train<T: Scalar>(obs: &ObservationSet, config: &NcfConfig) -> Result<NcfModel<T>> {
    let model = NcfModel::<T>::initialize(obs, config)?;
    let omega = obs.fit_pairs(config.train.dev_visibility);
    let dev = super::dev_pairs(obs);
    let adam_cfg = config.train.adam();
    let mut grads = vec![T::zero(); model.params.len()];
    let mut order = omega.clone();
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.train.seed.wrapping_add(1));
    let state = State {
        adam: AdamState::new(model.params.len()),
        model,
    };
    let step = |s: &mut State<T>, _: usize| -> Result<f64> {
        let batches: Vec<&[ObservedPair]> = match config.train.batch_size {
            None => vec![&omega[..]],
            Some(b) => {
                order.shuffle(&mut batch_rng);
                order.chunks(b).collect()
            }
        };
        let n = batches.len();
        let mut loss = 0.0;
        for batch in batches {
            loss += objective_impl(&s.model, batch, Some(&mut grads)).as_f64();
            s.adam.step(&mut s.model.params, &grads, &adam_cfg);
        }
        Ok(loss / n as f64)
    };
    let metric = |s: &State<T>| {
        if dev.is_empty() {
            return None;
        }
        let mut scratch = Scratch::new(&s.model.layout);
        let scored: Vec<(T, u8)> = dev
            .iter()
            .map(|p| {
                let z = forward(&s.model.params, &s.model.layout, &s.model.factors, p.model, p.instance, &mut scratch);
                (sigmoid(z), p.score)
            })
            .collect();
        auc_roc(&scored).ok()
    };
    let out = fit_with_early_stopping(state, config.train.max_epochs, config.train.patience, step, metric)?;
    let mut model = out.best.model;
    if model.params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { epoch: out.best_epoch });
    }
    model.training_log = out.log;
    model.best_epoch = out.best_epoch;
    Ok(model)
}

impl<T: Scalar> Predictor for NcfModel<T> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        sigmoid(self.logit(model, instance)).as_f64()
    }
}
