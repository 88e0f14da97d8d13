//! Lineage-regularized matrix factorization.
//!
//! Predictions are `σ(m_u · x_i)`. The objective is mean binary cross-entropy
//! over the observed pairs plus an L2 penalty on both embedding tables and
//! two Laplacian smoothness penalties: `λ_M Tr(Mᵀ L_M M)` over the lineage
//! graph and `λ_X Tr(Xᵀ L_X X)` over the instance graph. Full-batch Adam
//! with early stopping on dev AUC-ROC fits the parameters.
//!
//! Models without observations in the loss ("cold" models) are handled in
//! one of two ways, see [`ColdStartMode`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DevVisibility, ObservationSet, ObservedPair, Split};
use crate::error::{Error, Result};
use crate::graphs::Laplacian;
use crate::matrix::Matrix;
use crate::metrics::auc_roc;
use crate::optim::{fit_with_early_stopping, AdamConfig, AdamState, EpochRecord};
use crate::predictor::Predictor;
use crate::scalar::{dot, sigmoid, Scalar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStartMode {
    /// Cold rows stay in `M` during training and only feel the L2 and
    /// lineage penalties, so information can travel several hops.
    #[default]
    Joint,
    /// Cold rows are held at zero while training on the warm subgraph, then
    /// set to the minimizer of the penalty terms given their warm neighbors.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub lambda_l2: f64,
    pub lambda_model: f64,
    pub lambda_instance: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Standard deviation of the normal initialization.
    pub init_scale: f64,
    pub coldstart: ColdStartMode,
    pub dev_visibility: DevVisibility,
    /// Minibatch size; `None` means full batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            lambda_l2: 1e-5,
            lambda_model: 1e-4,
            lambda_instance: 1e-5,
            learning_rate: 3e-3,
            max_epochs: 10_000,
            patience: 100,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: 0.1,
            coldstart: ColdStartMode::Joint,
            dev_visibility: DevVisibility::EarlyStoppingOnly,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    /// Plain MF: both Laplacian penalties switched off.
    pub fn plain_mf(mut self) -> Self {
        self.lambda_model = 0.0;
        self.lambda_instance = 0.0;
        self
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if !(nonneg(self.lambda_l2) && nonneg(self.lambda_model) && nonneg(self.lambda_instance)) {
            return bad("penalty weights must be finite and nonnegative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !nonneg(self.init_scale) {
            return bad("init_scale must be nonnegative");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LrmfModel<T> {
    pub model_ids: Vec<String>,
    pub instance_ids: Vec<String>,
    /// One row per model.
    pub model_embeddings: Matrix<T>,
    /// One row per instance.
    pub instance_embeddings: Matrix<T>,
    /// Models that had observations in the fitted loss.
    pub warm_models: Vec<bool>,
    pub config: TrainConfig,
    pub training_log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Objective broken into its weighted terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts<T> {
    pub total: T,
    pub bce: T,
    pub l2: T,
    pub lap_model: T,
    pub lap_instance: T,
}

#[derive(Debug, Clone, Copy)]
struct Penalties<T> {
    l2: T,
    model: T,
    instance: T,
}

impl<T: Scalar> Penalties<T> {
    fn from_config(c: &TrainConfig) -> Self {
        Self {
            l2: T::of(c.lambda_l2),
            model: T::of(c.lambda_model),
            instance: T::of(c.lambda_instance),
        }
    }
}

fn log_clamp<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon())
}

fn check_shapes<T: Scalar>(
    m: &Matrix<T>,
    x: &Matrix<T>,
    pairs: &[ObservedPair],
    lm: &Laplacian<T>,
    lx: &Laplacian<T>,
) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if m.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: m.cols(),
            found: x.cols(),
        });
    }
    if lm.n_nodes() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: lm.n_nodes(),
        });
    }
    if lx.n_nodes() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: lx.n_nodes(),
        });
    }
    for p in pairs {
        if p.model >= m.rows() {
            return Err(Error::IndexOutOfRange {
                kind: "model",
                index: p.model,
                len: m.rows(),
            });
        }
        if p.instance >= x.rows() {
            return Err(Error::IndexOutOfRange {
                kind: "instance",
                index: p.instance,
                len: x.rows(),
            });
        }
    }
    Ok(())
}

/// Objective value and, when `grads` is given, its exact gradient.
///
/// `bce_pairs` sets the BCE normalization (|Ω| or the batch size).
fn objective_and_gradients<T: Scalar>(
    m: &Matrix<T>,
    x: &Matrix<T>,
    pairs: &[ObservedPair],
    lm: &Laplacian<T>,
    lx: &Laplacian<T>,
    pen: Penalties<T>,
    mut grads: Option<(&mut Matrix<T>, &mut Matrix<T>)>,
) -> ObjectiveParts<T> {
    let eps = log_clamp::<T>();
    let inv_n = T::one() / T::of(pairs.len() as f64);
    let two = T::of(2.0);

    if let Some((gm, gx)) = grads.as_mut() {
        gm.fill(T::zero());
        gx.fill(T::zero());
    }

    let mut bce = T::zero();
    for p in pairs {
        let mu = m.row(p.model);
        let xi = x.row(p.instance);
        let zhat = sigmoid(dot(mu, xi));
        let clamped = zhat.max(eps).min(T::one() - eps);
        bce -= if p.score == 1 {
            clamped.ln()
        } else {
            (T::one() - clamped).ln()
        };
        if let Some((gm, gx)) = grads.as_mut() {
            let r = (zhat - T::of(f64::from(p.score))) * inv_n;
            for (g, &v) in gm.row_mut(p.model).iter_mut().zip(xi) {
                *g += r * v;
            }
            for (g, &v) in gx.row_mut(p.instance).iter_mut().zip(mu) {
                *g += r * v;
            }
        }
    }
    bce *= inv_n;

    let l2 = if pen.l2 > T::zero() {
        pen.l2 * (m.frobenius_sq() + x.frobenius_sq())
    } else {
        T::zero()
    };
    // Terms with a zero weight are skipped entirely so that plain MF follows
    // exactly the same arithmetic regardless of the graphs passed in.
    let lap_model = if pen.model > T::zero() && lm.has_edges() {
        pen.model * lm.quadratic(m).expect("shape checked")
    } else {
        T::zero()
    };
    let lap_instance = if pen.instance > T::zero() && lx.has_edges() {
        pen.instance * lx.quadratic(x).expect("shape checked")
    } else {
        T::zero()
    };

    if let Some((gm, gx)) = grads {
        if pen.l2 > T::zero() {
            let s = two * pen.l2;
            for (g, &v) in gm.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *g += s * v;
            }
            for (g, &v) in gx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                *g += s * v;
            }
        }
        if pen.model > T::zero() && lm.has_edges() {
            for u in 0..m.rows() {
                lm.apply_row_into(m, u, two * pen.model, gm.row_mut(u));
            }
        }
        if pen.instance > T::zero() && lx.has_edges() {
            for i in 0..x.rows() {
                lx.apply_row_into(x, i, two * pen.instance, gx.row_mut(i));
            }
        }
    }

    ObjectiveParts {
        total: bce + l2 + lap_model + lap_instance,
        bce,
        l2,
        lap_model,
        lap_instance,
    }
}

/// Full objective of `model` over the observed pairs `omega`.
pub fn objective<T: Scalar>(
    model: &LrmfModel<T>,
    omega: &[ObservedPair],
    lm: &Laplacian<T>,
    lx: &Laplacian<T>,
) -> Result<ObjectiveParts<T>> {
    let (m, x) = (&model.model_embeddings, &model.instance_embeddings);
    check_shapes(m, x, omega, lm, lx)?;
    Ok(objective_and_gradients(m, x, omega, lm, lx, Penalties::from_config(&model.config), None))
}

/// Analytic gradient of [`objective`] with respect to `(M, X)`.
pub fn gradients<T: Scalar>(
    model: &LrmfModel<T>,
    omega: &[ObservedPair],
    lm: &Laplacian<T>,
    lx: &Laplacian<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (m, x) = (&model.model_embeddings, &model.instance_embeddings);
    check_shapes(m, x, omega, lm, lx)?;
    let mut gm = Matrix::zeros(m.rows(), m.cols());
    let mut gx = Matrix::zeros(x.rows(), x.cols());
    objective_and_gradients(
        m,
        x,
        omega,
        lm,
        lx,
        Penalties::from_config(&model.config),
        Some((&mut gm, &mut gx)),
    );
    Ok((gm, gx))
}

#[derive(Clone)]
struct TrainState<T> {
    m: Matrix<T>,
    x: Matrix<T>,
    adam_m: AdamState<T>,
    adam_x: AdamState<T>,
}

/// Closed-form embedding for `u` given its warm neighbors' rows in `m`:
/// `λ_M Σ_v A_uv m_v / (λ_M d_u + λ_L2)`. Falls back to zero (so every
/// prediction is 0.5) when `u` has no warm neighbor.
fn closed_form_row<T: Scalar>(
    m: &Matrix<T>,
    lm: &Laplacian<T>,
    warm: &[bool],
    pen: Penalties<T>,
    u: usize,
) -> Vec<T> {
    let mut acc = vec![T::zero(); m.cols()];
    let mut degree = T::zero();
    for &(v, w) in lm.neighbors(u) {
        if !warm[v] {
            continue;
        }
        degree += w;
        for (a, &val) in acc.iter_mut().zip(m.row(v)) {
            *a += w * val;
        }
    }
    let denom = pen.model * degree + pen.l2;
    if degree == T::zero() || pen.model == T::zero() || denom == T::zero() {
        log::warn!("cold model {u} has no usable warm lineage neighbor; using a zero embedding");
        return vec![T::zero(); m.cols()];
    }
    let coef = pen.model / denom;
    acc.iter_mut().for_each(|a| *a *= coef);
    acc
}

fn fill_cold_rows<T: Scalar>(m: &mut Matrix<T>, lm: &Laplacian<T>, warm: &[bool], pen: Penalties<T>) {
    let rows: Vec<(usize, Vec<T>)> = (0..m.rows())
        .filter(|&u| !warm[u])
        .map(|u| (u, closed_form_row(m, lm, warm, pen, u)))
        .collect();
    for (u, row) in rows {
        m.row_mut(u).copy_from_slice(&row);
    }
}

/// Embedding for a model without observations, from its lineage neighbors.
///
/// Uses the closed-form minimizer of the penalty terms with warm neighbors
/// held fixed, whatever mode the model was trained in.
pub fn coldstart_embed<T: Scalar>(model: &LrmfModel<T>, lm: &Laplacian<T>, new_model: usize) -> Result<Vec<T>> {
    let n = model.model_embeddings.rows();
    if new_model >= n {
        return Err(Error::IndexOutOfRange {
            kind: "model",
            index: new_model,
            len: n,
        });
    }
    if lm.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lm.n_nodes(),
        });
    }
    Ok(closed_form_row(
        &model.model_embeddings,
        lm,
        &model.warm_models,
        Penalties::from_config(&model.config),
        new_model,
    ))
}

fn dev_auc<T: Scalar>(m: &Matrix<T>, x: &Matrix<T>, dev: &[ObservedPair]) -> Option<f64> {
    if dev.is_empty() {
        return None;
    }
    let scored: Vec<(T, u8)> = dev
        .iter()
        .map(|p| (sigmoid(dot(m.row(p.model), x.row(p.instance))), p.score))
        .collect();
    auc_roc(&scored).ok()
}

/// Fits the model on `obs` with lineage Laplacian `lm` and instance Laplacian `lx`.
pub fn train<T: Scalar>(
    obs: &ObservationSet,
    lm: &Laplacian<T>,
    lx: &Laplacian<T>,
    config: &TrainConfig,
) -> Result<LrmfModel<T>> {
    config.validate()?;
    let n_models = obs.n_models();
    let n_inst = obs.n_instances();
    if lm.n_nodes() != n_models {
        return Err(Error::DimensionMismatch {
            expected: n_models,
            found: lm.n_nodes(),
        });
    }
    if lx.n_nodes() != n_inst {
        return Err(Error::DimensionMismatch {
            expected: n_inst,
            found: lx.n_nodes(),
        });
    }
    let omega = obs.fit_pairs(config.dev_visibility);
    if omega.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let dev = obs.pairs_in(Split::Dev);

    let mut warm = vec![false; n_models];
    for p in &omega {
        warm[p.model] = true;
    }
    let pen = Penalties::<T>::from_config(config);
    let closed_form = config.coldstart == ColdStartMode::ClosedForm;
    let train_lm = if closed_form { lm.restricted(&warm) } else { lm.clone() };

    let d = config.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut m = Matrix::random_normal(n_models, d, config.init_scale, &mut rng);
    let x = Matrix::random_normal(n_inst, d, config.init_scale, &mut rng);
    if closed_form {
        for u in (0..n_models).filter(|&u| !warm[u]) {
            m.row_mut(u).fill(T::zero());
        }
    }
    let state = TrainState {
        adam_m: AdamState::new(n_models * d),
        adam_x: AdamState::new(n_inst * d),
        m,
        x,
    };

    let adam = config.adam();
    let mut gm = Matrix::zeros(n_models, d);
    let mut gx = Matrix::zeros(n_inst, d);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order = omega.clone();

    let step = |s: &mut TrainState<T>, _epoch: usize| -> Result<f64> {
        let batches: Vec<&[ObservedPair]> = match config.batch_size {
            None => vec![&omega[..]],
            Some(b) => {
                order.shuffle(&mut batch_rng);
                order.chunks(b).collect()
            }
        };
        let mut loss = 0.0;
        let n_batches = batches.len();
        for batch in batches {
            let parts = objective_and_gradients(&s.m, &s.x, batch, &train_lm, lx, pen, Some((&mut gm, &mut gx)));
            loss += parts.total.as_f64();
            if closed_form {
                for u in (0..n_models).filter(|&u| !warm[u]) {
                    gm.row_mut(u).fill(T::zero());
                }
            }
            s.adam_m.step(s.m.as_mut_slice(), gm.as_slice(), &adam);
            s.adam_x.step(s.x.as_mut_slice(), gx.as_slice(), &adam);
        }
        Ok(loss / n_batches as f64)
    };
    let metric = |s: &TrainState<T>| {
        if closed_form {
            let mut m = s.m.clone();
            fill_cold_rows(&mut m, lm, &warm, pen);
            dev_auc(&m, &s.x, &dev)
        } else {
            dev_auc(&s.m, &s.x, &dev)
        }
    };

    let outcome = fit_with_early_stopping(state, config.max_epochs, config.patience, step, metric)?;
    let TrainState { mut m, x, .. } = outcome.best;
    if closed_form {
        fill_cold_rows(&mut m, lm, &warm, pen);
    }
    if !(m.is_finite() && x.is_finite()) {
        return Err(Error::Divergence {
            epoch: outcome.best_epoch,
        });
    }
    Ok(LrmfModel {
        model_ids: obs.model_ids(),
        instance_ids: obs.instance_ids(),
        model_embeddings: m,
        instance_embeddings: x,
        warm_models: warm,
        config: config.clone(),
        training_log: outcome.log,
        best_epoch: outcome.best_epoch,
    })
}

impl<T: Scalar> LrmfModel<T> {
    /// Wraps explicit embedding tables (all models treated as warm).
    pub fn from_embeddings(
        model_ids: Vec<String>,
        instance_ids: Vec<String>,
        model_embeddings: Matrix<T>,
        instance_embeddings: Matrix<T>,
        config: TrainConfig,
    ) -> Result<Self> {
        if model_embeddings.rows() != model_ids.len() || instance_embeddings.rows() != instance_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: model_ids.len(),
                found: model_embeddings.rows(),
            });
        }
        if model_embeddings.cols() != instance_embeddings.cols() {
            return Err(Error::DimensionMismatch {
                expected: model_embeddings.cols(),
                found: instance_embeddings.cols(),
            });
        }
        Ok(Self {
            warm_models: vec![true; model_ids.len()],
            model_ids,
            instance_ids,
            model_embeddings,
            instance_embeddings,
            config,
            training_log: Vec::new(),
            best_epoch: 0,
        })
    }

    /// `σ(m_u · x_i)`.
    pub fn predict(&self, u: usize, i: usize) -> Result<T> {
        if u >= self.model_embeddings.rows() {
            return Err(Error::IndexOutOfRange {
                kind: "model",
                index: u,
                len: self.model_embeddings.rows(),
            });
        }
        if i >= self.instance_embeddings.rows() {
            return Err(Error::IndexOutOfRange {
                kind: "instance",
                index: i,
                len: self.instance_embeddings.rows(),
            });
        }
        Ok(sigmoid(dot(self.model_embeddings.row(u), self.instance_embeddings.row(i))))
    }

    /// Checks that node orders line up with `obs`.
    pub fn check_alignment(&self, obs: &ObservationSet) -> Result<()> {
        if self.model_ids != obs.model_ids() {
            return Err(Error::CheckpointMismatch("model order differs".into()));
        }
        if self.instance_ids != obs.instance_ids() {
            return Err(Error::CheckpointMismatch("instance order differs".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Predictor for LrmfModel<T> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        sigmoid(dot(
            self.model_embeddings.row(model),
            self.instance_embeddings.row(instance),
        ))
        .as_f64()
    }
}
