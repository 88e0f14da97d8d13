//! End-to-end glue: build graphs, fit a predictor, evaluate and route.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::irt::irt_train;
use crate::baselines::mla::Mla;
use crate::baselines::ncf::{ncf_train, NcfConfig};
use crate::checkpoint::Trained;
use crate::dataset::{ObservationSet, Split};
use crate::error::{Error, Result};
use crate::graphs::{build_instance_knn_graph_masked, build_lineage_graph, Graph, Laplacian};
use crate::lrmf::{train, TrainConfig};
use crate::metrics::{evaluate, EvalReport};
use crate::predictor::{OraclePredictor, Predictor};
use crate::routing::{best_model_baseline, random_routing, route, RoutingSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrmf,
    Mf,
    Irt,
    Ncf,
    Mla,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lrmf, Method::Mf, Method::Irt, Method::Ncf, Method::Mla];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lrmf => "lrmf",
            Method::Mf => "mf",
            Method::Irt => "irt",
            Method::Ncf => "ncf",
            Method::Mla => "mla",
        }
    }

    /// Whether fitting produces a checkpointable model.
    pub fn is_trainable(self) -> bool {
        self != Method::Mla
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Which instances the kNN graph spans.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceGraphScope {
    #[default]
    All,
    /// Only instances with at least one fitted observation.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Neighbors per instance in the similarity graph.
    pub knn_k: usize,
    pub instance_graph: InstanceGraphScope,
    /// Lineage radius for MLA.
    pub mla_hops: usize,
    pub ncf_factor_dim: usize,
    pub ncf_hidden: [usize; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ncf = NcfConfig::default();
        Self {
            train: TrainConfig::default(),
            knn_k: 20,
            instance_graph: InstanceGraphScope::All,
            mla_hops: 1,
            ncf_factor_dim: ncf.factor_dim,
            ncf_hidden: ncf.hidden,
        }
    }
}

impl PipelineConfig {
    pub fn ncf(&self) -> NcfConfig {
        NcfConfig {
            train: self.train.clone(),
            factor_dim: self.ncf_factor_dim,
            hidden: self.ncf_hidden,
        }
    }
}

/// A fitted predictor of any method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Model(Trained<f64>),
    Mla(Mla),
}

impl Predictor for Fitted {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        match self {
            Fitted::Model(m) => m.predict(model, instance),
            Fitted::Mla(m) => m.predict(model, instance),
        }
    }
}

impl Fitted {
    pub fn trained(&self) -> Option<&Trained<f64>> {
        match self {
            Fitted::Model(m) => Some(m),
            Fitted::Mla(_) => None,
        }
    }
}

/// Lineage graph from the parent lists in `obs`.
pub fn lineage_graph(obs: &ObservationSet) -> Graph {
    build_lineage_graph(obs.models()).graph
}

/// Instance similarity graph; edgeless when the dataset carries no embeddings.
pub fn instance_graph(obs: &ObservationSet, cfg: &PipelineConfig) -> Result<Graph> {
    if obs.embedding_dim().is_none() {
        log::warn!("dataset has no instance embeddings; the instance graph is empty");
        return Ok(Graph::edgeless(obs.instance_ids()));
    }
    match cfg.instance_graph {
        InstanceGraphScope::All => build_instance_knn_graph_masked(obs.instances(), cfg.knn_k, None),
        InstanceGraphScope::Observed => {
            let mut mask = vec![false; obs.n_instances()];
            for p in obs.fit_pairs(cfg.train.dev_visibility) {
                mask[p.instance] = true;
            }
            build_instance_knn_graph_masked(obs.instances(), cfg.knn_k, Some(&mask))
        }
    }
}

/// Fits `method` on the loss-visible part of `obs`, using `lineage` as the
/// model graph (pass a perturbed graph for robustness runs).
pub fn fit(method: Method, obs: &ObservationSet, lineage: &Graph, cfg: &PipelineConfig) -> Result<Fitted> {
    if lineage.n_nodes() != obs.n_models() {
        return Err(Error::DimensionMismatch {
            expected: obs.n_models(),
            found: lineage.n_nodes(),
        });
    }
    let trained = match method {
        Method::Mla => {
            return Ok(Fitted::Mla(Mla::from_split(
                obs,
                lineage,
                cfg.mla_hops,
                cfg.train.dev_visibility,
            )))
        }
        Method::Lrmf => {
            let lm = if cfg.train.lambda_model > 0.0 {
                Laplacian::new(lineage)
            } else {
                Laplacian::empty(obs.n_models())
            };
            let lx = if cfg.train.lambda_instance > 0.0 {
                Laplacian::new(&instance_graph(obs, cfg)?)
            } else {
                Laplacian::empty(obs.n_instances())
            };
            Trained::Lrmf(train(obs, &lm, &lx, &cfg.train)?)
        }
        Method::Mf => {
            let config = cfg.train.clone().plain_mf();
            Trained::Lrmf(train(
                obs,
                &Laplacian::empty(obs.n_models()),
                &Laplacian::empty(obs.n_instances()),
                &config,
            )?)
        }
        Method::Irt => Trained::Irt(irt_train(obs, &cfg.train)?),
        Method::Ncf => Trained::Ncf(ncf_train(obs, &cfg.ncf())?),
    };
    Ok(Fitted::Model(trained))
}

/// Fits on a split dataset and reports metrics on the test models, which are
/// cold whenever the split holds their observations out of the loss.
pub fn fit_and_evaluate(
    method: Method,
    obs: &ObservationSet,
    lineage: &Graph,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let fitted = fit(method, obs, lineage, cfg)?;
    evaluate(&fitted, obs, Split::Test, method.as_str())
}

/// Instances on which every candidate has a true score.
pub fn fully_observed_instances(obs: &ObservationSet, candidates: &[usize]) -> Vec<usize> {
    (0..obs.n_instances())
        .filter(|&i| candidates.iter().all(|&u| obs.score(u, i).is_some()))
        .collect()
}

/// Oracle, each named predictor, random routing and both best-model
/// baselines on the same pool and instances.
pub fn routing_summary(
    obs: &ObservationSet,
    predictors: &[(String, &dyn Predictor)],
    candidates: &[usize],
    instances: &[usize],
    seed: u64,
) -> Result<RoutingSummary> {
    let mut reports = vec![route("oracle", &OraclePredictor { obs }, candidates, instances, obs)?];
    for (name, p) in predictors {
        reports.push(route(name, *p, candidates, instances, obs)?);
    }
    reports.push(random_routing(obs, candidates, instances, seed)?);
    reports.push(best_model_baseline(obs, candidates, instances, true)?);
    reports.push(best_model_baseline(obs, candidates, instances, false)?);
    Ok(RoutingSummary { reports })
}
