//! Run settings: defaults, overridden by a JSON file, overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use lineage_core::dataset::{load_dataset, load_dataset_dir, split_models, DevVisibility, ObservationSet, Split};
use lineage_core::lrmf::ColdStartMode;
use lineage_core::pipeline::{InstanceGraphScope, PipelineConfig};
use serde::{Deserialize, Serialize};

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            split_fractions: [0.724, 0.138, 0.138],
            split_seed: 0,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColdStartArg {
    Joint,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InstanceGraphArg {
    All,
    Observed,
}

fn fraction_list(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c] = parts[..] else {
        return Err("expected three comma-separated fractions".into());
    };
    if [a, b, c].iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err("fractions must lie in (0, 1) and sum to 1".into());
    }
    Ok([a, b, c])
}

pub fn unit_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and nonnegative"))
    }
}

/// Where the dataset lives and how models are split.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding models.jsonl, instances.jsonl and observations.jsonl.
    #[arg(long, required_unless_present_all = ["models", "instances", "observations"])]
    pub data: Option<PathBuf>,
    /// Model records file (overrides --data).
    #[arg(long, requires_all = ["instances", "observations"])]
    pub models: Option<PathBuf>,
    /// Instance records file (overrides --data).
    #[arg(long, requires_all = ["models", "observations"])]
    pub instances: Option<PathBuf>,
    /// Observation records file (overrides --data).
    #[arg(long, requires_all = ["models", "instances"])]
    pub observations: Option<PathBuf>,
    /// Train, dev and test shares of models, e.g. 0.5,0.1,0.4.
    #[arg(long, value_parser = fraction_list, conflicts_with = "splits")]
    pub split_fractions: Option<[f64; 3]>,
    /// Seed for the random model split.
    #[arg(long, conflicts_with = "splits")]
    pub split_seed: Option<u64>,
    /// JSON object mapping every model id to "train", "dev" or "test".
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// JSON settings file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl DataArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::load(self.config.as_deref())?;
        if let Some(f) = self.split_fractions {
            s.split_fractions = f;
        }
        if let Some(seed) = self.split_seed {
            s.split_seed = seed;
        }
        Ok(s)
    }

    /// Loads and splits the dataset.
    pub fn load(&self, settings: &Settings) -> Result<ObservationSet> {
        let set = match (&self.models, &self.instances, &self.observations) {
            (Some(m), Some(i), Some(o)) => load_dataset(m, i, o)?,
            _ => {
                let dir = self.data.as_ref().expect("clap requires --data");
                load_dataset_dir(dir).with_context(|| format!("loading dataset from {}", dir.display()))?
            }
        };
        match &self.splits {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let map: BTreeMap<String, Split> =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                Ok(set.with_split_map(&map)?)
            }
            None => Ok(split_models(set, settings.split_fractions, settings.split_seed)?),
        }
    }
}

/// Model and optimizer hyperparameters.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Embedding dimension.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Weight of the L2 penalty on both embedding tables.
    #[arg(long, value_parser = nonneg)]
    pub lambda_l2: Option<f64>,
    /// Weight of the lineage smoothing penalty.
    #[arg(long, value_parser = nonneg)]
    pub lambda_model: Option<f64>,
    /// Weight of the instance-similarity smoothing penalty.
    #[arg(long, value_parser = nonneg)]
    pub lambda_instance: Option<f64>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Upper bound on training epochs.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without dev improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Initialization and shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minibatch size (full batch when omitted).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// How models without observations get embeddings.
    #[arg(long, value_enum)]
    pub coldstart: Option<ColdStartArg>,
    /// Fit dev observations too instead of using them only for early stopping.
    #[arg(long)]
    pub dev_in_loss: bool,
    /// Neighbors per instance in the similarity graph.
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// Instances the similarity graph is built over.
    #[arg(long, value_enum)]
    pub instance_graph: Option<InstanceGraphArg>,
    /// Lineage radius for MLA.
    #[arg(long)]
    pub mla_hops: Option<usize>,
}

impl HyperArgs {
    pub fn apply(&self, p: &mut PipelineConfig) {
        let t = &mut p.train;
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field {
                    $target = v;
                }
            };
        }
        set!(latent_dim, t.latent_dim);
        set!(lambda_l2, t.lambda_l2);
        set!(lambda_model, t.lambda_model);
        set!(lambda_instance, t.lambda_instance);
        set!(learning_rate, t.learning_rate);
        set!(max_epochs, t.max_epochs);
        set!(patience, t.patience);
        set!(seed, t.seed);
        set!(knn_k, p.knn_k);
        set!(mla_hops, p.mla_hops);
        if self.batch_size.is_some() {
            t.batch_size = self.batch_size;
        }
        if let Some(c) = self.coldstart {
            t.coldstart = match c {
                ColdStartArg::Joint => ColdStartMode::Joint,
                ColdStartArg::ClosedForm => ColdStartMode::ClosedForm,
            };
        }
        if self.dev_in_loss {
            t.dev_visibility = DevVisibility::InLoss;
        }
        if let Some(g) = self.instance_graph {
            p.instance_graph = match g {
                InstanceGraphArg::All => InstanceGraphScope::All,
                InstanceGraphArg::Observed => InstanceGraphScope::Observed,
            };
        }
    }
}
