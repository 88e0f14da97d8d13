//! Synthetic model ecosystems with known latent abilities.
//!
//! Roots draw abilities from a standard normal. Each later generation spawns
//! children from the previous one; a child copies its parent's ability plus
//! Gaussian drift, and a merged child averages two parents before drifting.
//! Outcomes are Bernoulli draws of `sigmoid(ability . difficulty)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{InstanceRecord, ModelRecord, ModelType, Observation, ObservationSet};
use crate::error::{Error, Result};
use crate::scalar::{dot, sigmoid};

/// File name of the ground-truth sidecar written next to the dataset.
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_roots: usize,
    /// Children spawned by every model of the previous generation.
    pub children_per_generation: usize,
    pub generations: usize,
    /// Probability that a child is a merge of two parents.
    pub merge_fraction: f64,
    pub n_instances: usize,
    pub n_benchmarks: usize,
    pub latent_dim: usize,
    /// Standard deviation of the per-coordinate drift from parent to child.
    pub drift_sigma: f64,
    /// Target standard deviation of the logit `ability . difficulty`.
    pub logit_scale: f64,
    /// Standard deviation of the noise separating instance embeddings from
    /// the (unscaled) difficulty direction.
    pub embed_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_roots: 4,
            children_per_generation: 2,
            generations: 3,
            merge_fraction: 0.2,
            n_instances: 300,
            n_benchmarks: 3,
            latent_dim: 8,
            drift_sigma: 0.3,
            logit_scale: 2.0,
            embed_noise: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Total number of generated models.
    pub fn n_models(&self) -> usize {
        let mut layer = self.n_roots;
        let mut total = layer;
        for _ in 0..self.generations {
            layer *= self.children_per_generation;
            total += layer;
        }
        total
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.n_roots == 0 || self.n_instances == 0 || self.n_benchmarks == 0 || self.latent_dim == 0 {
            return bad("n_roots, n_instances, n_benchmarks and latent_dim must be positive");
        }
        if self.generations > 0 && self.children_per_generation == 0 {
            return bad("children_per_generation must be positive");
        }
        if self.n_benchmarks > self.n_instances {
            return bad("n_benchmarks exceeds n_instances");
        }
        if !(0.0..=1.0).contains(&self.merge_fraction) {
            return bad("merge_fraction must lie in [0, 1]");
        }
        for (name, v) in [
            ("drift_sigma", self.drift_sigma),
            ("logit_scale", self.logit_scale),
            ("embed_noise", self.embed_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// Latent quantities behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub abilities: BTreeMap<String, Vec<f64>>,
    pub difficulties: BTreeMap<String, Vec<f64>>,
    /// Root index of each model's primary ancestry.
    pub family: BTreeMap<String, usize>,
}

impl SynthTruth {
    /// Success probability of `model` on `instance`.
    pub fn probability(&self, model: &str, instance: &str) -> Option<f64> {
        let a = self.abilities.get(model)?;
        let d = self.difficulties.get(instance)?;
        Some(sigmoid(dot(a, d)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

const PARAMETER_SIZES: [f64; 6] = [0.5, 1.5, 3.0, 7.0, 13.0, 34.0];

/// Draws a dataset and its ground truth; fully determined by `config`.
pub fn generate(config: &SynthConfig) -> Result<(ObservationSet, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.latent_dim;
    let n_models = config.n_models();
    let width = n_models.to_string().len().max(3);
    let model_id = |u: usize| format!("m{u:0width$}");

    let mut abilities: Vec<Vec<f64>> = Vec::with_capacity(n_models);
    let mut family: Vec<usize> = Vec::with_capacity(n_models);
    let mut models: Vec<ModelRecord> = Vec::with_capacity(n_models);
    for r in 0..config.n_roots {
        abilities.push(normal_vec(&mut rng, dim, 1.0));
        family.push(r);
        models.push(ModelRecord {
            model_id: model_id(r),
            architecture_type: format!("arch{r}"),
            model_type: ModelType::Other,
            parameter_size: Some(PARAMETER_SIZES[r % PARAMETER_SIZES.len()]),
            parents: vec![],
        });
    }

    let mut prev = 0..config.n_roots;
    for _ in 0..config.generations {
        let start = abilities.len();
        for p in prev.clone() {
            for _ in 0..config.children_per_generation {
                let u = abilities.len();
                let merge = u > 1 && rng.random::<f64>() < config.merge_fraction;
                let (base, parents) = if merge {
                    let others: Vec<usize> = (0..start).filter(|&v| v != p).collect();
                    let q = *others.choose(&mut rng).expect("at least two earlier models");
                    let mean = abilities[p]
                        .iter()
                        .zip(&abilities[q])
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect::<Vec<_>>();
                    (mean, vec![p, q])
                } else {
                    (abilities[p].clone(), vec![p])
                };
                let drift = normal_vec(&mut rng, dim, config.drift_sigma);
                abilities.push(base.iter().zip(drift).map(|(b, d)| b + d).collect());
                let fam = family[p];
                family.push(fam);
                models.push(ModelRecord {
                    model_id: model_id(u),
                    architecture_type: format!("arch{fam}"),
                    model_type: if merge { ModelType::Merged } else { ModelType::Finetuned },
                    parameter_size: Some(PARAMETER_SIZES[fam % PARAMETER_SIZES.len()]),
                    parents: parents.into_iter().map(model_id).collect(),
                });
            }
        }
        prev = start..abilities.len();
    }

    let centers: Vec<Vec<f64>> = (0..config.n_benchmarks)
        .map(|_| normal_vec(&mut rng, dim, 1.0))
        .collect();
    // Center and per-instance offset each contribute unit variance per
    // coordinate; this rescales the logit to `logit_scale` standard deviations.
    let scale = config.logit_scale / (2.0 * dim as f64).sqrt();
    let iwidth = config.n_instances.to_string().len().max(4);
    let mut instances = Vec::with_capacity(config.n_instances);
    let mut difficulties = Vec::with_capacity(config.n_instances);
    for i in 0..config.n_instances {
        let b = i * config.n_benchmarks / config.n_instances;
        let offset = normal_vec(&mut rng, dim, 1.0);
        let raw: Vec<f64> = centers[b].iter().zip(&offset).map(|(c, o)| c + o).collect();
        let noise = normal_vec(&mut rng, dim, config.embed_noise);
        instances.push(InstanceRecord {
            instance_id: format!("i{i:0iwidth$}"),
            benchmark_id: format!("bench{b}"),
            embedding: Some(raw.iter().zip(noise).map(|(r, n)| r + n).collect()),
        });
        difficulties.push(raw.iter().map(|r| r * scale).collect::<Vec<f64>>());
    }

    let mut observations = Vec::with_capacity(n_models * config.n_instances);
    for (u, a) in abilities.iter().enumerate() {
        for (i, d) in difficulties.iter().enumerate() {
            let p = sigmoid(dot(a, d));
            observations.push(Observation {
                model_id: models[u].model_id.clone(),
                instance_id: instances[i].instance_id.clone(),
                score: u8::from(rng.random::<f64>() < p),
            });
        }
    }

    let truth = SynthTruth {
        abilities: models.iter().map(|m| m.model_id.clone()).zip(abilities).collect(),
        difficulties: instances
            .iter()
            .map(|r| r.instance_id.clone())
            .zip(difficulties)
            .collect(),
        family: models.iter().map(|m| m.model_id.clone()).zip(family).collect(),
    };
    let set = ObservationSet::new(models, instances, observations)?;
    Ok((set, truth))
}

/// Writes the three dataset files and the truth sidecar into `dir`.
pub fn write(dir: &Path, set: &ObservationSet, truth: &SynthTruth) -> Result<()> {
    set.save_dir(dir)?;
    truth.save(&dir.join(TRUTH_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::build_lineage_graph;

    #[test]
    fn default_has_sixty_models() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.n_models(), 60);
        let (set, truth) = generate(&cfg).unwrap();
        assert_eq!(set.n_models(), 60);
        assert_eq!(set.n_instances(), 300);
        assert_eq!(set.pairs().len(), 60 * 300);
        assert_eq!(set.benchmarks(), vec!["bench0", "bench1", "bench2"]);
        assert_eq!(truth.abilities.len(), 60);
    }

    #[test]
    fn zero_drift_children_copy_parent() {
        let cfg = SynthConfig {
            drift_sigma: 0.0,
            merge_fraction: 0.0,
            ..SynthConfig::default()
        };
        let (set, truth) = generate(&cfg).unwrap();
        for m in set.models() {
            if let [p] = m.parents.as_slice() {
                assert_eq!(truth.abilities[&m.model_id], truth.abilities[p]);
            }
        }
    }

    #[test]
    fn zero_drift_merge_is_parent_mean() {
        let cfg = SynthConfig {
            drift_sigma: 0.0,
            merge_fraction: 1.0,
            ..SynthConfig::default()
        };
        let (set, truth) = generate(&cfg).unwrap();
        let merged: Vec<_> = set.models().iter().filter(|m| m.parents.len() == 2).collect();
        assert!(!merged.is_empty());
        for m in merged {
            let a = &truth.abilities[&m.parents[0]];
            let b = &truth.abilities[&m.parents[1]];
            for ((x, y), z) in a.iter().zip(b).zip(&truth.abilities[&m.model_id]) {
                assert_eq!(*z, 0.5 * (x + y));
            }
            assert_eq!(m.model_type, ModelType::Merged);
        }
    }

    #[test]
    fn families_are_connected() {
        let cfg = SynthConfig {
            merge_fraction: 0.0,
            ..SynthConfig::default()
        };
        let (set, truth) = generate(&cfg).unwrap();
        let g = build_lineage_graph(set.models()).graph;
        assert_eq!(build_lineage_graph(set.models()).missing_parents, 0);
        for r in 0..cfg.n_roots {
            let members: Vec<usize> = (0..set.n_models())
                .filter(|&u| truth.family[&set.models()[u].model_id] == r)
                .collect();
            let reach = g.neighborhood(members[0], usize::MAX);
            for u in &members {
                assert!(reach.contains(u) || *u == members[0]);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig::default();
        let (a, ta) = generate(&cfg).unwrap();
        let (b, tb) = generate(&cfg).unwrap();
        assert_eq!(a.observations(), b.observations());
        assert_eq!(ta, tb);
        let (c, _) = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.observations(), c.observations());
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SynthConfig { n_roots: 0, ..SynthConfig::default() },
            SynthConfig { merge_fraction: 1.5, ..SynthConfig::default() },
            SynthConfig { drift_sigma: -1.0, ..SynthConfig::default() },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        }
    }
}
