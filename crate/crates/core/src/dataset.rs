//! Sparse binary evaluation records: loading, validation, model splits and
//! per-model subsampling.
//!
//! All three inputs are line-delimited JSON, one record per line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODELS_FILE: &str = "models.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const OBSERVATIONS_FILE: &str = "observations.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Finetuned,
    Merged,
    Other,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Finetuned => "finetuned",
            ModelType::Merged => "merged",
            ModelType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub model_id: String,
    pub architecture_type: String,
    pub model_type: ModelType,
    /// Billions of parameters; `None` when unreported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_size: Option<f64>,
    #[serde(default)]
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub benchmark_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub model_id: String,
    pub instance_id: String,
    pub score: u8,
}

/// An observation resolved to dataset indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedPair {
    pub model: usize,
    pub instance: usize,
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, dev or test)")),
        }
    }
}

/// Which observations enter the fitted loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevVisibility {
    /// Dev observations only drive early stopping.
    #[default]
    EarlyStoppingOnly,
    /// Dev observations are also part of the loss.
    InLoss,
}

/// Cross-referenced evaluation records plus a model-level split.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    models: Vec<ModelRecord>,
    instances: Vec<InstanceRecord>,
    observations: Vec<Observation>,
    split: Vec<Split>,
    pairs: Vec<ObservedPair>,
    model_index: HashMap<String, usize>,
    instance_index: HashMap<String, usize>,
    lookup: HashMap<(usize, usize), u8>,
    embedding_dim: Option<usize>,
}

impl ObservationSet {
    /// Validates and indexes the records. Every model starts in the train split.
    pub fn new(
        models: Vec<ModelRecord>,
        instances: Vec<InstanceRecord>,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let mut model_index = HashMap::with_capacity(models.len());
        for (idx, m) in models.iter().enumerate() {
            if m.model_id.is_empty() {
                return Err(Error::InvalidRecord("empty model_id".into()));
            }
            if model_index.insert(m.model_id.clone(), idx).is_some() {
                return Err(Error::DuplicateId {
                    kind: "model",
                    id: m.model_id.clone(),
                });
            }
            if m.parents.iter().any(|p| p == &m.model_id) {
                return Err(Error::InvalidRecord(format!(
                    "model {:?} lists itself as a parent",
                    m.model_id
                )));
            }
            if let Some(size) = m.parameter_size {
                if !(size.is_finite() && size > 0.0) {
                    return Err(Error::InvalidRecord(format!(
                        "model {:?} has non-positive parameter_size {size}",
                        m.model_id
                    )));
                }
            }
        }

        let mut instance_index = HashMap::with_capacity(instances.len());
        let mut embedding_dim = None;
        for (idx, inst) in instances.iter().enumerate() {
            if inst.benchmark_id.is_empty() {
                return Err(Error::InvalidRecord(format!(
                    "instance {:?} has an empty benchmark_id",
                    inst.instance_id
                )));
            }
            if instance_index.insert(inst.instance_id.clone(), idx).is_some() {
                return Err(Error::DuplicateId {
                    kind: "instance",
                    id: inst.instance_id.clone(),
                });
            }
            if let Some(e) = &inst.embedding {
                match embedding_dim {
                    None => embedding_dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: e.len(),
                        })
                    }
                    _ => {}
                }
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidRecord(format!(
                        "instance {:?} has a non-finite embedding entry",
                        inst.instance_id
                    )));
                }
            }
        }

        let mut pairs = Vec::with_capacity(observations.len());
        let mut lookup = HashMap::with_capacity(observations.len());
        for o in &observations {
            let model = *model_index.get(&o.model_id).ok_or_else(|| Error::DanglingReference {
                kind: "model",
                id: o.model_id.clone(),
            })?;
            let instance =
                *instance_index
                    .get(&o.instance_id)
                    .ok_or_else(|| Error::DanglingReference {
                        kind: "instance",
                        id: o.instance_id.clone(),
                    })?;
            if o.score > 1 {
                return Err(Error::InvalidRecord(format!(
                    "score {} for ({}, {}) is not 0 or 1",
                    o.score, o.model_id, o.instance_id
                )));
            }
            if lookup.insert((model, instance), o.score).is_some() {
                return Err(Error::DuplicatePair {
                    model_id: o.model_id.clone(),
                    instance_id: o.instance_id.clone(),
                });
            }
            pairs.push(ObservedPair {
                model,
                instance,
                score: o.score,
            });
        }

        let split = vec![Split::Train; models.len()];
        Ok(Self {
            models,
            instances,
            observations,
            split,
            pairs,
            model_index,
            instance_index,
            lookup,
            embedding_dim,
        })
    }

    pub fn models(&self) -> &[ModelRecord] {
        &self.models
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn pairs(&self) -> &[ObservedPair] {
        &self.pairs
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.model_index.get(id).copied()
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instance_index.get(id).copied()
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn instance_ids(&self) -> Vec<String> {
        self.instances.iter().map(|i| i.instance_id.clone()).collect()
    }

    /// True score of a pair, if observed.
    pub fn score(&self, model: usize, instance: usize) -> Option<u8> {
        self.lookup.get(&(model, instance)).copied()
    }

    pub fn split_of(&self, model: usize) -> Split {
        self.split[model]
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn split_map(&self) -> BTreeMap<String, Split> {
        self.models
            .iter()
            .zip(&self.split)
            .map(|(m, s)| (m.model_id.clone(), *s))
            .collect()
    }

    /// Replaces the split assignment; `split` is aligned with `models()`.
    pub fn with_splits(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.models.len() {
            return Err(Error::DimensionMismatch {
                expected: self.models.len(),
                found: split.len(),
            });
        }
        self.split = split;
        Ok(self)
    }

    /// Assigns splits by model id; every model must be listed.
    pub fn with_split_map(self, map: &BTreeMap<String, Split>) -> Result<Self> {
        for id in map.keys() {
            if self.model_index(id).is_none() {
                return Err(Error::DanglingReference { kind: "model", id: id.clone() });
            }
        }
        let split = self
            .models
            .iter()
            .map(|m| {
                map.get(&m.model_id)
                    .copied()
                    .ok_or_else(|| Error::InvalidRecord(format!("no split given for model {:?}", m.model_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_splits(split)
    }

    pub fn models_in(&self, split: Split) -> Vec<usize> {
        (0..self.models.len())
            .filter(|&u| self.split[u] == split)
            .collect()
    }

    pub fn pairs_in(&self, split: Split) -> Vec<ObservedPair> {
        self.pairs
            .iter()
            .filter(|p| self.split[p.model] == split)
            .copied()
            .collect()
    }

    /// The observed set Ω used by the loss.
    pub fn fit_pairs(&self, visibility: DevVisibility) -> Vec<ObservedPair> {
        self.pairs
            .iter()
            .filter(|p| match self.split[p.model] {
                Split::Train => true,
                Split::Dev => visibility == DevVisibility::InLoss,
                Split::Test => false,
            })
            .copied()
            .collect()
    }

    /// Sorted distinct benchmark ids.
    pub fn benchmarks(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.instances.iter().map(|i| i.benchmark_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Returns a copy keeping only the observations at the given positions of `pairs()`.
    fn retain_pairs(&self, keep: &[bool]) -> Result<Self> {
        let observations = self
            .observations
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(o, _)| o.clone())
            .collect();
        let set = ObservationSet::new(self.models.clone(), self.instances.clone(), observations)?;
        set.with_splits(self.split.clone())
    }

    /// Replaces the model records (same ids, same order), e.g. after a lineage perturbation.
    pub fn with_models(&self, models: Vec<ModelRecord>) -> Result<Self> {
        if models.len() != self.models.len()
            || models
                .iter()
                .zip(&self.models)
                .any(|(a, b)| a.model_id != b.model_id)
        {
            return Err(Error::InvalidRecord(
                "replacement models must keep ids and order".into(),
            ));
        }
        let set = ObservationSet::new(models, self.instances.clone(), self.observations.clone())?;
        set.with_splits(self.split.clone())
    }

    pub fn save(&self, models: &Path, instances: &Path, observations: &Path) -> Result<()> {
        write_jsonl(models, &self.models)?;
        write_jsonl(instances, &self.instances)?;
        write_jsonl(observations, &self.observations)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.save(
            &dir.join(MODELS_FILE),
            &dir.join(INSTANCES_FILE),
            &dir.join(OBSERVATIONS_FILE),
        )
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(
    models_path: &Path,
    instances_path: &Path,
    observations_path: &Path,
) -> Result<ObservationSet> {
    let models = read_jsonl(models_path)?;
    let instances = read_jsonl(instances_path)?;
    let observations = read_jsonl(observations_path)?;
    ObservationSet::new(models, instances, observations)
}

/// Loads `models.jsonl`, `instances.jsonl` and `observations.jsonl` from `dir`.
pub fn load_dataset_dir(dir: &Path) -> Result<ObservationSet> {
    let p = |f: &str| -> PathBuf { dir.join(f) };
    load_dataset(&p(MODELS_FILE), &p(INSTANCES_FILE), &p(OBSERVATIONS_FILE))
}

/// Split sizes: floor each share, then hand the remainder out train, dev, test.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(fractions));
    }
    let mut counts = fractions.map(|f| (n as f64 * f).floor() as usize);
    let mut remainder = n - counts.iter().sum::<usize>();
    let mut slot = 0;
    while remainder > 0 {
        counts[slot % 3] += 1;
        remainder -= 1;
        slot += 1;
    }
    for (count, split) in counts.iter().zip(Split::ALL) {
        if *count == 0 {
            return Err(Error::TooFewModels {
                split: split.as_str(),
                n_models: n,
                fractions,
            });
        }
    }
    Ok(counts)
}

/// Seeded random partition of models into train/dev/test.
pub fn split_models(set: ObservationSet, fractions: [f64; 3], seed: u64) -> Result<ObservationSet> {
    let n = set.n_models();
    let [n_train, n_dev, _] = split_counts(n, fractions)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut split = vec![Split::Test; n];
    for (pos, &u) in order.iter().enumerate() {
        split[u] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    set.with_splits(split)
}

/// Keeps at most `t` observations per train model, returning the kept set and
/// the withheld train pairs.
///
/// Each model's observations are shuffled once per seed and a prefix is kept,
/// so the retained set for a smaller `t` is a subset of that for a larger one.
pub fn subsample_with_holdout(
    set: &ObservationSet,
    t: usize,
    seed: u64,
) -> Result<(ObservationSet, Vec<ObservedPair>)> {
    if t == 0 {
        return Err(Error::InvalidConfig("subsample size t must be at least 1".into()));
    }
    let mut per_model: Vec<Vec<usize>> = vec![Vec::new(); set.n_models()];
    for (pos, p) in set.pairs().iter().enumerate() {
        per_model[p.model].push(pos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; set.pairs().len()];
    let mut withheld = Vec::new();
    for (u, positions) in per_model.iter_mut().enumerate() {
        if set.split_of(u) != Split::Train {
            continue;
        }
        positions.shuffle(&mut rng);
        for &pos in positions.iter().skip(t) {
            keep[pos] = false;
            withheld.push(set.pairs()[pos]);
        }
    }
    Ok((set.retain_pairs(&keep)?, withheld))
}

pub fn subsample_observations(set: &ObservationSet, t: usize, seed: u64) -> Result<ObservationSet> {
    subsample_with_holdout(set, t, seed).map(|(s, _)| s)
}

/// Lineage extracted from a model-card metadata object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CardLineage {
    pub model_type: Option<ModelType>,
    pub parents: Vec<String>,
}

const FINETUNE_TAG: &str = "base_model:finetune:";
const MERGE_TAG: &str = "base_model:merge:";

/// Extracts parents from `base_model:finetune:` / `base_model:merge:` tags.
///
/// Tags are looked up in any string array (such as `"tags"`) and among the
/// object's own keys, recursively.
pub fn lineage_from_model_card(meta: &serde_json::Value) -> CardLineage {
    fn visit(v: &serde_json::Value, out: &mut CardLineage) {
        match v {
            serde_json::Value::String(s) => take_tag(s, out),
            serde_json::Value::Array(items) => items.iter().for_each(|i| visit(i, out)),
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    take_tag(k, out);
                    visit(v, out);
                }
            }
            _ => {}
        }
    }
    fn take_tag(s: &str, out: &mut CardLineage) {
        let (parent, kind) = if let Some(p) = s.strip_prefix(FINETUNE_TAG) {
            (p, ModelType::Finetuned)
        } else if let Some(p) = s.strip_prefix(MERGE_TAG) {
            (p, ModelType::Merged)
        } else {
            return;
        };
        if parent.is_empty() {
            return;
        }
        // a merge tag wins over finetune when a card carries both
        if out.model_type != Some(ModelType::Merged) {
            out.model_type = Some(kind);
        }
        if !out.parents.iter().any(|p| p == parent) {
            out.parents.push(parent.to_owned());
        }
    }
    let mut out = CardLineage::default();
    visit(meta, &mut out);
    out
}
