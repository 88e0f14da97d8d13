//! Versioned JSON container for trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::irt::IrtModel;
use crate::baselines::ncf::NcfModel;
use crate::error::{Error, Result};
use crate::lrmf::LrmfModel;
use crate::predictor::Predictor;
use crate::scalar::Scalar;

pub const FORMAT: &str = "lineage-predict-checkpoint";
pub const VERSION: u32 = 1;

/// A trained model of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
pub enum Trained<T> {
    /// Plain MF is stored as an LRMF model with zero graph weights.
    Lrmf(LrmfModel<T>),
    Irt(IrtModel<T>),
    Ncf(NcfModel<T>),
}

impl<T: Scalar> Trained<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Trained::Lrmf(_) => "lrmf",
            Trained::Irt(_) => "irt",
            Trained::Ncf(_) => "ncf",
        }
    }

    pub fn model_ids(&self) -> &[String] {
        match self {
            Trained::Lrmf(m) => &m.model_ids,
            Trained::Irt(m) => &m.model_ids,
            Trained::Ncf(m) => &m.model_ids,
        }
    }

    pub fn instance_ids(&self) -> &[String] {
        match self {
            Trained::Lrmf(m) => &m.instance_ids,
            Trained::Irt(m) => &m.instance_ids,
            Trained::Ncf(m) => &m.instance_ids,
        }
    }

    pub fn training_log(&self) -> &[crate::optim::EpochRecord] {
        match self {
            Trained::Lrmf(m) => &m.training_log,
            Trained::Irt(m) => &m.training_log,
            Trained::Ncf(m) => &m.training_log,
        }
    }

    /// Fails unless the model was trained on exactly these ids in this order.
    pub fn check_alignment(&self, obs: &crate::dataset::ObservationSet) -> Result<()> {
        if self.model_ids() != obs.model_ids().as_slice() {
            return Err(Error::CheckpointMismatch("model ids differ from dataset".into()));
        }
        if self.instance_ids() != obs.instance_ids().as_slice() {
            return Err(Error::CheckpointMismatch("instance ids differ from dataset".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Predictor for Trained<T> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        match self {
            Trained::Lrmf(m) => Predictor::predict(m, model, instance),
            Trained::Irt(m) => Predictor::predict(m, model, instance),
            Trained::Ncf(m) => Predictor::predict(m, model, instance),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Envelope<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Trained<T>,
}

pub fn to_json<T: Scalar>(model: &Trained<T>) -> Result<String> {
    let env = Envelope {
        format: FORMAT.to_owned(),
        version: VERSION,
        body: model.clone(),
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_json<T: Scalar>(text: &str) -> Result<Trained<T>> {
    let head: serde_json::Value = serde_json::from_str(text)?;
    let format = head.get("format").and_then(|v| v.as_str());
    if format != Some(FORMAT) {
        return Err(Error::CheckpointMismatch(format!(
            "expected format {FORMAT:?}, found {format:?}"
        )));
    }
    let version = head.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(VERSION)) {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported version {version:?}"
        )));
    }
    let env: Envelope<T> = serde_json::from_value(head)?;
    Ok(env.body)
}

pub fn save<T: Scalar>(path: &Path, model: &Trained<T>) -> Result<()> {
    let text = to_json(model)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Trained<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
