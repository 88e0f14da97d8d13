//! Reference predictors: lineage averaging, IRT and NCF with factors.

pub mod irt;
pub mod mla;
pub mod ncf;

pub use irt::{irt_predict, irt_train, IrtModel};
pub use mla::{mla_predict, Mla};
pub use ncf::{ncf_predict, ncf_train, NcfConfig, NcfModel};

use crate::dataset::{ObservedPair, Split, ObservationSet};

/// Dev pairs used for early stopping.
pub(crate) fn dev_pairs(obs: &ObservationSet) -> Vec<ObservedPair> {
    obs.pairs_in(Split::Dev)
}
