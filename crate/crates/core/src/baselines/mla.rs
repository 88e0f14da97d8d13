//! Model lineage averaging: a model's score on an instance is the mean of
//! its lineage neighbors' observed scores on that instance.

use std::collections::HashMap;

use crate::dataset::{DevVisibility, ObservationSet, ObservedPair};
use crate::graphs::Graph;
use crate::predictor::Predictor;

#[derive(Debug, Clone)]
pub struct Mla {
    neighborhoods: Vec<Vec<usize>>,
    known: HashMap<(usize, usize), u8>,
}

impl Mla {
    /// Neighbors within `hops` lineage steps; `known` are the scores the
    /// predictor may look at.
    pub fn new(lineage: &Graph, hops: usize, known: &[ObservedPair]) -> Self {
        Self {
            neighborhoods: lineage.neighborhoods(hops),
            known: known.iter().map(|p| ((p.model, p.instance), p.score)).collect(),
        }
    }

    /// Uses the observations that would enter a fitted loss.
    pub fn from_split(obs: &ObservationSet, lineage: &Graph, hops: usize, visibility: DevVisibility) -> Self {
        Self::new(lineage, hops, &obs.fit_pairs(visibility))
    }

    /// Mean over neighbors that observed `i`; `None` (abstain) when none did.
    pub fn predict_or_abstain(&self, u: usize, i: usize) -> Option<f64> {
        let (mut sum, mut n) = (0u32, 0u32);
        for &v in &self.neighborhoods[u] {
            if let Some(&s) = self.known.get(&(v, i)) {
                sum += u32::from(s);
                n += 1;
            }
        }
        (n > 0).then(|| f64::from(sum) / f64::from(n))
    }
}

impl Predictor for Mla {
    /// Abstentions score 0.5.
    fn predict(&self, model: usize, instance: usize) -> f64 {
        self.predict_or_abstain(model, instance).unwrap_or(0.5)
    }
}

/// One-hop lineage average over every observation in `obs`.
pub fn mla_predict(obs: &ObservationSet, lineage: &Graph, u: usize, i: usize) -> Option<f64> {
    Mla::new(lineage, 1, obs.pairs()).predict_or_abstain(u, i)
}
