//! AUC-ROC and Pearson correlation, per benchmark and overall.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ObservationSet, ObservedPair, Split};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::scalar::Scalar;

/// Rank-based (Mann–Whitney) AUC; tied scores contribute one half.
pub fn auc_roc<T: Scalar>(scores: &[(T, u8)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, l)| *l == 1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.partial_cmp(&scores[b].0).unwrap_or(Ordering::Equal));

    let mut pos_rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]].0 == scores[order[start]].0 {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| scores[i].1 == 1).count();
        pos_rank_sum += mean_rank * pos_in_group as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    let u = pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

/// Sample Pearson correlation; `Ok(None)` when either side has zero variance.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<Option<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidConfig("pearson needs at least two points".into()));
    }
    let n = T::of(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(None);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(Some(r.max(-T::one()).min(T::one())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `None` when only one label class is present.
    pub auc: Option<f64>,
    /// `None` when undefined (fewer than two models or zero variance).
    pub pearson: Option<f64>,
    pub n_pairs: usize,
    pub n_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub per_benchmark: BTreeMap<String, MetricRow>,
    /// Pooled over all benchmarks (micro).
    pub overall: MetricRow,
    /// Mean of the defined per-benchmark correlations.
    pub macro_pearson: Option<f64>,
    /// Benchmarks with an undefined AUC or correlation.
    pub degenerate_benchmarks: usize,
}

impl EvalReport {
    /// `(benchmark, method, metric, value)` rows; undefined values print as `NaN`.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        let mut rows = Vec::new();
        let mut push = |bench: &str, row: &MetricRow| {
            rows.push([bench.into(), self.method.clone(), "auc".into(), fmt(row.auc)]);
            rows.push([bench.into(), self.method.clone(), "pearson".into(), fmt(row.pearson)]);
            rows.push([bench.into(), self.method.clone(), "n_pairs".into(), row.n_pairs.to_string()]);
            rows.push([bench.into(), self.method.clone(), "n_models".into(), row.n_models.to_string()]);
        };
        for (b, row) in &self.per_benchmark {
            push(b, row);
        }
        push("overall", &self.overall);
        rows.push([
            "overall_macro".into(),
            self.method.clone(),
            "pearson".into(),
            fmt(self.macro_pearson),
        ]);
        rows
    }
}

fn metric_row(preds: &[f64], pairs: &[ObservedPair]) -> MetricRow {
    let scored: Vec<(f64, u8)> = preds.iter().copied().zip(pairs.iter().map(|p| p.score)).collect();
    let auc = auc_roc(&scored).ok();

    let mut per_model: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for (p, pair) in preds.iter().zip(pairs) {
        let e = per_model.entry(pair.model).or_insert((0.0, 0.0, 0));
        e.0 += p;
        e.1 += f64::from(pair.score);
        e.2 += 1;
    }
    let (pred_means, true_means): (Vec<f64>, Vec<f64>) = per_model
        .values()
        .map(|&(p, t, n)| (p / n as f64, t / n as f64))
        .unzip();
    let r = if pred_means.len() >= 2 {
        pearson(&pred_means, &true_means).ok().flatten()
    } else {
        None
    };
    MetricRow {
        auc,
        pearson: r,
        n_pairs: pairs.len(),
        n_models: per_model.len(),
    }
}

/// Scores an explicit list of pairs.
pub fn evaluate_pairs<P: Predictor + ?Sized>(
    predictor: &P,
    obs: &ObservationSet,
    pairs: &[ObservedPair],
    method: &str,
) -> EvalReport {
    let preds: Vec<f64> = pairs
        .iter()
        .map(|p| predictor.predict(p.model, p.instance))
        .collect();
    let mut by_bench: BTreeMap<&str, (Vec<f64>, Vec<ObservedPair>)> = BTreeMap::new();
    for (pred, pair) in preds.iter().zip(pairs) {
        let b = obs.instances()[pair.instance].benchmark_id.as_str();
        let e = by_bench.entry(b).or_default();
        e.0.push(*pred);
        e.1.push(*pair);
    }
    let per_benchmark: BTreeMap<String, MetricRow> = by_bench
        .iter()
        .map(|(b, (p, ps))| (b.to_string(), metric_row(p, ps)))
        .collect();
    let defined: Vec<f64> = per_benchmark.values().filter_map(|r| r.pearson).collect();
    let macro_pearson = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let degenerate_benchmarks = per_benchmark
        .values()
        .filter(|r| r.auc.is_none() || r.pearson.is_none())
        .count();
    EvalReport {
        method: method.to_owned(),
        overall: metric_row(&preds, pairs),
        per_benchmark,
        macro_pearson,
        degenerate_benchmarks,
    }
}

/// Evaluates every observed pair of the models in `split`.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    obs: &ObservationSet,
    split: Split,
    method: &str,
) -> Result<EvalReport> {
    let pairs = obs.pairs_in(split);
    if pairs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    Ok(evaluate_pairs(predictor, obs, &pairs, method))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_simple_cases() {
        assert_eq!(auc_roc(&[(0.9, 1), (0.1, 0)]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[(0.1, 1), (0.9, 0)]).unwrap(), 0.0);
        assert_eq!(auc_roc(&[(0.3, 1), (0.3, 0), (0.3, 1)]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[(0.3f64, 1), (0.4, 1)]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn auc_in_single_precision() {
        let auc = auc_roc(&[(0.2f32, 0), (0.4, 1), (0.4, 0), (0.9, 1)]).unwrap();
        // pairs (+,-): (0.4,0.2)=1 (0.4,0.4)=.5 (0.9,0.2)=1 (0.9,0.4)=1
        assert_eq!(auc, 3.5 / 4.0);
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &up).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &down).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // means 2.5; deviations (-1.5,-.5,.5,1.5) and (-1.5,.5,-.5,1.5): 4 / 5
        let r = pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(pearson(&x, &[2.0; 4]).unwrap(), None);
        assert!(pearson(&x, &[1.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
