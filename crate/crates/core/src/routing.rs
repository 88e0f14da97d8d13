//! Instance-level routing: send each instance to the candidate model with
//! the highest predicted score and realize the true outcome.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

/// Outcome of one routing strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub strategy: String,
    /// Mean realized score per benchmark.
    pub per_benchmark: BTreeMap<String, f64>,
    pub overall: f64,
    pub n_routed: usize,
    /// model_id → number of instances routed to it.
    pub assignments: BTreeMap<String, usize>,
    /// benchmark → model_id → count.
    pub assignments_per_benchmark: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Several strategies evaluated on the same pool and instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingSummary {
    pub reports: Vec<RoutingReport>,
}

impl RoutingSummary {
    /// `(benchmark, strategy, realized_score)` rows, benchmarks then `overall`.
    pub fn score_rows(&self) -> Vec<[String; 3]> {
        let mut rows = Vec::new();
        for r in &self.reports {
            for (b, v) in &r.per_benchmark {
                rows.push([b.clone(), r.strategy.clone(), v.to_string()]);
            }
            rows.push(["overall".into(), r.strategy.clone(), r.overall.to_string()]);
        }
        rows
    }

    /// `(strategy, scope, model_id, count)` rows; scope is `overall` or a benchmark.
    pub fn assignment_rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        for r in &self.reports {
            for (m, c) in &r.assignments {
                rows.push([r.strategy.clone(), "overall".into(), m.clone(), c.to_string()]);
            }
            for (b, hist) in &r.assignments_per_benchmark {
                for (m, c) in hist {
                    rows.push([r.strategy.clone(), b.clone(), m.clone(), c.to_string()]);
                }
            }
        }
        rows
    }
}

/// Candidates ordered by model id, so the first maximum wins ties.
fn sorted_candidates(obs: &ObservationSet, candidates: &[usize]) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("routing needs at least one candidate".into()));
    }
    for &c in candidates {
        if c >= obs.n_models() {
            return Err(Error::IndexOutOfRange {
                kind: "model",
                index: c,
                len: obs.n_models(),
            });
        }
    }
    let mut c = candidates.to_vec();
    c.sort_by(|&a, &b| obs.models()[a].model_id.cmp(&obs.models()[b].model_id));
    c.dedup();
    Ok(c)
}

fn check_truth(obs: &ObservationSet, candidates: &[usize], instances: &[usize]) -> Result<()> {
    let mut missing = Vec::new();
    for &i in instances {
        if i >= obs.n_instances() {
            return Err(Error::IndexOutOfRange {
                kind: "instance",
                index: i,
                len: obs.n_instances(),
            });
        }
        for &u in candidates {
            if obs.score(u, i).is_none() {
                missing.push((u, i));
            }
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let examples = missing
        .iter()
        .take(10)
        .map(|&(u, i)| (obs.models()[u].model_id.clone(), obs.instances()[i].instance_id.clone()))
        .collect();
    Err(Error::MissingTrueScores {
        count: missing.len(),
        examples,
    })
}

fn realize(strategy: &str, obs: &ObservationSet, instances: &[usize], choices: &[usize]) -> RoutingReport {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut assignments = BTreeMap::new();
    let mut per_bench: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut total = 0.0;
    for (&i, &u) in instances.iter().zip(choices) {
        let z = f64::from(obs.score(u, i).expect("truth checked"));
        let bench = &obs.instances()[i].benchmark_id;
        let model = &obs.models()[u].model_id;
        let e = sums.entry(bench.clone()).or_insert((0.0, 0));
        e.0 += z;
        e.1 += 1;
        total += z;
        *assignments.entry(model.clone()).or_insert(0) += 1;
        *per_bench
            .entry(bench.clone())
            .or_default()
            .entry(model.clone())
            .or_insert(0) += 1;
    }
    RoutingReport {
        strategy: strategy.to_owned(),
        per_benchmark: sums.into_iter().map(|(b, (s, n))| (b, s / n as f64)).collect(),
        overall: if instances.is_empty() { 0.0 } else { total / instances.len() as f64 },
        n_routed: instances.len(),
        assignments,
        assignments_per_benchmark: per_bench,
    }
}

/// Routes each instance to the candidate with the highest prediction.
pub fn route<P: Predictor + ?Sized>(
    strategy: &str,
    predictor: &P,
    candidates: &[usize],
    instances: &[usize],
    obs: &ObservationSet,
) -> Result<RoutingReport> {
    let cands = sorted_candidates(obs, candidates)?;
    check_truth(obs, &cands, instances)?;
    let choices: Vec<usize> = instances
        .iter()
        .map(|&i| {
            let mut best = cands[0];
            let mut best_score = predictor.predict(best, i);
            for &u in &cands[1..] {
                let s = predictor.predict(u, i);
                if s > best_score {
                    best = u;
                    best_score = s;
                }
            }
            best
        })
        .collect();
    Ok(realize(strategy, obs, instances, &choices))
}

/// Sends every instance to the candidate with the best true mean, either over
/// all routed instances or separately per benchmark.
pub fn best_model_baseline(
    obs: &ObservationSet,
    candidates: &[usize],
    instances: &[usize],
    per_benchmark: bool,
) -> Result<RoutingReport> {
    let cands = sorted_candidates(obs, candidates)?;
    check_truth(obs, &cands, instances)?;
    let group_of = |i: usize| -> &str {
        if per_benchmark {
            &obs.instances()[i].benchmark_id
        } else {
            ""
        }
    };
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in instances {
        groups.entry(group_of(i)).or_default().push(i);
    }
    let mut winner: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, members) in &groups {
        let mean = |u: usize| members.iter().map(|&i| f64::from(obs.score(u, i).unwrap())).sum::<f64>();
        let mut best = cands[0];
        let mut best_sum = mean(best);
        for &u in &cands[1..] {
            let s = mean(u);
            if s > best_sum {
                best = u;
                best_sum = s;
            }
        }
        winner.insert(g, best);
    }
    let choices: Vec<usize> = instances.iter().map(|&i| winner[group_of(i)]).collect();
    let name = if per_benchmark { "best_model" } else { "best_model_global" };
    Ok(realize(name, obs, instances, &choices))
}

/// Uniform seeded choice per instance.
pub fn random_routing(
    obs: &ObservationSet,
    candidates: &[usize],
    instances: &[usize],
    seed: u64,
) -> Result<RoutingReport> {
    let cands = sorted_candidates(obs, candidates)?;
    check_truth(obs, &cands, instances)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices: Vec<usize> = instances
        .iter()
        .map(|_| cands[rng.random_range(0..cands.len())])
        .collect();
    Ok(realize("random", obs, instances, &choices))
}
