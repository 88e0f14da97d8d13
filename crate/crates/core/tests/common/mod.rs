//! Fixtures and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use lineage_core::dataset::{InstanceRecord, ModelRecord, ModelType, Observation, ObservationSet};
use lineage_core::graphs::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

/// Erdős–Rényi graph with edge probability `p` and weights in `[0.5, 2)`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, weighted: bool) -> Graph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                let w = if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
                edges.push((a, b, w));
            }
        }
    }
    Graph::from_weighted(ids("n", n), edges).unwrap()
}

/// Dense symmetric adjacency of `g`.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for e in g.edges() {
        a[e.a][e.b] += e.weight;
        a[e.b][e.a] += e.weight;
    }
    a
}

/// Random dataset: each (model, instance) pair observed with probability
/// `density`, at least one observation per model. Parents point to earlier models.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_models: usize, n_instances: usize, density: f64, dim: usize) -> ObservationSet {
    let archs = ["llama", "mistral", "qwen"];
    let models: Vec<ModelRecord> = (0..n_models)
        .map(|u| {
            let parents = if u > 0 && rng.random::<f64>() < 0.7 {
                vec![format!("m{:03}", rng.random_range(0..u))]
            } else {
                vec![]
            };
            ModelRecord {
                model_id: format!("m{u:03}"),
                architecture_type: archs[rng.random_range(0..archs.len())].to_string(),
                model_type: match rng.random_range(0..3) {
                    0 => ModelType::Finetuned,
                    1 => ModelType::Merged,
                    _ => ModelType::Other,
                },
                parameter_size: (rng.random::<f64>() < 0.8).then(|| rng.random_range(0.5..70.0)),
                parents,
            }
        })
        .collect();
    let instances: Vec<InstanceRecord> = (0..n_instances)
        .map(|i| InstanceRecord {
            instance_id: format!("i{i:03}"),
            benchmark_id: format!("b{}", i % 2),
            embedding: (dim > 0).then(|| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
        })
        .collect();
    let mut obs = Vec::new();
    for u in 0..n_models {
        let forced = rng.random_range(0..n_instances);
        for i in 0..n_instances {
            if i == forced || rng.random::<f64>() < density {
                obs.push(Observation {
                    model_id: format!("m{u:03}"),
                    instance_id: format!("i{i:03}"),
                    score: rng.random_range(0..2),
                });
            }
        }
    }
    ObservationSet::new(models, instances, obs).unwrap()
}

/// O(n²) AUC: fraction of (positive, negative) pairs ranked correctly, ties half.
pub fn brute_auc(scores: &[(f64, u8)]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(sp, yp) in scores {
        if yp != 1 {
            continue;
        }
        for &(sn, yn) in scores {
            if yn != 0 {
                continue;
            }
            den += 1.0;
            if sp > sn {
                num += 1.0;
            } else if sp == sn {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Textbook Pearson correlation.
pub fn brute_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..x.len() {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    let d = (sxx * syy).sqrt();
    (x.len() >= 2 && d > 0.0).then(|| sxy / d)
}

/// `Σ_{a<b} w_ab ‖m_a − m_b‖²` from a dense adjacency.
pub fn brute_edge_sum(a: &[Vec<f64>], m: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for u in 0..a.len() {
        for v in 0..a.len() {
            if a[u][v] != 0.0 {
                let d: f64 = m[u].iter().zip(&m[v]).map(|(x, y)| (x - y) * (x - y)).sum();
                s += 0.5 * a[u][v] * d;
            }
        }
    }
    s
}

/// Central difference of `f` with respect to `params[k]`.
pub fn central_difference(params: &mut [f64], k: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = params[k];
    let h = 1e-6 * orig.abs().max(1.0);
    params[k] = orig + h;
    let up = f(params);
    params[k] = orig - h;
    let down = f(params);
    params[k] = orig;
    (up - down) / (2.0 * h)
}

/// Relative error used by the gradient checks; coordinates below `1e-3` in
/// magnitude are compared on that absolute scale.
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}
