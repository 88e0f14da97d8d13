//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero on any unexpected outcome.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run and reported as FAIL;
//! they only stop failing the process when `ACCEPTANCE_STRICT` is unset. A
//! known failure that starts passing fails the process so the list stays
//! accurate.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    brute_auc, brute_edge_sum, brute_pearson, central_difference, dense_adjacency, grad_rel_err, random_dataset,
    random_graph, rng,
};
use lineage_core::baselines::irt::{irt_gradients, irt_objective, IrtModel};
use lineage_core::baselines::mla::mla_predict;
use lineage_core::baselines::ncf::{ncf_gradients, ncf_objective, NcfConfig, NcfModel};
use lineage_core::dataset::{split_models, ObservationSet, Split};
use lineage_core::graphs::{laplacian, perturb_lineage, Graph, Laplacian};
use lineage_core::lrmf::{gradients, objective, LrmfModel, TrainConfig};
use lineage_core::metrics::{auc_roc, evaluate, pearson};
use lineage_core::pipeline::{fit, fully_observed_instances, lineage_graph, routing_summary, Method, PipelineConfig};
use lineage_core::predictor::OraclePredictor;
use lineage_core::routing::{best_model_baseline, route};
use lineage_core::synthgen::{generate, SynthConfig};
use lineage_core::Matrix;
use rand::Rng;

const KNOWN_FAILURES: &[&str] = &["noise-asymmetry"];
const STRICT_ENV: &str = "ACCEPTANCE_STRICT";

const LAPLACIAN_PAIRS: u64 = 1000;
const LAPLACIAN_TOL: f64 = 1e-9;
const LAPLACIAN_BUDGET: Duration = Duration::from_secs(5);
const GRADIENT_CONFIGS: u64 = 50;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const METRIC_SETS: u64 = 100;
const METRIC_MAX_LEN: usize = 200;
const METRIC_TOL: f64 = 1e-12;
const MLA_FIXTURES: u64 = 1000;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Train, dev and test fractions for the synthetic experiments; test models are cold.
const SYNTH_SPLIT: [f64; 3] = [0.5, 0.1, 0.4];
const MF_MAX_ABS_PEARSON: f64 = 0.2;
const LRMF_MIN_PEARSON: f64 = 0.5;
const LRMF_MIN_AUC: f64 = 0.75;
const COLD_START_BUDGET: Duration = Duration::from_secs(180);
const NOISE_FRACTION: f64 = 0.4;
const SUITE_BUDGET: Duration = Duration::from_secs(600);
const ROUTE_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.1?}, budget {budget:?}"))?;
    Ok(t)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn laplacian_identity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..LAPLACIAN_PAIRS {
        let mut r = rng(seed);
        let n = r.random_range(1..30);
        let p = r.random_range(0.0..1.0);
        let weighted = r.random_bool(0.5);
        let d = r.random_range(1..8);
        let g = random_graph(&mut r, n, p, weighted);
        let m = Matrix::random_normal(n, d, 1.0, &mut r);
        let trace = laplacian::<f64>(&g).quadratic(&m).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..n).map(|u| m.row(u).to_vec()).collect();
        let oracle = brute_edge_sum(&dense_adjacency(&g), &rows);
        let err = if oracle == 0.0 { trace.abs() } else { (trace - oracle).abs() / oracle.abs() };
        worst = worst.max(err);
        ensure(err <= LAPLACIAN_TOL, || format!("pair {seed}: trace {trace} vs edge sum {oracle}"))?;
    }
    let t = within_budget(start, LAPLACIAN_BUDGET)?;
    Ok(format!("{LAPLACIAN_PAIRS} pairs, worst relative error {worst:.1e}, {t:.2?}"))
}

fn check_coords(label: &str, seed: u64, analytic: &[f64], flat: &mut [f64], eval: impl Fn(&[f64]) -> f64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for k in 0..flat.len() {
        let fd = central_difference(flat, k, &eval);
        let e = grad_rel_err(analytic[k], fd);
        worst = worst.max(e);
        ensure(e <= GRADIENT_TOL, || format!("{label} config {seed} coord {k}: analytic {} vs {fd}", analytic[k]))?;
    }
    Ok(worst)
}

fn lrmf_gradient_config(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let nm = r.random_range(2..7);
    let ni = r.random_range(2..8);
    let d = r.random_range(1..5);
    let obs = random_dataset(&mut r, nm, ni, 0.6, 0);
    let gm = random_graph(&mut r, nm, 0.5, true);
    let gx = random_graph(&mut r, ni, 0.5, true);
    let config = TrainConfig {
        latent_dim: d,
        lambda_l2: 10f64.powf(r.random_range(-3.0..0.0)),
        lambda_model: 10f64.powf(r.random_range(-3.0..0.0)),
        lambda_instance: 10f64.powf(r.random_range(-3.0..0.0)),
        ..TrainConfig::default()
    };
    let m = Matrix::random_normal(nm, d, 0.7, &mut r);
    let x = Matrix::random_normal(ni, d, 0.7, &mut r);
    let (lm, lx): (Laplacian<f64>, Laplacian<f64>) = (laplacian(&gm), laplacian(&gx));
    let omega = obs.pairs().to_vec();
    let model = LrmfModel::from_embeddings(obs.model_ids(), obs.instance_ids(), m, x, config).map_err(|e| e.to_string())?;
    let (ga, gb) = gradients(&model, &omega, &lm, &lx).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = ga.as_slice().iter().chain(gb.as_slice()).copied().collect();
    let mut flat: Vec<f64> = model.model_embeddings.as_slice().iter().chain(model.instance_embeddings.as_slice()).copied().collect();
    let split = nm * d;
    check_coords("lrmf", seed, &analytic, &mut flat, |p| {
        let mut mm = model.clone();
        mm.model_embeddings.as_mut_slice().copy_from_slice(&p[..split]);
        mm.instance_embeddings.as_mut_slice().copy_from_slice(&p[split..]);
        objective(&mm, &omega, &lm, &lx).unwrap().total
    })
}

fn irt_gradient_config(seed: u64) -> Result<f64, String> {
    let mut r = rng(1000 + seed);
    let nm = r.random_range(2..7);
    let ni = r.random_range(2..8);
    let obs = random_dataset(&mut r, nm, ni, 0.6, 0);
    let mut draw = |n: usize| (0..n).map(|_| r.random_range(-1.5..1.5)).collect::<Vec<f64>>();
    let (theta, a, b) = (draw(nm), draw(ni), draw(ni));
    let mut model = IrtModel::new(obs.model_ids(), obs.instance_ids(), theta, a, b).map_err(|e| e.to_string())?;
    model.config.lambda_l2 = 10f64.powf(r.random_range(-3.0..0.0));
    let omega = obs.pairs().to_vec();
    let g = irt_gradients(&model, &omega).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = g.theta.iter().chain(&g.a).chain(&g.b).copied().collect();
    let mut flat: Vec<f64> = model.theta.iter().chain(&model.a).chain(&model.b).copied().collect();
    check_coords("irt", seed, &analytic, &mut flat, |p| {
        let mut mm = model.clone();
        mm.theta.copy_from_slice(&p[..nm]);
        mm.a.copy_from_slice(&p[nm..nm + ni]);
        mm.b.copy_from_slice(&p[nm + ni..]);
        irt_objective(&mm, &omega).unwrap()
    })
}

fn ncf_gradient_config(seed: u64) -> Result<f64, String> {
    let mut r = rng(2000 + seed);
    let nm = r.random_range(2..6);
    let ni = r.random_range(2..6);
    let obs = random_dataset(&mut r, nm, ni, 0.6, 0);
    let config = NcfConfig {
        train: TrainConfig {
            latent_dim: r.random_range(1..4),
            lambda_l2: 10f64.powf(r.random_range(-3.0..-1.0)),
            seed,
            ..TrainConfig::default()
        },
        factor_dim: r.random_range(1..3),
        hidden: [r.random_range(2..6), r.random_range(2..6)],
    };
    let mut model: NcfModel<f64> = NcfModel::initialize(&obs, &config).map_err(|e| e.to_string())?;
    for v in &mut model.params {
        *v += r.random_range(-0.1..0.1);
    }
    let omega = obs.pairs().to_vec();
    let analytic = ncf_gradients(&model, &omega).map_err(|e| e.to_string())?;
    let mut flat = model.params.clone();
    check_coords("ncf", seed, &analytic, &mut flat, |p| {
        let mut mm = model.clone();
        mm.params.copy_from_slice(p);
        ncf_objective(&mm, &omega).unwrap()
    })
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..GRADIENT_CONFIGS {
        worst[0] = worst[0].max(lrmf_gradient_config(seed)?);
        worst[1] = worst[1].max(irt_gradient_config(seed)?);
        worst[2] = worst[2].max(ncf_gradient_config(seed)?);
    }
    let t = within_budget(start, GRADIENT_BUDGET)?;
    Ok(format!(
        "{GRADIENT_CONFIGS} configs each, worst relative error lrmf {:.1e} irt {:.1e} ncf {:.1e}, {t:.2?}",
        worst[0], worst[1], worst[2]
    ))
}

fn metric_oracles() -> Outcome {
    let mut worst_auc: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    for seed in 0..METRIC_SETS {
        let mut r = rng(seed);
        let n = r.random_range(2..=METRIC_MAX_LEN);
        // Coarse grid so that ties occur.
        let ties = r.random_bool(0.5);
        let scores: Vec<(f64, u8)> = (0..n)
            .map(|_| {
                let s: f64 = r.random_range(0.0..1.0);
                (if ties { (s * 10.0).floor() / 10.0 } else { s }, r.random_range(0..2))
            })
            .collect();
        match (auc_roc(&scores), brute_auc(&scores)) {
            (Ok(a), Some(b)) => {
                worst_auc = worst_auc.max((a - b).abs());
                ensure((a - b).abs() <= METRIC_TOL, || format!("set {seed}: auc {a} vs {b}"))?;
            }
            (Err(_), None) => {}
            (a, b) => return Err(format!("set {seed}: definedness differs, {a:?} vs {b:?}")),
        }
        let x: Vec<f64> = scores.iter().map(|s| s.0).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let got = pearson(&x, &y).map_err(|e| e.to_string())?;
        match (got, brute_pearson(&x, &y)) {
            (Some(a), Some(b)) => {
                worst_r = worst_r.max((a - b).abs());
                ensure((a - b).abs() <= METRIC_TOL, || format!("set {seed}: pearson {a} vs {b}"))?;
            }
            (None, None) => {}
            (a, b) => return Err(format!("set {seed}: pearson definedness differs, {a:?} vs {b:?}")),
        }
    }
    Ok(format!("{METRIC_SETS} sets, worst |diff| auc {worst_auc:.1e} pearson {worst_r:.1e}"))
}

fn neighbor_mean(obs: &ObservationSet, g: &Graph, u: usize, i: usize) -> Option<f64> {
    let instance = &obs.instances()[i].instance_id;
    let (mut sum, mut n) = (0u32, 0u32);
    for e in g.edges() {
        let v = match (e.a == u, e.b == u) {
            (true, _) => e.b,
            (_, true) => e.a,
            _ => continue,
        };
        let model = &obs.models()[v].model_id;
        if let Some(o) = obs.observations().iter().find(|o| &o.model_id == model && &o.instance_id == instance) {
            sum += u32::from(o.score);
            n += 1;
        }
    }
    (n > 0).then(|| f64::from(sum) / f64::from(n))
}

fn mla_oracle() -> Outcome {
    let mut checked = 0usize;
    for seed in 0..MLA_FIXTURES {
        let mut r = rng(seed);
        let nm = r.random_range(1..8);
        let ni = r.random_range(1..6);
        let density = r.random_range(0.0..1.0);
        let obs = random_dataset(&mut r, nm, ni, density, 0);
        let p = r.random_range(0.0..1.0);
        let g = random_graph(&mut r, nm, p, false);
        let g = Graph::from_pairs(obs.model_ids(), g.edges().iter().map(|e| (e.a, e.b))).map_err(|e| e.to_string())?;
        for u in 0..nm {
            for i in 0..ni {
                let (got, want) = (mla_predict(&obs, &g, u, i), neighbor_mean(&obs, &g, u, i));
                ensure(got == want, || format!("fixture {seed} ({u},{i}): {got:?} vs {want:?}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{MLA_FIXTURES} fixtures, {checked} predictions identical"))
}

/// Default synthetic ecosystem for `seed`, split so that test models are cold.
fn ecosystem(seed: u64) -> Result<(ObservationSet, Graph, PipelineConfig), String> {
    let (obs, _) = generate(&SynthConfig { seed, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    let obs = split_models(obs, SYNTH_SPLIT, seed).map_err(|e| e.to_string())?;
    let g = lineage_graph(&obs);
    let mut cfg = PipelineConfig::default();
    cfg.train.seed = seed;
    Ok((obs, g, cfg))
}

struct SynthRun {
    mf_pearson: f64,
    lrmf_pearson: f64,
    lrmf_auc: f64,
    lrmf_route: f64,
    random_route: f64,
    oracle_checks: usize,
}

fn synth_run(seed: u64) -> Result<SynthRun, String> {
    let (obs, g, cfg) = ecosystem(seed)?;
    let err = |e: lineage_core::Error| e.to_string();
    let mf = fit(Method::Mf, &obs, &g, &cfg).map_err(err)?;
    let mf_report = evaluate(&mf, &obs, Split::Test, "mf").map_err(err)?;
    let lrmf = fit(Method::Lrmf, &obs, &g, &cfg).map_err(err)?;
    let lrmf_report = evaluate(&lrmf, &obs, Split::Test, "lrmf").map_err(err)?;

    let cands = obs.models_in(Split::Test);
    let insts = fully_observed_instances(&obs, &cands);
    ensure(!insts.is_empty(), || format!("seed {seed}: no fully observed instances"))?;
    let summary = routing_summary(&obs, &[("lrmf".into(), &lrmf)], &cands, &insts, seed).map_err(err)?;
    let overall = |name: &str| summary.reports.iter().find(|r| r.strategy == name).map(|r| r.overall);

    // Oracle routing against an independent per-instance max, per benchmark.
    let oracle = route("oracle", &OraclePredictor { obs: &obs }, &cands, &insts, &obs).map_err(err)?;
    let best = best_model_baseline(&obs, &cands, &insts, true).map_err(err)?;
    let mut by_bench: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &i in &insts {
        let max = cands.iter().filter_map(|&u| obs.score(u, i)).max().unwrap_or(0);
        by_bench.entry(obs.instances()[i].benchmark_id.as_str()).or_default().push(f64::from(max));
    }
    let mut oracle_checks = 0;
    for (b, maxes) in &by_bench {
        let want = maxes.iter().sum::<f64>() / maxes.len() as f64;
        let got = oracle.per_benchmark[*b];
        ensure((got - want).abs() <= ROUTE_TOL, || format!("seed {seed} {b}: oracle {got} vs per-instance max {want}"))?;
        ensure(got >= best.per_benchmark[*b] - ROUTE_TOL, || format!("seed {seed} {b}: oracle below best model"))?;
        oracle_checks += 1;
    }

    Ok(SynthRun {
        mf_pearson: mf_report.overall.pearson.unwrap_or(0.0),
        lrmf_pearson: lrmf_report.overall.pearson.unwrap_or(f64::NAN),
        lrmf_auc: lrmf_report.overall.auc.unwrap_or(f64::NAN),
        lrmf_route: overall("lrmf").ok_or("missing lrmf routing")?,
        random_route: overall("random").ok_or("missing random routing")?,
        oracle_checks,
    })
}

fn cold_start(runs: &[SynthRun], elapsed: Duration) -> Outcome {
    let mf: Vec<f64> = runs.iter().map(|r| r.mf_pearson.abs()).collect();
    let lr: Vec<f64> = runs.iter().map(|r| r.lrmf_pearson).collect();
    let auc: Vec<f64> = runs.iter().map(|r| r.lrmf_auc).collect();
    let detail = format!(
        "median mf |r| {:.3} [{}], lrmf r {:.3} [{}], lrmf auc {:.3} [{}], {elapsed:.1?}",
        median(mf.clone()),
        fmt_list(&mf),
        median(lr.clone()),
        fmt_list(&lr),
        median(auc.clone()),
        fmt_list(&auc)
    );
    ensure(median(mf) <= MF_MAX_ABS_PEARSON, || format!("mf not degenerate: {detail}"))?;
    ensure(median(lr) >= LRMF_MIN_PEARSON, || format!("lrmf pearson low: {detail}"))?;
    ensure(median(auc) >= LRMF_MIN_AUC, || format!("lrmf auc low: {detail}"))?;
    ensure(elapsed < COLD_START_BUDGET, || format!("over budget: {detail}"))?;
    Ok(detail)
}

fn routing(runs: &[SynthRun]) -> Outcome {
    let lr: Vec<f64> = runs.iter().map(|r| r.lrmf_route).collect();
    let rnd: Vec<f64> = runs.iter().map(|r| r.random_route).collect();
    let checks: usize = runs.iter().map(|r| r.oracle_checks).sum();
    let detail = format!(
        "oracle = per-instance max and >= best model on {checks} benchmark runs; median lrmf {:.3} [{}] vs random {:.3} [{}]",
        median(lr.clone()),
        fmt_list(&lr),
        median(rnd.clone()),
        fmt_list(&rnd)
    );
    ensure(median(lr) >= median(rnd), || detail.clone())?;
    Ok(detail)
}

fn noise_asymmetry() -> Outcome {
    let mut removed = Vec::new();
    let mut added = Vec::new();
    for seed in SEEDS {
        let (obs, g, cfg) = ecosystem(seed)?;
        let r = |graph: &Graph| -> Result<f64, String> {
            let f = fit(Method::Lrmf, &obs, graph, &cfg).map_err(|e| e.to_string())?;
            let rep = evaluate(&f, &obs, Split::Test, "lrmf").map_err(|e| e.to_string())?;
            rep.overall.pearson.ok_or_else(|| "undefined pearson".into())
        };
        let base = r(&g)?;
        let minus = r(&perturb_lineage(&g, -NOISE_FRACTION, seed).map_err(|e| e.to_string())?)?;
        let plus = r(&perturb_lineage(&g, NOISE_FRACTION, seed).map_err(|e| e.to_string())?)?;
        removed.push(base - minus);
        added.push(base - plus);
    }
    let detail = format!(
        "median pearson drop from +{NOISE_FRACTION} edges {:.3} [{}] vs -{NOISE_FRACTION} edges {:.3} [{}]",
        median(added.clone()),
        fmt_list(&added),
        median(removed.clone()),
        fmt_list(&removed)
    );
    ensure(median(added) > median(removed), || detail.clone())?;
    Ok(detail)
}

fn bin(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lineage-predict"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

const QUICK: &[&str] = &["--data", "data", "--split-fractions", "0.5,0.2,0.3", "--max-epochs", "100", "--patience", "20"];

fn with_quick<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().chain(QUICK).copied().collect()
}

fn reduction_identity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    bin(d, &["gen", "--seed", "5", "--out", "data"])?;
    bin(d, &with_quick(&["train", "--method", "lrmf", "--lambda-model", "0", "--lambda-instance", "0", "--out", "a.json"]))?;
    bin(d, &with_quick(&["train", "--method", "mf", "--out", "b.json"]))?;
    let a = fs::read(d.join("a.json")).map_err(|e| e.to_string())?;
    let b = fs::read(d.join("b.json")).map_err(|e| e.to_string())?;
    ensure(a == b, || "checkpoints differ".into())?;
    Ok(format!("lrmf with zero graph weights and mf checkpoints identical ({} bytes)", a.len()))
}

fn run_every_command(d: &Path) -> Result<(), String> {
    bin(d, &["gen", "--seed", "7", "--generations", "2", "--n-instances", "80", "--out", "data"])?;
    for m in ["lrmf", "mf", "irt", "ncf"] {
        let out = format!("{m}.json");
        let mut args = with_quick(&["train", "--method", m, "--out", &out]);
        if m == "ncf" {
            args.retain(|a| !["--max-epochs", "100", "--patience", "20"].contains(a));
            args.extend(["--max-epochs", "5", "--patience", "5"]);
        }
        bin(d, &args)?;
    }
    bin(d, &with_quick(&["eval", "--checkpoint", "lrmf.json", "--out-dir", "eval"]))?;
    bin(d, &with_quick(&["eval", "--mla", "--out-dir", "eval_mla"]))?;
    bin(d, &with_quick(&["route", "--checkpoint", "lrmf=lrmf.json", "--checkpoint", "irt=irt.json", "--mla", "--out-dir", "route"]))?;
    bin(d, &with_quick(&["sweep", "--lambda-model-grid", "0,1e-4", "--lambda-instance-grid", "0,1e-5", "--out", "sweep.csv"]))?;
    bin(d, &with_quick(&["noise", "--fractions=-0.4,0,0.4", "--methods", "lrmf,mla", "--out", "noise.csv"]))?;
    bin(d, &with_quick(&["tsweep", "--t", "5,20,1000", "--methods", "lrmf,mf", "--out", "tsweep.csv"]))
}

fn files(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_every_command(a.path())?;
    run_every_command(b.path())?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    ensure(fa.keys().eq(fb.keys()), || "different file sets".into())?;
    for (name, bytes) in &fa {
        ensure(fb[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} output files byte-identical across two runs", fa.len()))
}

fn main() {
    let suite = Instant::now();
    let strict = std::env::var_os(STRICT_ENV).is_some();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("laplacian-identity", laplacian_identity()),
        ("gradient-checks", gradient_checks()),
        ("metric-oracles", metric_oracles()),
        ("mla-oracle", mla_oracle()),
    ];

    let start = Instant::now();
    let runs: Result<Vec<SynthRun>, String> = SEEDS.iter().map(|&s| synth_run(s)).collect();
    let elapsed = start.elapsed();
    match runs {
        Ok(runs) => {
            results.push(("cold-start", cold_start(&runs, elapsed)));
            results.push(("routing-dominance", routing(&runs)));
        }
        Err(e) => {
            results.push(("cold-start", Err(e.clone())));
            results.push(("routing-dominance", Err(e)));
        }
    }
    results.push(("noise-asymmetry", noise_asymmetry()));
    results.push(("reduction-identity", reduction_identity()));
    results.push(("determinism", determinism()));
    let total = suite.elapsed();
    results.push((
        "suite-runtime",
        ensure(total < SUITE_BUDGET, || format!("{total:.1?}, budget {SUITE_BUDGET:?}")).map(|()| format!("{total:.1?}")),
    ));

    let mut unexpected = 0;
    for (name, outcome) in &results {
        let known = KNOWN_FAILURES.contains(name);
        match outcome {
            Ok(detail) => {
                println!("PASS {name}: {detail}");
                if known {
                    println!("     {name} is listed as a known failure but passed");
                    unexpected += 1;
                }
            }
            Err(detail) => {
                println!("FAIL {name}: {detail}{}", if known { " (known failure)" } else { "" });
                if !known || strict {
                    unexpected += 1;
                }
            }
        }
    }
    let passed = results.iter().filter(|r| r.1.is_ok()).count();
    println!("acceptance: {passed}/{} passed, {unexpected} unexpected", results.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
