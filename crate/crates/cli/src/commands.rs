use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use lineage_core::checkpoint::{self, Trained};
use lineage_core::dataset::{subsample_with_holdout, ObservationSet, Split};
use lineage_core::graphs::perturb_lineage;
use lineage_core::metrics::{evaluate, evaluate_pairs, EvalReport};
use lineage_core::pipeline::{
    fit, fully_observed_instances, lineage_graph, routing_summary, Fitted, Method, PipelineConfig,
};
use lineage_core::synthgen::{self, SynthConfig};
use lineage_core::Predictor;
use rayon::prelude::*;

use crate::output::{ensure_parent, num, write_csv, write_json};
use crate::settings::{DataArgs, HyperArgs};
use crate::{EvalArgs, GenArgs, NoiseArgs, PoolArg, RouteArgs, SweepArgs, TrainArgs, TsweepArgs};

fn load(data: &DataArgs, hyper: &HyperArgs) -> Result<(ObservationSet, PipelineConfig)> {
    let mut settings = data.settings()?;
    hyper.apply(&mut settings.pipeline);
    settings.pipeline.train.validate()?;
    let obs = data.load(&settings)?;
    Ok((obs, settings.pipeline))
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    set!(seed, n_roots, children_per_generation, generations, merge_fraction, n_instances, n_benchmarks, latent_dim, drift_sigma, logit_scale, embed_noise);
    let (set, truth) = synthgen::generate(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    synthgen::write(&a.out, &set, &truth)?;
    let merged = set.models().iter().filter(|m| m.parents.len() > 1).count();
    println!(
        "wrote {} models ({merged} merged), {} instances, {} observations to {}",
        set.n_models(),
        set.n_instances(),
        set.observations().len(),
        a.out.display()
    );
    Ok(())
}

fn log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    let method: Method = a.method.into();
    let fitted = fit(method, &obs, &lineage_graph(&obs), &cfg)?;
    let trained = fitted.trained().expect("trainable method");
    ensure_parent(&a.out)?;
    checkpoint::save(&a.out, trained)?;
    let rows: Vec<[String; 3]> = trained
        .training_log()
        .iter()
        .map(|r| [r.epoch.to_string(), r.train_loss.to_string(), num(r.dev_metric)])
        .collect();
    write_csv(&log_path(a), &["epoch", "train_loss", "dev_auc"], &rows)?;
    let best = trained
        .training_log()
        .iter()
        .filter_map(|r| r.dev_metric)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    println!(
        "{method}: {} epochs, best dev AUC {}, checkpoint {}",
        rows.len(),
        num(best),
        a.out.display()
    );
    Ok(())
}

const REPORT_HEADER: [&str; 4] = ["benchmark", "method", "metric", "value"];

fn load_checkpoint(path: &Path, obs: &ObservationSet) -> Result<Trained<f64>> {
    let model: Trained<f64> = checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    model
        .check_alignment(obs)
        .with_context(|| format!("checkpoint {} does not match the dataset", path.display()))?;
    Ok(model)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    let (name, predictor): (String, Fitted) = match &a.checkpoint {
        Some(path) => {
            let model = load_checkpoint(path, &obs)?;
            (model.kind().to_owned(), Fitted::Model(model))
        }
        None => ("mla".to_owned(), fit(Method::Mla, &obs, &lineage_graph(&obs), &cfg)?),
    };
    let report = evaluate(&predictor, &obs, a.split.into(), &name)?;
    write_json(&a.out_dir.join("report.json"), &report)?;
    write_csv(&a.out_dir.join("report.csv"), &REPORT_HEADER, &report.csv_rows())?;
    println!(
        "{name} on {}: AUC {}, Pearson {}, macro Pearson {}",
        Split::from(a.split).as_str(),
        num(report.overall.auc),
        num(report.overall.pearson),
        num(report.macro_pearson)
    );
    Ok(())
}

pub fn route(a: &RouteArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    let mut named: Vec<(String, Fitted)> = Vec::new();
    for spec in &a.checkpoints {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_owned(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.clone());
                (stem, p)
            }
        };
        named.push((name, Fitted::Model(load_checkpoint(&path, &obs)?)));
    }
    if a.mla {
        named.push(("mla".to_owned(), fit(Method::Mla, &obs, &lineage_graph(&obs), &cfg)?));
    }
    let candidates = match a.pool {
        PoolArg::Test => obs.models_in(Split::Test),
        PoolArg::All => (0..obs.n_models()).collect(),
    };
    let instances = if a.observed_only {
        fully_observed_instances(&obs, &candidates)
    } else {
        (0..obs.n_instances()).collect()
    };
    if instances.is_empty() {
        bail!("no instance has true scores for every pool model");
    }
    let predictors: Vec<(String, &dyn Predictor)> = named.iter().map(|(n, p)| (n.clone(), p as &dyn Predictor)).collect();
    let summary = routing_summary(&obs, &predictors, &candidates, &instances, a.random_seed)?;
    write_json(&a.out_dir.join("routing.json"), &summary)?;
    write_csv(
        &a.out_dir.join("routing_scores.csv"),
        &["benchmark", "strategy", "realized_score"],
        &summary.score_rows(),
    )?;
    write_csv(
        &a.out_dir.join("routing_assignments.csv"),
        &["strategy", "scope", "model_id", "count"],
        &summary.assignment_rows(),
    )?;
    for r in &summary.reports {
        println!("{:<18} {:.4}", r.strategy, r.overall);
    }
    Ok(())
}

const SWEEP_HEADER: [&str; 8] = [
    "lambda_l2",
    "lambda_model",
    "lambda_instance",
    "status",
    "dev_auc",
    "dev_pearson",
    "best_epoch",
    "message",
];

type CellKey = [u64; 3];

fn cell_key(c: [f64; 3]) -> CellKey {
    c.map(f64::to_bits)
}

fn read_completed(path: &Path) -> Result<BTreeMap<CellKey, Vec<String>>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    for rec in r.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        if rec.len() != SWEEP_HEADER.len() || &rec[3] != "ok" {
            continue;
        }
        let parse = |k: usize| rec[k].parse::<f64>();
        if let (Ok(a), Ok(b), Ok(c)) = (parse(0), parse(1), parse(2)) {
            done.insert(cell_key([a, b, c]), rec.iter().map(str::to_owned).collect());
        }
    }
    Ok(done)
}

fn sweep_cell(obs: &ObservationSet, base: &PipelineConfig, cell: [f64; 3]) -> Vec<String> {
    let mut cfg = base.clone();
    cfg.train.lambda_l2 = cell[0];
    cfg.train.lambda_model = cell[1];
    cfg.train.lambda_instance = cell[2];
    let head = cell.map(|v| v.to_string());
    let result = fit(Method::Lrmf, obs, &lineage_graph(obs), &cfg).and_then(|f| {
        let report = evaluate(&f, obs, Split::Dev, "lrmf")?;
        let epoch = f.trained().map_or(0, |t| match t {
            Trained::Lrmf(m) => m.best_epoch,
            _ => 0,
        });
        Ok((report, epoch))
    });
    let tail = match result {
        Ok((r, epoch)) => [
            "ok".to_owned(),
            num(r.overall.auc),
            num(r.overall.pearson),
            epoch.to_string(),
            String::new(),
        ],
        Err(e) => {
            log::warn!("sweep cell {head:?} failed: {e}");
            ["failed".to_owned(), num(None), num(None), String::new(), e.to_string()]
        }
    };
    head.into_iter().chain(tail).collect()
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    let l2_grid = if a.lambda_l2_grid.is_empty() {
        vec![cfg.train.lambda_l2]
    } else {
        a.lambda_l2_grid.clone()
    };
    let mut cells = Vec::new();
    for &l2 in &l2_grid {
        for &lm in &a.lambda_model_grid {
            for &lx in &a.lambda_instance_grid {
                cells.push([l2, lm, lx]);
            }
        }
    }
    if cells.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
        bail!("grid weights must be finite and nonnegative");
    }
    let done = read_completed(&a.out)?;
    let todo: Vec<[f64; 3]> = cells.iter().copied().filter(|c| !done.contains_key(&cell_key(*c))).collect();

    // Finished cells are appended as they complete so an interrupted sweep
    // can resume; the file is rewritten in grid order at the end.
    ensure_parent(&a.out)?;
    let fresh = !a.out.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.out)
        .with_context(|| format!("opening {}", a.out.display()))?;
    let writer = Mutex::new(csv::Writer::from_writer(file));
    if fresh {
        writer.lock().unwrap().write_record(SWEEP_HEADER)?;
    }
    let computed: Vec<(CellKey, Vec<String>)> = todo
        .par_iter()
        .map(|&cell| {
            let row = sweep_cell(&obs, &cfg, cell);
            let mut w = writer.lock().unwrap();
            w.write_record(&row)?;
            w.flush()?;
            Ok((cell_key(cell), row))
        })
        .collect::<Result<_>>()?;
    drop(writer);

    let mut by_key = done;
    by_key.extend(computed);
    let rows: Vec<Vec<String>> = cells.iter().map(|c| by_key[&cell_key(*c)].clone()).collect();
    write_csv(&a.out, &SWEEP_HEADER, &rows)?;
    let failed = rows.iter().filter(|r| r[3] != "ok").count();
    println!(
        "{} cells ({} reused, {failed} failed) written to {}",
        rows.len(),
        cells.len() - todo.len(),
        a.out.display()
    );
    Ok(())
}

fn metric_cells(r: &EvalReport) -> [String; 3] {
    [num(r.overall.pearson), num(r.overall.auc), num(r.macro_pearson)]
}

pub fn noise(a: &NoiseArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    let base = lineage_graph(&obs);
    let mut jobs = Vec::new();
    for &f in &a.fractions {
        for &m in &a.methods {
            jobs.push((f, Method::from(m)));
        }
    }
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(f, method)| {
            let g = perturb_lineage(&base, f, a.perturb_seed)?;
            let fitted = fit(method, &obs, &g, &cfg)?;
            let report = evaluate(&fitted, &obs, Split::Test, method.as_str())?;
            let mut row = vec![f.to_string(), method.to_string(), g.n_edges().to_string()];
            row.extend(metric_cells(&report));
            Ok(row)
        })
        .collect::<Result<_>>()?;
    write_csv(
        &a.out,
        &["fraction", "method", "n_edges", "pearson", "auc", "macro_pearson"],
        &rows,
    )?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}

pub fn tsweep(a: &TsweepArgs) -> Result<()> {
    let (obs, cfg) = load(&a.data, &a.hyper)?;
    if a.t.contains(&0) {
        bail!("t values must be positive");
    }
    let mut jobs = Vec::new();
    for &t in &a.t {
        for &m in &a.methods {
            jobs.push((t, Method::from(m)));
        }
    }
    let rows: Vec<Vec<Vec<String>>> = jobs
        .par_iter()
        .map(|&(t, method)| {
            let (sub, withheld) = subsample_with_holdout(&obs, t, a.subsample_seed)?;
            let fitted = fit(method, &sub, &lineage_graph(&sub), &cfg)?;
            let mut out = Vec::new();
            let test = evaluate(&fitted, &sub, Split::Test, method.as_str())?;
            let mut row = vec![t.to_string(), method.to_string(), "test".to_owned()];
            row.extend(metric_cells(&test));
            out.push(row);
            if !withheld.is_empty() {
                let warm = evaluate_pairs(&fitted, &sub, &withheld, method.as_str());
                let mut row = vec![t.to_string(), method.to_string(), "withheld".to_owned()];
                row.extend(metric_cells(&warm));
                out.push(row);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = rows.into_iter().flatten().collect();
    write_csv(&a.out, &["t", "method", "scope", "pearson", "auc", "macro_pearson"], &rows)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}
