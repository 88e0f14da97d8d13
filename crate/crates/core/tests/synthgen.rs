use lineage_core::baselines::ncf::{ncf_train, NcfConfig};
use lineage_core::checkpoint::{self, Trained};
use lineage_core::dataset::load_dataset_dir;
use lineage_core::lrmf::TrainConfig;
use lineage_core::pipeline::{fit, lineage_graph, Method, PipelineConfig};
use lineage_core::synthgen::{generate, write, SynthConfig, SynthTruth, TRUTH_FILE};

#[test]
fn empirical_accuracy_matches_latent_probabilities() {
    let cfg = SynthConfig { n_instances: 4000, n_roots: 2, generations: 1, ..SynthConfig::default() };
    let (set, truth) = generate(&cfg).unwrap();
    for (u, m) in set.models().iter().enumerate() {
        let mut sum_p = 0.0;
        let mut var = 0.0;
        let mut hits = 0.0;
        for (i, inst) in set.instances().iter().enumerate() {
            let p = truth.probability(&m.model_id, &inst.instance_id).unwrap();
            sum_p += p;
            var += p * (1.0 - p);
            hits += f64::from(set.score(u, i).unwrap());
        }
        assert!((hits - sum_p).abs() <= 3.0 * var.sqrt(), "{}: {hits} vs {sum_p}", m.model_id);
    }
}

#[test]
fn written_files_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (set, truth) = generate(&SynthConfig { n_instances: 50, ..SynthConfig::default() }).unwrap();
    write(dir.path(), &set, &truth).unwrap();
    let back = load_dataset_dir(dir.path()).unwrap();
    assert_eq!(back.observations(), set.observations());
    assert_eq!(back.models(), set.models());
    assert_eq!(SynthTruth::load(&dir.path().join(TRUTH_FILE)).unwrap(), truth);

    let again = tempfile::tempdir().unwrap();
    write(again.path(), &set, &truth).unwrap();
    for f in ["models.jsonl", "instances.jsonl", "observations.jsonl", TRUTH_FILE] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}

#[test]
fn trained_checkpoints_round_trip_exactly() {
    let (set, _) = generate(&SynthConfig { n_instances: 40, ..SynthConfig::default() }).unwrap();
    let set = lineage_core::dataset::split_models(set, [0.6, 0.2, 0.2], 0).unwrap();
    let quick = TrainConfig { max_epochs: 50, patience: 10, ..TrainConfig::default() };
    let cfg = PipelineConfig { train: quick.clone(), ..PipelineConfig::default() };
    let g = lineage_graph(&set);
    let mut models: Vec<Trained<f64>> = [Method::Lrmf, Method::Irt]
        .into_iter()
        .map(|m| fit(m, &set, &g, &cfg).unwrap().trained().unwrap().clone())
        .collect();
    let ncf = NcfConfig { train: quick, factor_dim: 2, hidden: [8, 8] };
    models.push(Trained::Ncf(ncf_train(&set, &ncf).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    for m in models {
        let path = dir.path().join(format!("{}.json", m.kind()));
        checkpoint::save(&path, &m).unwrap();
        let back: Trained<f64> = checkpoint::load(&path).unwrap();
        assert_eq!(back, m);
        back.check_alignment(&set).unwrap();
    }
}
