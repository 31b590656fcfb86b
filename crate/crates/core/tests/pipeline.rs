use jdag_core::evaluate::{auc, confusion, metrics_table, EdgeSubset};
use jdag_core::io;
use jdag_core::model::{CholeskyPair, SupportGraph};
use jdag_core::priors::default_hyperparameters;
use jdag_core::sampler::{run_chain, sample_parameters, Mode};
use jdag_core::simulate::{simulate, Perturbation, ScenarioSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn strong_spec(seed: u64) -> ScenarioSpec {
    // few variables, plenty of rows: the posterior should concentrate on the truth
    ScenarioSpec {
        p: 8,
        density: 0.25,
        schedule: vec![Perturbation::swap(1)],
        coef_range: (0.6, 0.9),
        diag_range: (1.0, 1.5),
        n: vec![400, 400],
        seed,
    }
}

#[test]
fn recovers_strong_signal_in_every_mode() {
    let (truth, data) = simulate(&strong_spec(3)).unwrap();
    let mut hp = default_hyperparameters(&data);
    hp.iterations = 2000;
    hp.burn_in = 500;
    for mode in [Mode::Joint, Mode::Separate] {
        let fit = run_chain(&data, &hp, mode).unwrap();
        let c = confusion(&fit.selected, &truth.graph, EdgeSubset::All).unwrap();
        assert!(c.mcc() > 0.8, "{mode}: {c:?}");
        assert!(auc(&fit.inclusion, &truth.graph, EdgeSubset::All).unwrap() > 0.9);
    }
    let common = run_chain(&data, &hp, Mode::Common).unwrap();
    assert_eq!(common.selected.edges(0), common.selected.edges(1));
}

#[test]
fn fit_files_round_trip_into_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = strong_spec(4);
    let (truth, data) = simulate(&spec).unwrap();
    let manifest_path = io::write_simulation(dir.path(), &spec, &truth, &data).unwrap();
    let loaded = io::load_dataset(&manifest_path).unwrap();
    let mut hp = default_hyperparameters(&loaded);
    hp.iterations = 600;
    hp.burn_in = 100;
    let fit = run_chain(&loaded, &hp, Mode::Joint).unwrap();
    let run = io::RunManifest {
        version: io::VERSION.into(),
        mode: Mode::Joint,
        seed: hp.seed,
        data: vec![manifest_path.display().to_string()],
        centered: false,
        p: loaded.p(),
        k: loaded.k(),
        n: vec![400, 400],
        threads: 1,
        hyperparameters: hp.clone(),
        timings: io::Timings::default(),
    };
    let out = dir.path().join("fit");
    io::write_fit(&out, &fit, &run).unwrap();
    let (selected, inclusion) = io::read_fitted(&out, loaded.p(), loaded.k()).unwrap();
    assert_eq!(selected, fit.selected);
    assert_eq!(inclusion.as_deref(), Some(fit.inclusion.as_slice()));
    let rows = metrics_table(&selected, inclusion.as_deref(), &io::load_truth(&manifest_path).unwrap().graph).unwrap();
    assert!(rows.iter().any(|r| r.group == "All edges" && r.measure == "AUC"));
}

#[test]
fn parameter_draws_respect_selected_graph() {
    let (_, data) = simulate(&strong_spec(5)).unwrap();
    let mut hp = default_hyperparameters(&data);
    hp.iterations = 600;
    hp.burn_in = 100;
    let fit = run_chain(&data, &hp, Mode::Joint).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = sample_parameters(&fit.selected, &data, &hp, &mut rng).unwrap();
    assert_eq!(SupportGraph::from_pairs(&pairs).unwrap(), fit.selected);
    for pair in &pairs {
        let omega = pair.compose();
        let back = CholeskyPair::decompose(&omega).unwrap();
        assert!((back.a() - pair.a()).abs().max() < 1e-9);
    }
}
