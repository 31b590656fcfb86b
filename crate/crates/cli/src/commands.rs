use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use jdag_core::evaluate::{edge_accounting, metrics_table, roc_points, scores_and_labels, subset_label, EdgeSubset, MetricRow};
use jdag_core::io::{self, DataManifest, RocRecord, RunManifest, Timings};
use jdag_core::model::{Dataset, SupportGraph};
use jdag_core::oracle::{check_conditional_dominance, enumerate_column_posterior, validate_sampler};
use jdag_core::priors::default_hyperparameters;
use jdag_core::sampler::{Mode, Sampler};
use jdag_core::simulate::{simulate as simulate_scenario, ScenarioSpec};

use crate::{EvaluateArgs, FitArgs, OracleArgs, SimulateArgs};

fn thread_pool(requested: usize, columns: usize) -> Result<rayon::ThreadPool> {
    let threads = if requested == 0 {
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        columns.clamp(1, cores)
    } else {
        requested
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn print_overlaps(graph: &SupportGraph) {
    for k in 0..graph.k() {
        println!("group {}: {} edges", k + 1, graph.edge_count(k));
    }
    for a in 0..graph.k() {
        for b in a + 1..graph.k() {
            let shared = graph.overlap(a, b);
            let total = graph.edge_count(a);
            let pct = if total == 0 { 100.0 } else { 100.0 * shared as f64 / total as f64 };
            println!("overlap({}, {}): {shared} of {total} edges ({pct:.2}%)", a + 1, b + 1);
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = ScenarioSpec::scenario(args.scenario, args.p, args.n, args.seed)?;
    let (truth, data) = simulate_scenario(&spec)?;
    let manifest = io::write_simulation(&args.out, &spec, &truth, &data)
        .with_context(|| format!("writing scenario files to {}", args.out.display()))?;
    print_overlaps(&truth.graph);
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn load_data(paths: &[PathBuf]) -> Result<Dataset> {
    let is_manifest = paths.len() == 1 && paths[0].extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let data = if is_manifest {
        io::load_dataset(&paths[0])
    } else {
        io::load_csvs(paths)
    };
    data.with_context(|| format!("loading data from {}", display_paths(paths)))
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

pub fn fit(args: &FitArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let mut data = load_data(&args.data)?;
    if args.center {
        data = data.centered();
    }
    let mut hp = match &args.config {
        Some(path) => io::read_hyperparameters(path).with_context(|| format!("reading {}", path.display()))?,
        None => default_hyperparameters(&data),
    };
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    if let Some(t) = args.iterations {
        hp.iterations = t;
    }
    if let Some(b) = args.burn_in {
        hp.burn_in = b;
    }
    let sampler = Sampler::new(&data, &hp, args.mode)?;
    let pool = thread_pool(threads, data.p().saturating_sub(1))?;
    let sampling = Instant::now();
    let summary = pool.install(|| sampler.run());
    let sampling_seconds = sampling.elapsed().as_secs_f64();

    let manifest = RunManifest {
        version: io::VERSION.into(),
        mode: args.mode,
        seed: hp.seed,
        data: args.data.iter().map(|p| p.display().to_string()).collect(),
        centered: args.center,
        p: data.p(),
        k: data.k(),
        n: data.groups().iter().map(|g| g.n()).collect(),
        threads: pool.current_num_threads(),
        hyperparameters: hp.clone(),
        timings: Timings { sampling_seconds, total_seconds: start.elapsed().as_secs_f64() },
    };
    io::write_fit(&args.out, &summary, &manifest)
        .with_context(|| format!("writing fit outputs to {}", args.out.display()))?;
    for k in 0..data.k() {
        let rates = &summary.acceptance[k][1..];
        let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
        println!(
            "group {} ({}): {} selected edges, mean acceptance {mean:.3}",
            k + 1,
            data.group(k).label(),
            summary.selected.edge_count(k)
        );
    }
    println!("sampling took {sampling_seconds:.2}s on {} threads", manifest.threads);
    Ok(())
}

pub fn oracle(args: &OracleArgs, threads: usize) -> Result<()> {
    let spec = ScenarioSpec::small(args.p, args.k, args.n, args.seed)?;
    let (truth, data) = simulate_scenario(&spec)?;
    let mut hp = default_hyperparameters(&data);
    hp.seed = args.seed;
    hp.burn_in = args.burn_in;
    hp.iterations = args.burn_in + args.sweeps;
    let pool = thread_pool(threads, data.p() - 1)?;
    println!(
        "instance: p = {}, K = {}, n = {}, seed = {}, {} sweeps after {} burn-in",
        args.p, args.k, args.n, args.seed, args.sweeps, args.burn_in
    );

    let mut failures = 0;
    for mode in [Mode::Joint, Mode::Separate, Mode::Common] {
        let results = pool.install(|| validate_sampler(&data, &hp, mode))?;
        for r in results {
            let ok = r.total_variation <= args.tv_tol;
            failures += usize::from(!ok);
            println!(
                "{} {mode:<9} column {}: TV = {:.4} (tolerance {})",
                verdict(ok),
                r.j + 1,
                r.total_variation,
                args.tv_tol
            );
        }
    }

    let uncoupled = hp.without_coupling();
    for j in 1..data.p() {
        let joint = enumerate_column_posterior(&data, j, &uncoupled, Mode::Joint)?;
        let separate = enumerate_column_posterior(&data, j, &uncoupled, Mode::Separate)?;
        let diff = joint.probs.iter().zip(&separate.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ok = joint.configs == separate.configs && diff <= 1e-12;
        failures += usize::from(!ok);
        println!("{} c2 = 0 column {}: joint vs product of separate, max diff {diff:.2e}", verdict(ok), j + 1);
    }

    let mut checked = 0;
    for j in 1..data.p() {
        let supports = truth.graph.column(j).sets;
        for k in 0..data.k() {
            match check_conditional_dominance(&data, j, &supports, k, &hp) {
                Ok(check) => {
                    checked += 1;
                    failures += usize::from(!check.holds);
                    println!(
                        "{} dominance column {} group {}: {:.6} >= {:.6}",
                        verdict(check.holds),
                        j + 1,
                        k + 1,
                        check.lhs,
                        check.rhs
                    );
                }
                Err(jdag_core::Error::NestingViolated) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    println!("{checked} nested (column, group) pairs checked");
    if failures > 0 {
        bail!("{failures} oracle checks failed");
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let manifest = DataManifest::read(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let truth = manifest.load_truth(manifest_dir(&args.truth))?;
    let (selected, inclusion) = io::read_fitted(&args.fitted, truth.graph.p(), truth.graph.k())
        .with_context(|| format!("reading fit from {}", args.fitted.display()))?;
    ensure!(selected.k() == truth.graph.k(), "fit has {} groups, truth has {}", selected.k(), truth.graph.k());

    let mut rows = metrics_table(&selected, inclusion.as_deref(), &truth.graph)?;
    for k in 0..selected.k() {
        rows.push(MetricRow { group: format!("Group {}", k + 1), measure: "Edges".into(), value: selected.edge_count(k) as f64 });
    }
    if selected.k() > 1 {
        let acc = edge_accounting(&selected)?;
        for (k, &u) in acc.unique.iter().enumerate() {
            rows.push(MetricRow { group: format!("Group {}", k + 1), measure: "Unique edges".into(), value: u as f64 });
        }
        rows.push(MetricRow { group: "All groups".into(), measure: "Shared edges".into(), value: acc.shared_by_all as f64 });
    }

    fs::create_dir_all(&args.out)?;
    io::write_metrics(&args.out.join("metrics.csv"), &rows)?;
    if let Some(inc) = &inclusion {
        let mut roc = Vec::new();
        let mut subsets: Vec<EdgeSubset> = (0..truth.graph.k()).map(EdgeSubset::Group).collect();
        subsets.extend([EdgeSubset::All, EdgeSubset::Differential]);
        for subset in subsets {
            let (scores, labels) = scores_and_labels(inc, &truth.graph, subset)?;
            if let Ok(points) = roc_points(&scores, &labels) {
                let name = subset_label(subset);
                roc.extend(points.into_iter().map(|(fpr, tpr)| RocRecord { subset: name.clone(), fpr, tpr }));
            }
        }
        io::write_roc(&args.out.join("roc.csv"), &roc)?;
    }
    for row in &rows {
        println!("{:<20} {:<13} {:.4}", row.group, row.measure, row.value);
    }
    Ok(())
}
