//! Experiment drivers behind the `qauth` binary: configuration, per-session
//! seeding, the worker pool and CSV output.
//!
//! Session `i` of a run draws from `ChaCha8Rng::seed_from_u64(session_seed(master, i))`,
//! so results do not depend on the number of workers or the completion order.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{parse_list, AcceptanceKind, RunConfig, Scheme};
pub use output::{format_real, write_dataset, write_learning_curve, write_plot, write_roc, write_rows, PlotPoint, ResultRow};

use crate::bb84::{asymmetric_session, symmetric_session, AcceptanceMethod, Adversary, PositionKey};
use crate::classifier::{
    self, default_candidates, hyperparameter_select, load_weights, preprocess, save_weights, Dataset, MlpModel,
    Sample, TrainConfig, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::protocol::{
    best_sweep_point, mu_grid, r01, run_session, static_sweep, GateChoiceKey, Role, SweepPoint,
};
use crate::timing::build_schedule;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "QAUTH_WORKERS";

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for I/O errors.
pub const EXIT_IO: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of session `index` under `master`.
pub fn session_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

pub fn session_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(session_seed(master, index))
}

/// Worker count from `QAUTH_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f(i)` for `i in 0..n` on the worker pool and returns the results in
/// index order.
pub fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers_from_env()? {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn network(config: &RunConfig) -> Result<Option<MlpModel>> {
    match (config.acceptance, &config.weights) {
        (AcceptanceKind::Dnn, Some(path)) => Ok(Some(load_weights(path)?)),
        (AcceptanceKind::Dnn, None) => Err(Error::Config("run.acceptance = dnn needs run.weights".into())),
        (AcceptanceKind::Static, _) => Ok(None),
    }
}

fn acceptance<'a>(config: &RunConfig, model: &'a Option<MlpModel>) -> AcceptanceMethod<'a> {
    match model {
        Some(m) => AcceptanceMethod::Network(m),
        None => AcceptanceMethod::Threshold(config.mu),
    }
}

fn user_role(config: &RunConfig) -> Role {
    if config.attacker {
        Role::Attacker(config.attack)
    } else {
        Role::Legitimate
    }
}

/// `(distance, wait_us)` grid points in row-major order (distance outer).
fn grid(config: &RunConfig) -> Vec<(f64, f64)> {
    let waits: Vec<f64> = match config.scheme {
        // the embedded schemes have no waiting stage
        Scheme::UserServer => config.wait_us.clone(),
        _ => vec![0.0],
    };
    config
        .distances_km
        .iter()
        .flat_map(|d| waits.iter().map(move |t| (*d, *t)))
        .collect()
}

fn one_replicate(config: &RunConfig, model: &Option<MlpModel>, point: (f64, f64), seed: u64) -> Result<Vec<ResultRow>> {
    let (d, wait_us) = point;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = config.hardware.clone();
    params.distance_km = d;
    let accept = acceptance(config, model);
    let lambda = config.lambda;
    let row = |subject: &str, r01: f64, verdict: String, qber: Option<f64>| ResultRow {
        scheme: config.scheme.to_string(),
        subject: subject.to_string(),
        distance_km: d,
        wait_us,
        lambda,
        replicate: None,
        r01,
        std: 0.0,
        seed,
        verdict,
        qber,
    };
    let verdict = |accepted: bool| if accepted { "accept" } else { "reject" }.to_string();
    match config.scheme {
        Scheme::UserServer => {
            let timing = build_schedule(lambda, wait_us * 1e-6, d, &params)?;
            let key = GateChoiceKey::random(lambda, &mut rng);
            let t = run_session(&key, &timing, &params, user_role(config), &mut rng)?;
            let v = accept.judge(&t.matches)?;
            Ok(vec![row("user", r01(&t)?, verdict(v.accepted), None)])
        }
        Scheme::Symmetric | Scheme::Asymmetric => {
            let adversary = if config.attacker { config.adversary } else { Adversary::None };
            let au = if config.scheme == Scheme::Symmetric { lambda } else { 2 * lambda };
            let len = config.data_slots + au;
            let sessions = if config.scheme == Scheme::Symmetric {
                let k_ab = PositionKey::random(au, len, &mut rng)?;
                let k_ba = PositionKey::random(au, len, &mut rng)?;
                symmetric_session(config.sessions, lambda, &k_ab, &k_ba, &params, adversary, accept, &mut rng)?
            } else {
                let k = PositionKey::random(au, len, &mut rng)?;
                let f = GateChoiceKey::random(au, &mut rng);
                asymmetric_session(config.sessions, lambda, &k, &f, &params, adversary, accept, &mut rng)?
            };
            let mut rows = Vec::new();
            for s in sessions {
                let qber = s.sift.as_ref().map(|x| x.qber);
                let status = format!("{:?}", s.status);
                rows.push(row("alice", s.verdict_on_alice.r01, format!("{}:{status}", verdict(s.verdict_on_alice.accepted)), qber));
                rows.push(row("bob", s.verdict_on_bob.r01, format!("{}:{status}", verdict(s.verdict_on_bob.accepted)), qber));
            }
            Ok(rows)
        }
    }
}

/// Per-replicate rows followed by an aggregate row for each point and subject.
pub fn simulate_rows(config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let model = network(config)?;
    let points = grid(config);
    let reps = config.replicates;
    let per_task = par_map(points.len() * reps, |i| {
        one_replicate(config, &model, points[i / reps], session_seed(config.seed, i as u64))
    })?;
    let mut rows = Vec::new();
    for chunk in per_task.chunks(reps) {
        let mut subjects: Vec<String> = Vec::new();
        for (r, task_rows) in chunk.iter().enumerate() {
            for row in task_rows {
                if !subjects.contains(&row.subject) {
                    subjects.push(row.subject.clone());
                }
                rows.push(ResultRow {
                    replicate: Some(r),
                    ..row.clone()
                });
            }
        }
        for subject in subjects {
            let of_subject: Vec<&ResultRow> = chunk.iter().flatten().filter(|r| r.subject == subject).collect();
            let values: Vec<f64> = of_subject.iter().map(|r| r.r01).collect();
            let accepted = of_subject.iter().filter(|r| r.verdict.starts_with("accept")).count();
            let (mean, std) = mean_std(&values);
            rows.push(ResultRow {
                replicate: None,
                r01: mean,
                std,
                seed: config.seed,
                verdict: format!("{accepted}/{}", values.len()),
                qber: None,
                ..of_subject[0].clone()
            });
        }
    }
    Ok(rows)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<ResultRow>> {
    let rows = simulate_rows(config)?;
    write_rows(&config.output, &rows)?;
    Ok(rows)
}

/// `samples_per_class` legitimate and attacker sessions at the first grid
/// point, reduced to block-mean features. Sample `2k` is legitimate and
/// `2k + 1` an attacker, each with its own session seed.
pub fn generate_dataset(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let lambda = config.lambda;
    if !lambda.is_multiple_of(classifier::BLOCK_SIZE) {
        return Err(Error::Config(format!(
            "run.lambda = {lambda} is not a multiple of {}",
            classifier::BLOCK_SIZE
        )));
    }
    let d = config.distances_km[0];
    let mut params = config.hardware.clone();
    params.distance_km = d;
    let timing = build_schedule(lambda, config.wait_times()[0], d, &params)?;
    let samples = par_map(2 * config.samples_per_class, |i| {
        let mut rng = session_rng(config.seed, i as u64);
        let label = i % 2 == 0;
        let role = if label { Role::Legitimate } else { Role::Attacker(config.attack) };
        let key = GateChoiceKey::random(lambda, &mut rng);
        let t = run_session(&key, &timing, &params, role, &mut rng)?;
        Ok(Sample {
            features: preprocess(&t.matches)?,
            label,
        })
    })?;
    Dataset::new(samples, config.provenance())
}

fn train_config(config: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: config.epochs,
        ..TrainConfig::default()
    }
}

/// Generator for the split and training, separate from the session seeds.
fn training_rng(config: &RunConfig) -> ChaCha8Rng {
    session_rng(config.seed ^ 0x7472_6169_6e00_0000, 0)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: MlpModel,
    pub curve: classifier::LearningCurve,
    pub validation: classifier::EvalReport,
    pub weights_path: PathBuf,
}

/// Builds the dataset, trains the reference architecture with an 80/20 split
/// and writes `weights.txt`, `learning_curve.csv`, `roc.csv` and
/// `dataset.csv` under the output directory.
pub fn cmd_train_classifier(config: &RunConfig) -> Result<TrainSummary> {
    let data = generate_dataset(config)?;
    let mut rng = training_rng(config);
    let (train_set, validation_set) = data.split(TrainConfig::default().validation_fraction, &mut rng)?;
    let mut sizes = vec![config.lambda / classifier::BLOCK_SIZE];
    sizes.extend(DEFAULT_HIDDEN);
    sizes.push(1);
    let init = MlpModel::new(&sizes, &mut rng)?;
    let (model, curve) = classifier::train_split(&init, &train_set, &validation_set, &train_config(config), &mut rng)?;
    let validation = classifier::roc_and_auc(&model, &validation_set)?;

    create_dir(&config.output)?;
    let weights_path = config.output.join("weights.txt");
    save_weights(&model, &weights_path)?;
    write_learning_curve(&config.output.join("learning_curve.csv"), &curve)?;
    write_roc(&config.output.join("roc.csv"), &validation.roc_points)?;
    write_dataset(&config.output.join("dataset.csv"), &data)?;
    Ok(TrainSummary {
        model,
        curve,
        validation,
        weights_path,
    })
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub static_points: Vec<SweepPoint>,
    pub best_static: SweepPoint,
    pub dnn_frequency: f64,
    pub dnn_hidden: Vec<usize>,
    pub held_out: usize,
}

/// Static threshold sweep and the selected network, both scored on the same
/// held-out split.
pub fn compare_methods(config: &RunConfig) -> Result<CompareSummary> {
    let data = generate_dataset(config)?;
    let mut rng = training_rng(config);
    let (train_set, held_out) = data.split(TrainConfig::default().validation_fraction, &mut rng)?;
    let selection = hyperparameter_select(&default_candidates(), &train_set, &held_out, &train_config(config), config.seed)?;
    let dnn = classifier::evaluate(&selection.model, &held_out)?;

    let rate = |s: &Sample| s.features.iter().sum::<f64>() / s.features.len() as f64;
    let legit: Vec<f64> = held_out.samples.iter().filter(|s| s.label).map(rate).collect();
    let forged: Vec<f64> = held_out.samples.iter().filter(|s| !s.label).map(rate).collect();
    let static_points = static_sweep(&legit, &forged, config.lambda, &mu_grid(50, 100))?;
    let best_static = best_sweep_point(&static_points).ok_or(Error::Empty("threshold grid"))?;
    Ok(CompareSummary {
        static_points,
        best_static,
        dnn_frequency: dnn.accuracy,
        dnn_hidden: selection.candidates[selection.best].hidden.clone(),
        held_out: held_out.len(),
    })
}

/// Writes `compare.csv` (one `static` row per threshold, then `static_best`
/// and `dnn`) and `frequency_vs_mu.csv`.
pub fn cmd_compare_methods(config: &RunConfig) -> Result<CompareSummary> {
    let summary = compare_methods(config)?;
    create_dir(&config.output)?;
    output::write_compare(&config.output.join("compare.csv"), &summary)?;
    let points: Vec<PlotPoint> = summary
        .static_points
        .iter()
        .map(|p| PlotPoint {
            series: "static".into(),
            x: p.mu,
            y: p.frequency,
            yerr: 0.0,
        })
        .collect();
    write_plot(&config.output.join("frequency_vs_mu.csv"), &points)?;
    Ok(summary)
}

/// Writes `results.csv`, `r01_vs_storage_time.csv` (one series per
/// distance) and `r01_vs_distance.csv` (one series per waiting time).
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<(f64, f64, f64, f64)>> {
    let cfg = RunConfig {
        scheme: Scheme::UserServer,
        ..config.clone()
    };
    let rows = simulate_rows(&cfg)?;
    create_dir(&config.output)?;
    write_rows(&config.output.join("results.csv"), &rows)?;
    let agg: Vec<(f64, f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.replicate.is_none())
        .map(|r| (r.distance_km, r.wait_us, r.r01, r.std))
        .collect();
    let by_time: Vec<PlotPoint> = agg
        .iter()
        .map(|(d, t, m, s)| PlotPoint {
            series: format!("distance_km={d}"),
            x: *t,
            y: *m,
            yerr: *s,
        })
        .collect();
    write_plot(&config.output.join("r01_vs_storage_time.csv"), &by_time)?;
    let mut by_distance: Vec<PlotPoint> = agg
        .iter()
        .map(|(d, t, m, s)| PlotPoint {
            series: format!("wait_us={t}"),
            x: *d,
            y: *m,
            yerr: *s,
        })
        .collect();
    by_distance.sort_by(|a, b| a.series.cmp(&b.series).then(a.x.total_cmp(&b.x)));
    write_plot(&config.output.join("r01_vs_distance.csv"), &by_distance)?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(session_seed(1, 0), session_seed(1, 0));
        assert_ne!(session_seed(1, 0), session_seed(1, 1));
        assert_ne!(session_seed(1, 0), session_seed(2, 0));
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| session_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
    }

    #[test]
    fn noiseless_simulation_rows() {
        let mut cfg = RunConfig::parse("hardware.preset = noiseless\nrun.lambda = 50\nrun.replicates = 3\nrun.distances_km = 0,2").unwrap();
        cfg.mu = 1.0;
        let rows = simulate_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * (3 + 1));
        assert!(rows.iter().all(|r| r.r01 == 1.0 && r.std == 0.0));
        assert_eq!(rows[3].replicate, None);
        assert_eq!(rows[3].verdict, "3/3");
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = RunConfig::parse("run.lambda = 40\nrun.replicates = 2\nrun.distances_km = 1,5").unwrap();
        assert_eq!(simulate_rows(&cfg).unwrap(), simulate_rows(&cfg).unwrap());
    }

    #[test]
    fn dataset_needs_block_multiple() {
        let cfg = RunConfig::parse("run.lambda = 55\nrun.samples_per_class = 2").unwrap();
        assert!(matches!(generate_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn embedded_schemes_produce_both_parties() {
        for scheme in ["symmetric", "asymmetric"] {
            let cfg = RunConfig::parse(&format!(
                "hardware.preset = noiseless\nrun.scheme = {scheme}\nrun.lambda = 10\nrun.replicates = 2\nrun.data_slots = 50\nrun.mu = 1"
            ))
            .unwrap();
            let rows = simulate_rows(&cfg).unwrap();
            assert_eq!(rows.len(), 2 * 2 + 2);
            assert!(rows.iter().filter(|r| r.replicate.is_some()).all(|r| r.verdict == "accept:KeyEstablished"));
        }
    }
}
