use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qauth_core::experiment::{self, parse_list, RunConfig};
use qauth_core::Error;

#[derive(Parser)]
#[command(name = "qauth", version, about = "Entanglement-assisted authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run sessions over the distance/waiting-time grid and write one CSV.
    Simulate(Common),
    /// Build a labelled dataset, train the classifier and write its artifacts.
    TrainClassifier(Common),
    /// Compare the static threshold sweep with the selected network.
    CompareMethods(Common),
    /// r01 against waiting time and distance, as plot-ready data files.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<usize>,
    /// Comma-separated distances in km
    #[arg(long, value_name = "LIST")]
    distance_km: Option<String>,
    /// Comma-separated waiting times in µs
    #[arg(long, value_name = "LIST")]
    wait_us: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// user_server, symmetric or asymmetric
    #[arg(long, value_name = "NAME")]
    scheme: Option<String>,
    /// Simulate the attacker instead of the legitimate party
    #[arg(long)]
    attacker: bool,
    /// Output file (simulate) or directory (other commands)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(d) = &self.distance_km {
            cfg.distances_km = parse_list("--distance-km", d)?;
        }
        if let Some(t) = &self.wait_us {
            cfg.wait_us = parse_list("--wait-us", t)?;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(s) = &self.scheme {
            cfg.scheme = s.parse()?;
        }
        if self.attacker {
            cfg.attacker = true;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let rows = experiment::cmd_simulate(&cfg)?;
            for r in rows.iter().filter(|r| r.replicate.is_none()) {
                println!(
                    "{} {} d={} km T={} us: r01 = {:.4} ± {:.4} ({})",
                    r.scheme, r.subject, r.distance_km, r.wait_us, r.r01, r.std, r.verdict
                );
            }
            println!("wrote {}", cfg.output.display());
        }
        Command::TrainClassifier(c) => {
            let cfg = c.load()?;
            let s = experiment::cmd_train_classifier(&cfg)?;
            println!(
                "validation accuracy {:.4}, cross-entropy {:.4}, AUC {:.4}",
                s.validation.accuracy, s.validation.cross_entropy, s.validation.auc
            );
            println!("wrote {}", s.weights_path.display());
        }
        Command::CompareMethods(c) => {
            let cfg = c.load()?;
            let s = experiment::cmd_compare_methods(&cfg)?;
            println!(
                "static best: mu = {:.2}, frequency {:.4}{}",
                s.best_static.mu,
                s.best_static.frequency,
                if s.best_static.vacuous { " (below the meaningful threshold)" } else { "" }
            );
            println!("dnn {:?}: frequency {:.4}", s.dnn_hidden, s.dnn_frequency);
            println!("wrote {}", cfg.output.display());
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let agg = experiment::cmd_sweep(&cfg)?;
            for (d, t, m, s) in agg {
                println!("d={d} km T={t} us: r01 = {m:.4} ± {s:.4}");
            }
            println!("wrote {}", cfg.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
