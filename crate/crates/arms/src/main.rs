use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use arms::config::{ReferenceSpec, Spread};
use arms::oracle::{plain_ams_full_order, PlainAms};
use arms::runner::load_fixture;
use arms::{presets, run_experiment, validate_config, workers_from_env, ExperimentSpec};
use arms_core::surrogates::{toy_pstar_oracle, ThermalBlockModel, ThermalTail, Toy1DModel};
use arms_core::{metrics, RngStream};
use clap::{Parser, Subcommand};

/// Published value of the toy probability, shown next to the derived one.
const TOY_REFERENCE_VALUE: f64 = 2.18e-8;

#[derive(Parser)]
#[command(
    name = "arms",
    version,
    about = "Adaptive reduced multilevel splitting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every combination and replicate of a spec file.
    Run {
        spec: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of replicates.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Check a spec file and print warnings.
    Validate { spec: PathBuf },
    /// Print an embedded preset as a spec file.
    Preset { name: String },
    /// Ground-truth probabilities.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Quadrature value of the toy rare-event probability.
    #[command(name = "toy1d-pstar")]
    Toy1dPstar {
        #[arg(long, default_value_t = 1.5)]
        mu_log: f64,
        #[arg(long, default_value_t = 1.5)]
        spread: f64,
        /// Read `spread` as a variance instead of a standard deviation.
        #[arg(long)]
        variance: bool,
        #[arg(long, default_value_t = 90.0)]
        l_max: f64,
    },
    /// Enumerated probability of a tabular fixture.
    Tabular { fixture: PathBuf },
    /// Plain splitting on the full-order thermal model.
    #[command(name = "thermal-ams")]
    ThermalAms {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long)]
        l_max: f64,
        #[arg(long, default_value_t = 1000)]
        n_particles: usize,
        #[arg(long, default_value_t = 0.3)]
        kill_fraction: f64,
        #[arg(long, default_value_t = 20)]
        t_mutations: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Conditional Monte Carlo probability for the thermal block, or the
    /// level matching a target probability.
    Thermal {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 1.5)]
        mu_log: f64,
        #[arg(long, default_value_t = 1.5)]
        spread: f64,
        #[arg(long)]
        variance: bool,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Report the probability of this level.
        #[arg(long, conflicts_with = "target")]
        l_max: Option<f64>,
        /// Report the level with this probability.
        #[arg(long)]
        target: Option<f64>,
    },
}

fn load_spec(path: &PathBuf) -> Result<ExperimentSpec, ExitCode> {
    if let Some(name) = path.to_str().and_then(|s| s.strip_prefix("preset:")) {
        return presets::preset(name).ok_or_else(|| {
            eprintln!(
                "unknown preset {name}; available: {}",
                presets::NAMES.join(", ")
            );
            ExitCode::from(1)
        });
    }
    ExperimentSpec::load(path).map_err(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            out,
            replicates,
        } => {
            let mut spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            if let Some(o) = out {
                spec.output_dir = Some(o);
            }
            if let Some(r) = replicates {
                spec.replicates = r;
            }
            let v = validate_config(&spec);
            for w in &v.warnings {
                log::warn!("{w}");
            }
            if !v.is_ok() {
                for e in &v.errors {
                    eprintln!("error: {e}");
                }
                return ExitCode::from(1);
            }
            match run_experiment(&spec, workers_from_env()) {
                Ok(0) => {
                    println!("wrote {}", spec.output_dir().display());
                    ExitCode::SUCCESS
                }
                Ok(failed) => {
                    eprintln!("{failed} run(s) failed; see summary.json");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { spec } => {
            let spec = match load_spec(&spec) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let v = validate_config(&spec);
            for w in &v.warnings {
                println!("warning: {w}");
            }
            for e in &v.errors {
                println!("error: {e}");
            }
            if v.is_ok() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Preset { name } => match presets::preset_text(&name) {
            Some(t) => {
                print!("{}", t.trim_start());
                ExitCode::SUCCESS
            }
            None => {
                eprintln!(
                    "unknown preset {name}; available: {}",
                    presets::NAMES.join(", ")
                );
                ExitCode::from(1)
            }
        },
        Command::Oracle(OracleCommand::Toy1dPstar {
            mu_log,
            spread,
            variance,
            l_max,
        }) => {
            let model = Toy1DModel {
                l_max,
                ..Toy1DModel::default()
            };
            let reference = ReferenceSpec {
                mu_log,
                spread,
                spread_is: if variance {
                    Spread::Variance
                } else {
                    Spread::Std
                },
            };
            let result = reference
                .build(1)
                .and_then(|d| toy_pstar_oracle(&model, &d));
            match result {
                Ok(p) => {
                    println!("p_star = {p:.6e}");
                    println!(
                        "published value {TOY_REFERENCE_VALUE:.2e} (ratio {:.3e})",
                        p / TOY_REFERENCE_VALUE
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Oracle(OracleCommand::Thermal {
            d,
            n,
            mu_log,
            spread,
            variance,
            samples,
            seed,
            l_max,
            target,
        }) => {
            let reference = ReferenceSpec {
                mu_log,
                spread,
                spread_is: if variance {
                    Spread::Variance
                } else {
                    Spread::Std
                },
            };
            let result = ThermalBlockModel::new(d, n).and_then(|m| {
                let dist = reference.build(m.q())?;
                ThermalTail::sample(&m, &dist, samples, &mut RngStream::new(seed, 0))
            });
            let tail = match result {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(l) = l_max {
                let (p, se) = tail.probability(l);
                println!("p_star = {p:.6e} (se {se:.2e})");
            }
            if let Some(p) = target {
                match tail.level_for(p) {
                    Ok(l) => println!("l_max = {l:.9e} for p_star = {p:.3e}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Oracle(OracleCommand::ThermalAms {
            d,
            n,
            l_max,
            n_particles,
            kill_fraction,
            t_mutations,
            runs,
            seed,
        }) => {
            let cfg = PlainAms {
                n_particles,
                kill_fraction,
                t_mutations,
                l_max,
            };
            let result = ThermalBlockModel::new(d, n)
                .map_err(anyhow::Error::from)
                .and_then(|m| {
                    let dist = ReferenceSpec::default().build(m.q())?;
                    plain_ams_full_order(Arc::new(m), &dist, &cfg, runs, seed, workers_from_env())
                });
            match result {
                Ok(out) => {
                    for (r, run) in out.iter().enumerate() {
                        println!(
                            "run {r}: p_hat = {:.6e}, ln z = {:.5}, solves = {}",
                            run.p_hat, run.ln_z, run.solves
                        );
                    }
                    let p: Vec<f64> = out.iter().map(|r| r.p_hat).collect();
                    let mean = metrics::mean(&p);
                    let se = (metrics::variance(&p) / p.len() as f64).sqrt();
                    println!("mean p_hat = {mean:.6e} (se {se:.2e})");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Oracle(OracleCommand::Tabular { fixture }) => match load_fixture(&fixture) {
            Ok(p) => {
                println!("p_star = {:.12e}", p.p_star());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
