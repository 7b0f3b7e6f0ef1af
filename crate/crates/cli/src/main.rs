use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spectral_prox::harness::{self, ExperimentConfig, RateMetric};
use spectral_prox::polar_express::{fit_report, unit_grid, PolySchedule};
use spectral_prox::validation::{self, CheckOutcome};
use spectral_prox::Error;

#[derive(Parser)]
#[command(name = "sprox", version, about = "Proximal preconditioned gradient experiments and checks")]
struct Cli {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; overrides the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated horizons for `rates`
    #[arg(long, global = true, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Only print failures and errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateMode {
    Polyak,
    PolyakHeavy,
    Storm,
    Pe,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment in --config
    Run,
    /// Multi-horizon sweep and log-log rate estimate
    Rates {
        /// Preset used when no --config is given
        #[arg(long, value_enum, default_value = "polyak")]
        mode: RateMode,
        /// Repetitions per horizon (default: from the config or preset)
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Backward step against brute-force oracles
    ProxCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 10_000)]
        candidates: usize,
    },
    /// Polynomial schedule versus the κ-hyperbolic preconditioner, as CSV
    PolarFit {
        #[arg(long, default_value_t = 3e-4)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        kappa: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        /// Shipped schedule name or a path to a coefficient file
        #[arg(long, default_value = "polar_express")]
        schedule: String,
    },
    /// Conjugate calculus, majorization and fit invariants
    Validate {
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
}

enum Failure {
    Validation,
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigParse(_) | Error::InvalidConfig(_) | Error::InvalidSpec(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, Failure> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(_) => Failure::Config(e),
        other => Failure::from(other),
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run => {
            let cfg = load_config(cli)?
                .ok_or_else(|| Failure::Config(Error::InvalidConfig("`run` needs --config".into())))?;
            let res = harness::run_experiment(&cfg, cli.out.as_deref())?;
            if !cli.quiet {
                for (i, t) in res.traces.iter().enumerate() {
                    println!("run {i} seed {} mean_gap {:.6e}", t.seed, t.mean_gap());
                }
                println!("wrote {} and {}", res.trace_path.display(), res.summary_path.display());
            }
            Ok(())
        }
        Command::Rates { mode, repetitions } => {
            let (name, metric) = match mode {
                RateMode::Polyak => ("polyak", RateMetric::Gap),
                RateMode::PolyakHeavy => ("polyak-heavy", RateMetric::Gap),
                RateMode::Storm => ("storm", RateMetric::Gap),
                RateMode::Pe => ("pe", RateMetric::GradNorm),
            };
            let mut cfg = match load_config(cli)? {
                Some(c) => c,
                None => {
                    let mut c = ExperimentConfig::rate_preset(name)?;
                    if let Some(seed) = cli.seed {
                        c.seed = seed;
                    }
                    c
                }
            };
            if let Some(r) = repetitions {
                cfg.repetitions = *r;
            }
            let horizons = cli.horizons.clone().unwrap_or_else(harness::default_horizons);
            let sweep = harness::rate_sweep(&cfg, &horizons, metric)?;
            let mut text = String::from("horizon,mean\n");
            for s in &sweep.stats {
                text.push_str(&format!("{},{}\n", s.horizon, harness::fmt_float(s.mean)));
            }
            if let Some(path) = &cli.out {
                std::fs::write(path, &text).map_err(|e| Failure::Runtime(e.into()))?;
            } else if !cli.quiet {
                print!("{text}");
            }
            let e = &sweep.estimate;
            println!(
                "slope {:.6} intercept {:.6} r_squared {:.6} horizons {:?}",
                e.slope, e.intercept, e.r_squared, e.horizons
            );
            Ok(())
        }
        Command::ProxCheck { instances, candidates } => {
            let outcomes = validation::prox_suite(*instances, *candidates, cli.seed.unwrap_or(0))?;
            report(&outcomes, cli.quiet)
        }
        Command::PolarFit {
            eps,
            kappa,
            points,
            schedule,
        } => {
            let sched = match PolySchedule::by_name(schedule) {
                Ok(s) => s,
                Err(_) => PolySchedule::load(std::path::Path::new(schedule)).map_err(|e| match e {
                    Error::Io(_) => Failure::Config(e),
                    other => Failure::from(other),
                })?,
            };
            let fit = fit_report(&sched, *eps, *kappa, &unit_grid(*points)).map_err(|e| match e {
                Error::InvalidInput(_) => Failure::Config(Error::InvalidConfig(e.to_string())),
                other => Failure::from(other),
            })?;
            match &cli.out {
                Some(path) => {
                    let mut f = std::fs::File::create(path).map_err(|e| Failure::Runtime(e.into()))?;
                    harness::write_fit_csv(&mut f, &fit)?;
                }
                None => {
                    let mut buf = Vec::new();
                    harness::write_fit_csv(&mut buf, &fit)?;
                    // a closed pipe (e.g. `| head`) is not an error
                    let _ = std::io::stdout().lock().write_all(&buf);
                }
            }
            let msg = format!(
                "max deviation: preconditioner {:.6e}, sign {:.6e}",
                fit.max_dev_vs_preconditioner, fit.max_dev_vs_sign
            );
            if !cli.quiet {
                eprintln!("{msg}");
            }
            Ok(())
        }
        Command::Validate { points } => {
            let outcomes = validation::invariant_suite(*points, cli.seed.unwrap_or(0))?;
            report(&outcomes, cli.quiet)
        }
    }
}

fn report(outcomes: &[CheckOutcome], quiet: bool) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    for o in outcomes {
        if !quiet || !o.passed {
            let _ = writeln!(
                out,
                "{} {} ({} cases, worst {:.3e}){}",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.cases,
                o.worst,
                if o.passed || o.detail.is_empty() { String::new() } else { format!(": {}", o.detail) }
            );
        }
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}
