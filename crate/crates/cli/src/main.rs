use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pvmi_core::experiment::{self, report, CellStatus, ExperimentConfig};
use pvmi_core::imputation::{complete_series, fit_sampler, ImputationMode, KChoice};
use pvmi_core::missingness::{inject_missing, MissingSpec};
use pvmi_core::rng;
use pvmi_core::synth::SynthSpec;
use pvmi_core::timeseries::HourlySeries;

#[derive(Parser)]
#[command(name = "pvmi", version, about = "Multiple-imputation prediction intervals for hourly PV power")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic PV series as CSV.
    Synth {
        /// JSON `SynthSpec`; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove power observations according to a missingness spec.
    Inject {
        /// Input series CSV.
        input: PathBuf,
        /// JSON `MissingSpec`.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of a target-fraction spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the removed values as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fill the missing power of a series from its own observed hours.
    Impute {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Stochastic)]
        mode: Mode,
        /// Neighbour count, or `auto` for leave-one-out selection.
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Round index; each round uses its own random stream.
        #[arg(long, default_value_t = 1)]
        round: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from the per-cell CSVs of a finished run.
    Report {
        /// Run output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Stochastic,
}

fn read_series(path: &Path) -> Result<HourlySeries> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    HourlySeries::parse_csv(io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => report::write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn parse_k(s: &str) -> Result<KChoice> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KChoice::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(KChoice::Fixed(k)),
        _ => bail!("--k must be a positive integer or `auto`, got `{s}`"),
    }
}

fn run_experiment(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let base = config.parent().filter(|p| !p.as_os_str().is_empty());
    let (summary, dir) = experiment::run(&cfg, base)?;
    let mut failed = 0;
    println!("{:<32} {:>9} {:>8} {:>6}", "cell", "coverage", "nrmse", "n");
    for cell in &summary.cells {
        match &cell.status {
            CellStatus::Ok { report, .. } => {
                println!("{:<32} {:>9.4} {:>8.4} {:>6}", cell.id, report.coverage, report.nrmse, report.n_evaluated)
            }
            CellStatus::Failed { error } => {
                failed += 1;
                println!("{:<32} FAILED: {error}", cell.id);
            }
        }
    }
    eprintln!("wrote {}", dir.display());
    if failed > 0 {
        bail!("{failed} of {} cells failed", summary.cells.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { config, days, seed, out } => {
            let mut spec: SynthSpec = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SynthSpec::default(),
            };
            if let Some(d) = days {
                spec.days = d;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            emit(out.as_deref(), &spec.generate()?.to_csv_string())
        }
        Command::Inject { input, config, seed, out, truth } => {
            let series = read_series(&input)?;
            let mut spec: MissingSpec = serde_json::from_str(&fs::read_to_string(&config)?)
                .with_context(|| format!("parsing {}", config.display()))?;
            if let Some(s) = seed {
                spec = spec.reseeded(s);
            }
            let (masked, removed) = inject_missing(&series, &spec)?;
            if let Some(t) = truth {
                emit(Some(&t), &serde_json::to_string_pretty(&removed)?)?;
            }
            emit(out.as_deref(), &masked.to_csv_string())
        }
        Command::Impute { input, mode, k, seed, round, out } => {
            let series = read_series(&input)?;
            let sampler = fit_sampler(&series, parse_k(&k)?)?;
            let mode = match mode {
                Mode::Single => ImputationMode::Single,
                Mode::Stochastic => ImputationMode::Stochastic,
            };
            let mut r = rng::stream(seed, round);
            eprintln!("k = {}", sampler.k());
            emit(out.as_deref(), &complete_series(&series, &sampler, mode, &mut r).to_csv_string())
        }
        Command::Run { config, seed, out } => run_experiment(&config, seed, out),
        Command::Report { out, json } => {
            let cells = report::aggregate(&out)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&cells)?);
            } else {
                println!("{:<32} {:>9} {:>8} {:>6} {:>9}", "cell", "coverage", "nrmse", "n", "width");
                for c in cells {
                    println!("{:<32} {:>9.4} {:>8.4} {:>6} {:>9.4}", c.id, c.coverage, c.nrmse, c.n_evaluated, c.mean_width);
                }
            }
            Ok(())
        }
    }
}
