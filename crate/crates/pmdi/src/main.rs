use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmdi::config::{ConfigError, Preset, RawConfig, RunConfig};
use pmdi::output::{self, Series};
use pmdi::run;

/// Asymptotic key rates and Monte Carlo checks for fully passive MDI-QKD.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Detector scenario.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Distances in km: start:stop:step, a comma list or one value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    distances: Option<String>,
    /// Classified pulse pairs for `verify`.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Optimize the free parameters at every distance.
    #[arg(long, global = true)]
    optimize: bool,
    /// Write the main output here instead of stdout (`verify`: the raw tally CSV).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rate-vs-distance plot (`sweep`).
    #[arg(long, global = true)]
    svg: Option<PathBuf>,
    /// Directory for the decoy programs in LP format (`rate`).
    #[arg(long, global = true)]
    lp_dump: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Passive and active rates at the first distance, as key=value lines.
    Rate,
    /// CSV of rates and bounds over the distances.
    Sweep,
    /// Optimized parameters at the first distance.
    Optimize,
    /// Monte Carlo against the analytic gains; exit status 1 if any cell is flagged.
    Verify,
    /// CSV of the active three-intensity baseline over the distances.
    Baseline,
}

enum Failure {
    Config(ConfigError),
    Model(pmdi_core::Error),
    Io(PathBuf, std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<pmdi_core::Error> for Failure {
    fn from(e: pmdi_core::Error) -> Self {
        Failure::Model(e)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::read(path)?,
        None => RawConfig::default(),
    };
    if let Some(p) = cli.preset {
        raw.set("preset", p.to_string())?;
    }
    if let Some(d) = &cli.distances {
        raw.set("distances", d.clone())?;
    }
    if let Some(t) = cli.trials {
        raw.set("trials", t.to_string())?;
    }
    if let Some(s) = cli.seed {
        raw.set("seed", s.to_string())?;
    }
    raw.build()
}

/// Main text goes to `--out` when given, else stdout.
fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load(cli)?;
    let first = cfg.distances.first().copied().unwrap_or(0.0);
    match cli.command {
        Command::Rate => {
            let (passive, protocol) = run::passive_at(&cfg, first, cli.optimize)?;
            let (active, mu) = run::active_at(&cfg, first, cli.optimize)?;
            let mut text = format!("preset={}\ndistance_km={}\n", cfg.preset, output::sci(first));
            text.push_str(&output::key_values("passive_", &passive));
            text.push_str(&output::key_values("active_", &active));
            for (k, v) in [("active_signal", mu.signal), ("active_decoy", mu.decoy), ("active_weak", mu.weak)] {
                text.push_str(&format!("{k}={}\n", output::sci(v)));
            }
            if let Some(dir) = &cli.lp_dump {
                fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.clone(), e))?;
                for (name, lp) in run::passive_programs(&protocol)? {
                    write(&dir.join(format!("{name}.lp")), &output::lp_text(&lp))?;
                }
            }
            emit(cli, &text)?;
        }
        Command::Sweep => {
            let rows = run::sweep(&cfg, cli.optimize)?;
            emit(cli, &output::sweep_csv(&rows))?;
            if let Some(path) = &cli.svg {
                let series = [
                    Series {
                        label: "passive",
                        color: "#1f77b4",
                        points: rows.iter().map(|r| (r.distance, r.passive.rate)).collect(),
                    },
                    Series { label: "active", color: "#d62728", points: rows.iter().map(|r| (r.distance, r.active_rate)).collect() },
                ];
                let title = format!("Key rate ({} detectors)", cfg.preset);
                write(path, &output::svg_plot(&title, "distance (km)", "key rate (bits per pulse pair)", &series))?;
            }
        }
        Command::Optimize => {
            let protocol = cfg.at_distance(first)?;
            let mut text = format!("distance_km={}\n", output::sci(first));
            for (name, which) in [("passive", pmdi_core::keyrate::Protocol::Passive), ("active", pmdi_core::keyrate::Protocol::Active)] {
                let o = pmdi_core::keyrate::optimize_rate(&protocol, first, which, &cfg.optimize)?;
                text.push_str(&format!("[{name}]\n"));
                text.push_str(&run::optimized_parameters(&o));
                text.push_str(&output::key_values("", &o.result));
            }
            emit(cli, &text)?;
        }
        Command::Verify => {
            let v = run::verify(&cfg)?;
            let flagged = v.comparison.flagged().count();
            print!("{}", output::comparison_table(&v.comparison));
            println!(
                "# trials={} acceptance_rate={} max_abs_z={} flagged={flagged}",
                v.tally.classified,
                output::sci(v.tally.acceptance_rate()),
                output::sci(v.comparison.max_abs_z()),
            );
            if let Some(path) = &cli.out {
                write(path, &output::tally_csv(&v.tally))?;
            }
            return Ok(flagged == 0);
        }
        Command::Baseline => emit(cli, &run::baseline_csv(&cfg, cli.optimize)?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Io(path, e)) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(3)
        }
    }
}
