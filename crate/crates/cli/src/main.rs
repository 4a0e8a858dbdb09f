//! `dsic`: run the cancellation experiments and write CSV results.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dsic_core::experiments::{
    optimal_order, run_bound_check, run_iq_sweep, run_mimo_sweep, run_order_sweep, run_pilot_compare,
    run_pilot_length_sweep, run_select_pilot, ExperimentConfig, ExperimentKind, Manifest, Profile, ResultTable,
};
use dsic_core::pilot::write_ensemble_csv;
use dsic_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "dsic", version, about = "Digital self-interference cancellation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file whose keys override the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,

    /// Number of Monte-Carlo trials (overrides the config file).
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// RSI versus canceller order for several pilot kinds.
    OrderSweep,
    /// Optimized Gaussian and chi-square pilots versus pilot length.
    PilotLength,
    /// All pilot kinds at one order.
    PilotCompare,
    /// Order sweep per Tx antenna count.
    Mimo,
    /// PH versus PH+IQ cancellers across image rejection ratios.
    Iq,
    /// Verify the estimation bounds; exits with 3 on any violation.
    BoundCheck,
    /// Pick the best pilot of an ensemble.
    SelectPilot,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Self::OrderSweep => ExperimentKind::OrderSweep,
            Self::PilotLength => ExperimentKind::PilotLengthSweep,
            Self::PilotCompare => ExperimentKind::PilotCompare,
            Self::Mimo => ExperimentKind::MimoSweep,
            Self::Iq => ExperimentKind::IqSweep,
            Self::BoundCheck => ExperimentKind::BoundCheck,
            Self::SelectPilot => ExperimentKind::SelectPilot,
        }
    }
}

fn build_config(cli: &Cli) -> dsic_core::Result<ExperimentConfig> {
    let profile = match cli.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let kind = cli.command.kind();
    let mut cfg = ExperimentConfig::profile(profile, kind);
    if let Some(path) = &cli.config {
        cfg = cfg.load_over(path)?;
        if cfg.experiment != kind {
            return Err(Error::Config(format!(
                "config file is for {} but the subcommand runs {}",
                cfg.experiment.name(),
                kind.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_table(dir: &Path, table: &ResultTable, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let name = format!("{}.csv", table.experiment);
    table.write_csv(create(dir, &name)?)?;
    outputs.push(name);
    Ok(())
}

/// Runs the experiment; returns whether every invariant held.
fn run(cfg: &ExperimentConfig, command: Command, dir: &Path) -> anyhow::Result<bool> {
    let mut outputs = Vec::new();
    let mut ok = true;
    match command {
        Command::OrderSweep => write_table(dir, &run_order_sweep(cfg)?, &mut outputs)?,
        Command::PilotLength => write_table(dir, &run_pilot_length_sweep(cfg)?, &mut outputs)?,
        Command::PilotCompare => write_table(dir, &run_pilot_compare(cfg)?, &mut outputs)?,
        Command::Iq => write_table(dir, &run_iq_sweep(cfg)?, &mut outputs)?,
        Command::Mimo => {
            let table = run_mimo_sweep(cfg)?;
            write_table(dir, &table, &mut outputs)?;
            let name = "mimo_optimal_order.csv";
            let mut w = csv::Writer::from_writer(create(dir, name)?);
            w.write_record(["antennas", "optimal_order"])?;
            for m in &cfg.antennas {
                let p = optimal_order(&table, &format!("m{m}")).context("empty MIMO series")?;
                w.write_record([m.to_string(), p.to_string()])?;
            }
            w.flush()?;
            outputs.push(name.into());
        }
        Command::BoundCheck => {
            let report = run_bound_check(cfg)?;
            report.write_csv(create(dir, "bound_check.csv")?)?;
            outputs.push("bound_check.csv".into());
            let mut w = csv::Writer::from_writer(create(dir, "bias_trend.csv")?);
            for p in &report.bias {
                w.serialize(p)?;
            }
            w.flush()?;
            outputs.push("bias_trend.csv".into());
            for row in report.rows.iter().filter(|r| !r.passed) {
                eprintln!(
                    "invariant violated: {} ({} of {} instances, worst {:.3e}, threshold {:.3e})",
                    row.check, row.violations, row.instances, row.worst_value, row.threshold
                );
            }
            ok = report.all_passed();
        }
        Command::SelectPilot => {
            let (best, diagnostics) = run_select_pilot(cfg)?;
            write_ensemble_csv(&diagnostics, create(dir, "select_pilot.csv")?)?;
            best.sequence.write_csv(create(dir, "pilot.csv")?)?;
            outputs.push("select_pilot.csv".into());
            outputs.push("pilot.csv".into());
            eprintln!(
                "selected candidate {} (criterion {:.6e}, PAPR {:.2} dB)",
                best.ensemble_index, best.criterion_value, best.papr_db
            );
        }
    }
    Manifest::new(cfg, outputs)?.write(dir)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::FAILURE;
    }
    match run(&cfg, cli.command, &cli.out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INVARIANT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
