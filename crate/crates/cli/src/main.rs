use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfota::accounting::{cheaper_level, crossover_rounds, fronthaul_scalars, Cheaper, CooperationLevel};
use cfota::runner::{
    emit_csv, fronthaul_dims, load_config, run_fl_training, run_mse_sweep, write_csv, ResultRow, RunOptions,
    RunnerError, ScenarioConfig, DATA_DIR_ENV,
};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cfota", version, about = "Multi-task over-the-air FL in cell-free massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Weighted sum-MSE against maximum transmit power.
    MseSweep(RunArgs),
    /// Multi-task FL training with over-the-air aggregation.
    Train(RunArgs),
    /// Fronthaul scalars per coherence block for each cooperation level.
    Fronthaul {
        #[command(flatten)]
        common: RunArgs,
        /// Combiner refreshes per coherence block, for the Level 2 / Level 3 comparison.
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Parse and validate a scenario file without running it.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario TOML file; built-in defaults when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Base directory for relative dataset paths.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

struct Failure {
    class: &'static str,
    message: String,
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        Self {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

impl RunArgs {
    fn scenario(&self) -> Result<ScenarioConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p).map_err(RunnerError::from)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            data_dir: self.data_dir.clone(),
        }
    }
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        class: "IoError",
        message: e.to_string(),
    }
}

fn emit(rows: &[ResultRow], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => emit_csv(rows, path).map_err(io_failure),
        None => write_csv(rows, std::io::stdout().lock()).map_err(io_failure),
    }
}

fn fronthaul_table(cfg: &ScenarioConfig, rounds: Option<u64>) -> String {
    let d = fronthaul_dims(cfg);
    let mut text = String::from("level,pilot_data_scalars,combiner_scalars,statistics_scalars\r\n");
    for level in [CooperationLevel::Level1, CooperationLevel::Level2, CooperationLevel::Level3] {
        let r = fronthaul_scalars(level, &d);
        text += &format!(
            "{},{},{},{}\r\n",
            level.number(),
            r.pilot_data_scalars,
            r.combiner_scalars,
            r.statistics_display()
        );
    }
    if let Some(c) = crossover_rounds(d.tau_u, d.antennas, d.groups) {
        text += &format!("# crossover rounds {c}\r\n");
    }
    if let Some(c) = rounds {
        let verdict = match cheaper_level(d.tau_u, d.antennas, d.groups, c) {
            Cheaper::Level2 => "level2",
            Cheaper::Level3 => "level3",
            Cheaper::Tie => "tie",
        };
        text += &format!("# cheaper at {c} rounds: {verdict}\r\n");
    }
    text
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::MseSweep(args) => {
            let cfg = args.scenario()?;
            let rows = run_mse_sweep(&cfg, args.threads)?;
            emit(&rows, cfg.output.as_deref())
        }
        Command::Train(args) => {
            let cfg = args.scenario()?;
            let rows = run_fl_training(&cfg, &args.options())?;
            emit(&rows, cfg.output.as_deref())
        }
        Command::Fronthaul { common, rounds } => {
            let cfg = common.scenario()?;
            let text = fronthaul_table(&cfg, rounds);
            match &cfg.output {
                Some(path) => std::fs::write(path, text).map_err(io_failure),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(io_failure),
            }
        }
        Command::ValidateConfig { config } => {
            load_config(&config).map_err(RunnerError::from)?;
            println!("ok");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}: {}", f.class, f.message);
            ExitCode::FAILURE
        }
    }
}
