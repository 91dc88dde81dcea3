use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uniform_ext_cli::experiment;
use uniform_ext_cli::svg::{self, Figure};
use uniform_ext_cli::ExperimentConfig;

/// Thread count for the inner computations; unset uses all cores.
const THREADS_ENV: &str = "UNIFORM_EXT_THREADS";

#[derive(Parser)]
#[command(name = "uniform-ext", version, about = "Whitney coverings, Jones extensions and difference-norm experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Norm table, diagnostics and figures.
    Run { config: PathBuf },
    /// One SVG figure of the first domain at the last depth.
    Render {
        config: PathBuf,
        #[arg(long, value_parser = ["covering", "chain", "shadow"])]
        figure: String,
        /// Output file; defaults to `<output_dir>/<name>_<figure>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covering, chain, shadow and lemma diagnostics as JSON.
    Diagnose { config: PathBuf },
}

fn config_path(cmd: &Command) -> &PathBuf {
    match cmd {
        Command::Run { config } | Command::Diagnose { config } | Command::Render { config, .. } => config,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot configure {n} threads: {e}");
                    return ExitCode::from(1);
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cfg = match ExperimentConfig::load(config_path(&cli.command)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Run { .. } => experiment::run(&cfg),
        Command::Diagnose { .. } => experiment::run_diagnostics(&cfg).map(|_| ()),
        Command::Render { figure, out, .. } => {
            let fig = Figure::parse(figure).expect("clap restricts the figure names");
            match out {
                Some(path) => svg::render_figure(&cfg, fig).and_then(|text| {
                    std::fs::write(path, text).map_err(|e| experiment::Failure {
                        experiment: format!("render {}", fig.name()),
                        error: e.into(),
                    })
                }),
                None => svg::render_to_dir(&cfg, fig).map(|_| ()),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
