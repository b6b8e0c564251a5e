use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use isac_cli::{report, run, sweep, Pipeline, RunOptions, SweepParam};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "isac", version, about = "Run ISAC sensing pipelines on scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// ser, dts, omr, net or e2e.
    #[arg(long, default_value = "e2e")]
    pipeline: Pipeline,
    /// Number of DTS frames (overrides the scenario).
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            pipeline: self.pipeline,
            scenario: self.scenario.clone(),
            seed: self.seed,
            out_dir: self.out.clone(),
            frames: self.frames,
            verbose: self.verbose,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline and write its artifacts and manifest.
    Run(RunArgs),
    /// Score the artifacts of a run directory against its ground truth.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun a pipeline over a list of parameter values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// snr, pfa or tau.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn configure_threads() -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("ISAC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|e| anyhow::anyhow!("ISAC_THREADS=`{v}`: {e}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(a) => run(&a.options()).map(|m| {
            for e in &m.artifacts {
                println!("{}  {}", e.sha256, e.name);
            }
        }),
        Command::Report { out } => report(&out).map(|t| {
            for r in &t.rows {
                println!("{:<4} {:<20} {}", r[0], r[1], r[2]);
            }
        }),
        Command::Sweep { run, param, values } => sweep(&run.options(), param, &values).map(|t| {
            println!("{} rows written to {}", t.len(), run.out.join("sweep.csv").display());
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
