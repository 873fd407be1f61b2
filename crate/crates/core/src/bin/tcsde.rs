use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcsde::config::{parse_config_as, ExperimentKind};
use tcsde::experiment::{run_experiment, write_atomic};

/// Simulation and stability verification for SDEs driven by time-changed Lévy noise.
#[derive(Parser)]
#[command(name = "tcsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and write paths.csv
    Simulate(RunArgs),
    /// Check a Lyapunov candidate against a stability theorem
    VerifyLyapunov(RunArgs),
    /// Monte Carlo moment and stay-probability estimates
    EstimateStability(RunArgs),
    /// Compare the direct scheme with the duality scheme
    CheckDuality(RunArgs),
    /// Certificate and stay probability for the first worked example
    #[command(name = "reproduce-example-1")]
    ReproduceExample1(RunArgs),
    /// Certificate and moment decay for the second worked example
    #[command(name = "reproduce-example-2")]
    ReproduceExample2(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// configuration file or a manifest.txt from an earlier run
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::VerifyLyapunov(a) => (ExperimentKind::VerifyLyapunov, a),
        Command::EstimateStability(a) => (ExperimentKind::EstimateStability, a),
        Command::CheckDuality(a) => (ExperimentKind::CheckDuality, a),
        Command::ReproduceExample1(a) => (ExperimentKind::ReproduceExample1, a),
        Command::ReproduceExample2(a) => (ExperimentKind::ReproduceExample2, a),
    };
    let mut cfg = match parse_config_as(&args.config, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            if let Some(dir) = &args.out {
                let record = format!(
                    "status=error\nkind={}\nexperiment={}\nmessage={}\n",
                    e.kind(),
                    kind.name(),
                    e.to_string().replace('\n', " | ")
                );
                let _ = write_atomic(dir, "error.txt", &record);
            }
            return ExitCode::from(1);
        }
    };
    if let Some(s) = args.seed {
        cfg.mc.seed = s;
    }
    if let Some(n) = args.paths {
        cfg.mc.paths = n;
    }
    if let Some(d) = args.out {
        cfg.output.dir = d;
    }
    cfg.output.svg |= args.svg;

    let outcome = run_experiment(&cfg);
    if outcome.status.code() == 1 {
        eprintln!("error: {}", outcome.summary);
    } else {
        println!("{}", outcome.summary);
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    ExitCode::from(outcome.status.code() as u8)
}
