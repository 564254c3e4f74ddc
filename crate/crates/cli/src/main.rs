//! Command-line front end for the overlapped-speech dataset toolkit.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or config), 2 data error
//! (unreadable or inconsistent inputs), 3 internal error.

mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use overmix::{Error, Result};

use commands::Globals;
use config::Config;

#[derive(Debug, Parser)]
#[command(name = "overmix", version, about = "Synthetic overlapped-speech dataset toolkit")]
struct Cli {
    /// Config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; all randomness derives from it via per-stage sub-streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-file stages (pairing is always sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Resample source audio to this rate when loading.
    #[arg(long, global = true)]
    sample_rate: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut single-speaker segments from annotated or dual-channel recordings.
    Segment(commands::SegmentArgs),
    /// Score segments against speaker profiles and drop mislabeled ones.
    Verify(commands::VerifyArgs),
    /// Generate mixture lists (and speaker splits) from verified segments.
    Pair(commands::PairArgs),
    /// Render mixture lists into mixture and stem WAV files.
    Mix(commands::MixArgs),
    /// Apply oracle or precomputed masks to produce source estimates.
    Separate(commands::SeparateArgs),
    /// Score estimates against references with SI-SDR and SI-SDR improvement.
    Eval(commands::EvalArgs),
    /// Summarize a segment corpus or mixture list.
    Stats(commands::StatsArgs),
    /// Rewrite a mixture list onto a parallel channel.
    Retarget(commands::RetargetArgs),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::SizeLimit(_, _) => 1,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    let globals = Globals {
        seed: cli.seed.or(cfg.u64("global", "seed")?).unwrap_or(0),
        jobs: cli.jobs.or(cfg.usize("global", "jobs")?),
        sample_rate_hz: cli.sample_rate.or(cfg.u32("global", "sample_rate_hz")?),
    };
    if let Some(jobs) = globals.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Segment(args) => commands::run_segment(args, &globals, &cfg),
        Command::Verify(args) => commands::run_verify(args, &globals, &cfg),
        Command::Pair(args) => commands::run_pair(args, &globals, &cfg),
        Command::Mix(args) => commands::run_mix(args, &globals, &cfg),
        Command::Separate(args) => commands::run_separate(args, &globals, &cfg),
        Command::Eval(args) => commands::run_eval(args, &globals, &cfg),
        Command::Stats(args) => commands::run_stats(args, &globals, &cfg),
        Command::Retarget(args) => commands::run_retarget(args, &globals, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("internal error (panic)");
            ExitCode::from(3)
        }
    }
}
