use std::path::PathBuf;
use std::process::ExitCode;

use apsieve::pipeline::{run, RecordLevel, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "apsieve", version, about = "Sieve 7x(x^2 + 12r^2) = y^p over exponents and r")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run (or resume) the pipeline and write records, tables and a verdict.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Comma-separated case ids in 1..=12.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10,11,12")]
    cases: Vec<u8>,
    #[arg(long, default_value_t = 5)]
    p_min: u64,
    /// A prime bound or `auto` (the Mignotte bound at r_max).
    #[arg(long, default_value = "auto")]
    p_max: String,
    #[arg(long, default_value_t = 1)]
    r_min: u64,
    #[arg(long, default_value_t = 1_000_000)]
    r_max: u64,
    /// Largest k in the Germain primes q = 2kp + 1.
    #[arg(long, default_value_t = apsieve::germain::DEFAULT_K_MAX)]
    k_max: u64,
    /// Threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Continue from the checkpoints in `--out`.
    #[arg(long)]
    resume: bool,
    /// Write the Thue equations left after descent to this file.
    #[arg(long)]
    thue_export: Option<PathBuf>,
    /// `all` or `post-germain`.
    #[arg(long, default_value = "all")]
    records: RecordLevel,
}

fn config(a: RunArgs) -> Result<RunConfig, String> {
    let p_max = match a.p_max.as_str() {
        "auto" => None,
        s => Some(s.parse::<u64>().map_err(|_| format!("--p-max: expected a number or auto, got {s:?}"))?),
    };
    let mut cfg = RunConfig {
        cases: a.cases,
        p_min: a.p_min,
        p_max,
        r_min: a.r_min,
        r_max: a.r_max,
        k_max: a.k_max,
        out: a.out,
        resume: a.resume,
        thue_export: a.thue_export,
        records: a.records,
        ..RunConfig::default()
    };
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let Cmd::Run(args) = Cli::parse().cmd;
    let cfg = match config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(summary) => {
            print!("{}", summary.verdict.text);
            if summary.complete && summary.verdict.only_trivial {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
