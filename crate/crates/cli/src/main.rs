use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qpost_cli::config::{ExperimentConfig, Overrides, Task};
use qpost_cli::{resolve_workers, run, WORKERS_ENV};

/// Spike-and-slab quasi-posterior experiments.
#[derive(Parser, Debug)]
#[command(name = "qpost", version)]
struct Args {
    task: Task,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;
const VERIFY_FAILED: u8 = 3;

fn fail(e: qpost::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() {
        VALIDATION
    } else {
        RUNTIME
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let env = std::env::var(WORKERS_ENV).ok();
    let resolved = ExperimentConfig::load(&args.config).and_then(|cfg| {
        let workers = resolve_workers(args.workers, env.as_deref(), cfg.workers)?;
        cfg.resolve(Overrides {
            task: Some(args.task),
            seed: args.seed,
            out: args.out,
            workers,
        })
    });
    let (task, cfg) = match resolved {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match run(task, &cfg) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verify: at least one check failed, see report.json");
                ExitCode::from(VERIFY_FAILED)
            }
        }
        Err(e) => fail(e),
    }
}
