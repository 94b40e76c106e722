//! `roughflow`: run experiments described by INI configs.
//!
//! Errors go to stderr as tab-separated lines
//! `error<TAB>code<TAB>field<TAB>message`, one per problem.

mod config;
mod drift_expr;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{parse_config, ExperimentConfig, FieldError};

#[derive(Parser)]
#[command(name = "roughflow", version, about = "Experiments on ODEs perturbed by rough fractional noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `experiment.out`, then `runs/<kind>-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the drift registry.
    ListDrifts,
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn report(code: &str, field: &str, message: &str) {
    let clean = |s: &str| s.replace(['\t', '\n'], " ");
    eprintln!("error\t{code}\t{}\t{}", clean(field), clean(message));
}

fn core_code(e: &roughflow::Error) -> &'static str {
    use roughflow::Error::*;
    match e {
        Domain(_) => "domain",
        Grid(_) => "grid",
        Dimension(_) => "dimension",
        NotPositiveDefinite(_) => "not-positive-definite",
        NegativeEigenvalue(_) => "negative-eigenvalue",
        NotSmooth(_) => "not-smooth",
        Cfl(_) => "cfl",
        SupportEscape(_) => "support-escape",
        DegenerateFit(_) => "degenerate-fit",
        SizeGuard(_) => "size-guard",
        Parse(_) => "parse",
        NonConvergence { .. } => "non-convergence",
        Io(_) => "io",
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        report("io", &path.display().to_string(), &e.to_string());
        ExitCode::from(2)
    })?;
    parse_config(&text).map_err(|errs: Vec<FieldError>| {
        for e in &errs {
            report("config", &e.field, &e.message);
        }
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListDrifts => {
            for e in drift_expr::REGISTRY {
                println!("{:<13}{:<28}{}", e.name, e.signature, e.doc);
            }
            println!("\nCombine with '+' and scalar factors, e.g. `sign + 0.5*bump(1,0,0.3)`;");
            println!("[drift] mollify = <level> mollifies the whole expression.");
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("ok\t{}", cfg.kind);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, seed, out, threads } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if let Some(k) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    report("threads", "--threads", &e.to_string());
                    return ExitCode::from(2);
                }
            }
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.kind, cfg.seed)));
            let start = Instant::now();
            match run::run(&cfg, &dir) {
                Ok(files) => {
                    let secs = start.elapsed().as_secs_f64();
                    // kept apart from the manifest so that reruns stay byte-identical
                    if let Err(e) = std::fs::write(dir.join("timing.txt"), format!("wall_seconds = {secs:.3}\n")) {
                        report("io", "timing.txt", &e.to_string());
                        return ExitCode::FAILURE;
                    }
                    println!("{}: {} files in {} ({secs:.2}s)", cfg.kind, files.len(), dir.display());
                    ExitCode::SUCCESS
                }
                Err(run::RunError::Core(e)) => {
                    report(core_code(&e), "-", &e.to_string());
                    ExitCode::FAILURE
                }
                Err(run::RunError::Io { path, source }) => {
                    report("io", &path.display().to_string(), &source.to_string());
                    ExitCode::FAILURE
                }
            }
        }
    }
}
