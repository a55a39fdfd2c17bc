use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use divauction::harness::{self, ExperimentConfig, Suite};
use divauction::Error;

const OUT_ENV: &str = "DIVAUCTION_OUT";

/// Repeated second-price auctions against the dividing phase-search seller.
#[derive(Parser, Debug)]
#[command(name = "divauction", version)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Output directory. Falls back to the config's `output`, then $DIVAUCTION_OUT, then ./out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Only print failures.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One game per seed of a single setting; writes traces and report.csv.
    Simulate { config: PathBuf },
    /// Every setting of the config's grids; writes sweep.csv.
    Sweep { config: PathBuf },
    /// Built-in check suite: mechanics, prop1, lemma1, lemma2, lemma3, theorem1 or all.
    Verify { suite: String },
}

enum Outcome {
    Pass,
    Fail,
}

fn output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Simulate { config } => {
            let cfg = ExperimentConfig::from_path(config)?;
            let out = output_dir(cli.out.as_deref(), &cfg);
            let summary = harness::simulate(&cfg, &out, cli.workers)?;
            let failures = summary.failures();
            for (seed, f) in &failures {
                eprintln!("seed {seed}: {f}");
            }
            if !cli.quiet {
                for o in &summary.outcomes {
                    let r = &o.report;
                    println!(
                        "seed {}: SReg {} (bound {:.3}), subhorizons {:?}, {}",
                        o.seed,
                        r.total,
                        r.bound_theorem1,
                        r.subhorizons,
                        if o.pass() { "pass" } else { "FAIL" }
                    );
                }
                println!("wrote {}", out.display());
            }
            Ok(if failures.is_empty() { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::from_path(config)?;
            let out = output_dir(cli.out.as_deref(), &cfg);
            let summary = harness::sweep(&cfg, &out, cli.workers)?;
            let failures = summary.failures();
            for (cell, seed, f) in &failures {
                eprintln!("{cell} seed {seed}: {f}");
            }
            let flat: Vec<_> = summary.trends.iter().filter(|t| !t.decreasing).collect();
            for t in &flat {
                eprintln!("averaged regret not decreasing for M={} gamma0={} {}: {:?}", t.m, t.gamma0, t.mode, t.points);
            }
            if !cli.quiet {
                for a in &summary.aggregates {
                    println!(
                        "{}: {} games, SReg min {:.3} mean {:.3} max {:.3}, bound {:.3}, margin {:.3}",
                        harness::run::cell_label(&a.cell),
                        a.games,
                        a.min_sreg,
                        a.mean_sreg,
                        a.max_sreg,
                        a.bound,
                        a.margin
                    );
                }
                println!("wrote {}", out.join("sweep.csv").display());
            }
            Ok(if failures.is_empty() && flat.is_empty() { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let report = harness::verify(suite, cli.workers)?;
            for c in &report.checks {
                if !cli.quiet || !c.passed {
                    println!("{c}");
                }
            }
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Contract(_) | Error::Internal(_) => ExitCode::from(1),
                Error::Input(_) | Error::Config(_) | Error::Unsupported(_) | Error::Io(_) => ExitCode::from(2),
            }
        }
    }
}
