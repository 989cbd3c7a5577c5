//! Command-line front end: run suites, refinement studies and report summaries.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paralab::harness::{
    read_report, refinement_study, run_in_pool, run_suite, threads_from_env, write_report, Axis, ExperimentConfig,
    ExperimentReport, Suite,
};
use paralab::Error;

#[derive(Parser)]
#[command(
    name = "paralab",
    version,
    about = "Numerical checks for sectorial operators and paraproducts"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the suite named in a config, or every suite with `--suite all`.
    Run {
        config: PathBuf,
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a suite with one axis doubled at every step.
    Refine {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a report directory written by `run` or `refine`.
    Report { dir: PathBuf },
}

fn print(report: &ExperimentReport) {
    for r in &report.records {
        println!("{}", r.summary());
    }
    let failed = report.failures().len();
    println!("{}: {} checks, {failed} failed", report.suite, report.records.len());
}

fn save(report: &ExperimentReport, dir: Option<&Path>) -> Result<(), Error> {
    if let Some(dir) = dir {
        let m = write_report(report, dir)?;
        println!("wrote report.jsonl and {} tables to {}", m.files.len(), dir.display());
    }
    Ok(())
}

fn out_dir(cli: Option<PathBuf>, config: &ExperimentConfig, suite: &str, many: bool) -> Option<PathBuf> {
    let base = cli.or_else(|| config.output.dir.clone())?;
    Some(if many { base.join(suite) } else { base })
}

fn run(config: &Path, suite: Option<String>, seed: Option<u64>, out: Option<PathBuf>) -> Result<bool, Error> {
    let base = ExperimentConfig::load(config)?;
    let names: Vec<String> = match suite.as_deref() {
        Some("all") => Suite::ALL.iter().map(|s| s.name().to_string()).collect(),
        Some(s) => vec![s.to_string()],
        None => vec![base.suite.clone()],
    };
    let many = names.len() > 1;
    let mut ok = true;
    for name in names {
        let mut cfg = base.clone();
        cfg.suite = name.clone();
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let report = run_suite(&cfg)?;
        print(&report);
        save(&report, out_dir(out.clone(), &cfg, &name, many).as_deref())?;
        ok &= report.passed();
    }
    Ok(ok)
}

fn refine(config: &Path, axis: &str, steps: usize, out: Option<PathBuf>) -> Result<bool, Error> {
    let cfg = ExperimentConfig::load(config)?;
    let axis: Axis = axis.parse()?;
    let report = refinement_study(&cfg, axis, steps)?;
    print(&report);
    save(&report, out_dir(out, &cfg, &cfg.suite, false).as_deref())?;
    Ok(report.passed())
}

fn report(dir: &Path) -> Result<bool, Error> {
    let report = read_report(dir)?;
    let p = &report.provenance;
    println!(
        "suite {} (seed {}, quick {}, version {}, config {})",
        report.suite,
        p.seed,
        p.quick,
        p.version,
        &p.config_hash[..p.config_hash.len().min(12)]
    );
    print(&report);
    for t in &report.tables {
        println!("table {} ({} rows)", t.name, t.rows.len());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = run_in_pool(threads, move || match cli.cmd {
        Cmd::Run {
            config,
            suite,
            seed,
            out,
        } => run(&config, suite, seed, out),
        Cmd::Refine {
            config,
            axis,
            steps,
            out,
        } => refine(&config, &axis, steps, out),
        Cmd::Report { dir } => report(&dir),
    });
    match outcome.and_then(|r| r) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
