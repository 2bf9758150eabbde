//! `faircompose` subcommands: run, validate, compare, synth.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime stage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use faircompose::composer::config::parse_config_detailed;
use faircompose::composer::report::{delta_csv, ReportFormat};
use faircompose::composer::{compare_runs, emit_report, load_report, run_pipeline_with_jobs, PipelineConfig};
use faircompose::data::{synth_biased, synth_schema, write_synth_csv};
use faircompose::Error;

pub const SEED_ENV: &str = "FAIRCOMPOSE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser)]
#[command(name = "faircompose", version, about = "Compose fairness interventions and report metrics per stage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured model through the pipeline and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        format: String,
        /// Worker threads; defaults to available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and check a config, printing its normalized form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write per-metric differences between two report directories.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a biased synthetic CSV and print its schema stanza.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        gap: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(code: i32, e: impl std::fmt::Display) -> i32 {
    eprintln!("faircompose: {e}");
    code
}

fn code_for(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, out, format, jobs } => cmd_run(&config, &out, &format, jobs),
        Command::Validate { config } => cmd_validate(&config),
        Command::Compare { a, b, out } => cmd_compare(&a, &b, &out),
        Command::Synth { n, d, gap, noise, seed, out } => cmd_synth(n, d, gap, noise, seed, &out),
    }
}

/// Reads, parses and path-resolves a config; applies the seed override from the environment.
fn load_config(path: &Path) -> Result<(PipelineConfig, bool), Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = parse_config_detailed(&text)?;
    let mut cfg = parsed.config;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    let mut overridden = false;
    if let Ok(v) = std::env::var(SEED_ENV) {
        let seed: u64 = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        cfg.override_seed(seed, parsed.splits_follow_seed);
        overridden = true;
    }
    Ok((cfg, overridden))
}

fn cmd_run(config: &Path, out: &Path, format: &str, jobs: Option<usize>) -> i32 {
    let format: ReportFormat = match format.parse() {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let (cfg, overridden) = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(code_for(&e), e),
    };
    let mut output = match run_pipeline_with_jobs(&cfg, jobs) {
        Ok(o) => o,
        Err(e) => return fail(code_for(&e), e),
    };
    if let Some(obj) = output.report.declared.as_object_mut() {
        let source = if overridden { SEED_ENV } else { "config" };
        obj.insert("seed_source".into(), source.into());
    }
    if !output.report.reports.is_empty() {
        if let Err(e) = emit_report(&output.report, format, out) {
            return fail(EXIT_RUNTIME, e);
        }
    }
    if output.has_errors() {
        for e in &output.report.errors {
            eprintln!("faircompose: {} at stage {}: {}", e.model, e.stage, e.message);
        }
        return EXIT_RUNTIME;
    }
    EXIT_OK
}

fn cmd_validate(config: &Path) -> i32 {
    match load_config(config).and_then(|(c, _)| c.normalized_yaml()) {
        Ok(yaml) => {
            print!("{yaml}");
            EXIT_OK
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn cmd_compare(a: &Path, b: &Path, out: &Path) -> i32 {
    let (ra, rb) = match (load_report(a), load_report(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_CONFIG, e),
    };
    let rows = match compare_runs(&ra, &rb) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match delta_csv(&rows).map(|text| fs::write(out, text)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => fail(EXIT_RUNTIME, e),
        Err(e) => fail(EXIT_RUNTIME, e),
    }
}

fn cmd_synth(n: usize, d: usize, gap: f64, noise: f64, seed: u64, out: &Path) -> i32 {
    let ds = match synth_biased(n, d, gap, noise, seed) {
        Ok(ds) => ds,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = write_synth_csv(&ds, out) {
        return fail(EXIT_RUNTIME, e);
    }
    let s = synth_schema();
    println!("dataset:");
    println!("  path: {}", out.display());
    println!("  schema:");
    println!("    label: {}", s.label);
    println!("    favorable: \"{}\"", s.favorable);
    println!("    protected: {}", s.protected);
    println!("    privileged: {}", s.privileged);
    EXIT_OK
}
