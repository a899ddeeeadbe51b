//! Command-line front end. Exit status: 0 success, 1 some tasks failed
//! (outputs still written), 2 invalid config or data, 3 i/o failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvpa_core::dataset::write_dataset;
use mvpa_core::report::{merge_csv, Report};
use mvpa_core::searchlight::with_threads;
use mvpa_core::seed::derive_seed;
use mvpa_core::synth::{generate_subject, PlantSpec};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::runner::{execute, load_subjects, plan, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "mvpa",
    version,
    about = "Voxel-selection analyses of abstract vs concrete concepts"
)]
pub struct Cli {
    /// Experiment config (JSON); for `synth`, a synthetic-subject spec.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the output directory (for `report`, the merged CSV path).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Validate and print the plan without computing or writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic subject datasets from a spec.
    Synth {
        /// Number of subjects; subject k uses an independent seed derived from the spec seed.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Decoding with permutation tests only.
    Decode,
    /// Cluster composition only.
    Cluster,
    /// Encoding (configured embeddings and random baseline) only.
    Encode,
    /// Within-class RSA only.
    Rsa,
    /// Searchlight maps and cross-subject area ranking only.
    Searchlight,
    /// Compute and write stable-voxel selections only.
    SelectStable,
    /// Every configured selection and analysis.
    Run,
    /// Merge report CSVs; later files win on duplicate keys.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let stage = match &cli.command {
        Command::Synth { count } => return synth(cli, *count),
        Command::Report { inputs } => return merge(cli, inputs),
        Command::Decode => Stage::Decode,
        Command::Cluster => Stage::Cluster,
        Command::Encode => Stage::Encode,
        Command::Rsa => Stage::Rsa,
        Command::Searchlight => Stage::Searchlight,
        Command::SelectStable => Stage::SelectStable,
        Command::Run => Stage::All,
    };
    let mut config = ExperimentConfig::from_file(require_config(cli)?)?.restricted_to(stage)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let threads = cli.threads;
    let run = move || -> Result<u8, CliError> {
        let subjects = load_subjects(&config)?;
        let plan = plan(&config, &subjects);
        if cli.dry_run {
            println!("{}", json!({ "dry_run": true, "plan": plan }));
            return Ok(0);
        }
        let report = execute(&config, &subjects)?;
        summarize(&report, &config.output_dir);
        Ok(if report.failures() > 0 { 1 } else { 0 })
    };
    match threads {
        Some(n) => with_threads(n, run)?,
        None => run(),
    }
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))
}

fn summarize(report: &Report, out: &Path) {
    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "{}",
            json!({ "task_failed": {
                "subject": r.subject, "paradigm": r.paradigm, "selection": r.selection,
                "analysis": r.analysis, "message": r.error,
            }})
        );
    }
    println!(
        "{}",
        json!({ "output_dir": out, "records": report.records.len(), "failures": report.failures() })
    );
}

fn synth(cli: &Cli, count: usize) -> Result<u8, CliError> {
    let path = require_config(cli)?;
    let text = fs::read_to_string(path).map_err(|e| mvpa_core::Error::io(path, e))?;
    let mut spec: PlantSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("synth needs --out".into()))?;
    let specs: Vec<PlantSpec> = (0..count)
        .map(|k| {
            let mut s = spec.clone();
            if count > 1 {
                s.subject_id = format!("{}{:02}", spec.subject_id, k + 1);
                s.seed = derive_seed(spec.seed, k as u64);
            }
            s
        })
        .collect();
    let dirs: Vec<PathBuf> = specs.iter().map(|s| out.join(&s.subject_id)).collect();
    if cli.dry_run {
        println!("{}", json!({ "dry_run": true, "subjects": dirs }));
        return Ok(0);
    }
    let work = || -> Result<(), CliError> {
        for (s, dir) in specs.iter().zip(&dirs) {
            write_dataset(dir, &generate_subject(s)?)?;
        }
        Ok(())
    };
    match cli.threads {
        Some(n) => with_threads(n, work)??,
        None => work()?,
    }
    println!("{}", json!({ "subjects": dirs }));
    Ok(0)
}

fn merge(cli: &Cli, inputs: &[PathBuf]) -> Result<u8, CliError> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("report needs --out <merged.csv>".into()))?;
    if cli.dry_run {
        for p in inputs {
            mvpa_core::report::read_csv_rows(p)?;
        }
        println!("{}", json!({ "dry_run": true, "inputs": inputs, "output": out }));
        return Ok(0);
    }
    let paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let generated_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let rows = merge_csv(&paths, &out, &generated_at)?;
    println!("{}", json!({ "output": out, "rows": rows }));
    Ok(0)
}
