//! Command-line front end. Each subcommand only parses arguments, calls the
//! library and writes files or stdout. Diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::ablation::{
    render_report, run_ablation, AblationConfig, AblationReport, ReportFormat, RunOptions,
};
use crate::design::{apply_design, design_name, DesignConfig, LabeledDataset};
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, save_manifest};
use crate::metrics::evaluate;
use crate::synthgen::{generate_test, generate_train, SynthConfig};
use crate::trainer::{train, TrainConfig, TrainedModel};

#[derive(Debug, Parser)]
#[command(
    name = "finedesign",
    version,
    about = "Fine-grained dataset design toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic train and test manifests.
    Synth {
        /// SynthConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Apply a dataset design to a train manifest and export it as CSV.
    Partition {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated categories (names or abbreviations) to extract.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        extract: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on a partitioned CSV dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// TrainConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Design name recorded in the model and in later eval reports.
        #[arg(long)]
        design_name: Option<String>,
    },
    /// Evaluate a model on a test manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every design over every seed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores). Output is identical for any value.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Suppress per-cell progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Render an ablation JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            config,
            out_train,
            out_test,
        } => {
            let cfg = match config {
                Some(p) => SynthConfig::load(p)?,
                None => SynthConfig::default(),
            };
            let train_m = generate_train(&cfg)?;
            let test_m = generate_test(&cfg)?;
            save_manifest(&train_m, &out_train)?;
            save_manifest(&test_m, &out_test)?;
            let summary = serde_json::json!({
                "train": train_m.summarize(),
                "test": test_m.summarize(),
            });
            emit(None, &format!("{summary}\n"))
        }
        Command::Partition {
            manifest,
            extract,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let extract: Vec<&str> = extract
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect();
            let design = DesignConfig::resolve(&m.taxonomy, &extract)?;
            let dataset = apply_design(&m, &design)?;
            dataset.save_csv(&out)?;
            let counts: serde_json::Map<String, serde_json::Value> = dataset
                .class_names
                .iter()
                .cloned()
                .zip(dataset.class_counts().into_iter().map(Into::into))
                .collect();
            let summary = serde_json::json!({
                "design": design_name(&design, &m.taxonomy),
                "class_counts": counts,
            });
            emit(None, &format!("{summary}\n"))
        }
        Command::Train {
            dataset,
            config,
            out,
            design_name,
        } => {
            let ds = LabeledDataset::load_csv(&dataset)?;
            let cfg = match config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            let mut model = train(&ds, &cfg)?;
            model.design_name = design_name;
            model.save(&out)
        }
        Command::Eval { model, test, out } => {
            let model = TrainedModel::load(&model)?;
            let test = load_manifest(&test)?;
            let report = evaluate(&model, &test)?;
            emit(out.as_deref(), &format!("{}\n", report.to_json()))
        }
        Command::Ablate {
            config,
            out,
            workers,
            quiet,
        } => {
            let cfg = AblationConfig::load(&config)?;
            let report = run_ablation(
                &cfg,
                RunOptions {
                    workers,
                    log: !quiet,
                },
            )?;
            write_file(&out, &report.to_json())
        }
        Command::Report { input, format, out } => {
            let format: ReportFormat = format.parse()?;
            let report = AblationReport::load(&input)?;
            emit(out.as_deref(), &render_report(&report, format))
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
