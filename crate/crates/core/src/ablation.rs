//! Full design ablation: every design x every seed, aggregated into a
//! FAR table.
//!
//! Cells are independent. Each one trains with a seed derived from the
//! configured seed and the design index only, and results are collected in
//! (design, seed) order, so the report is identical for any worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{apply_design, design_name, enumerate_designs, DesignConfig, LabeledDataset};
use crate::error::{Error, Result};
use crate::manifest::{load_manifest, Manifest};
use crate::metrics::{evaluate, format_percent};
use crate::trainer::{train, TrainConfig};

pub const REPORT_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Defaults to every subset of the ambiguous categories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<DesignConfig>>,
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("ablation needs at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("ablation seeds must be distinct"));
        }
        self.train.validate()
    }

    /// Parses a config; relative manifest paths are taken relative to `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: AblationConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if let Some(base) = base {
            for p in [&mut cfg.train_manifest, &mut cfg.test_manifest] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 means the rayon default.
    pub workers: usize,
    /// Print one completion line per cell on stderr.
    pub log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub run_seed: u64,
    pub status: RunStatus,
    pub far: Option<f64>,
    pub positive_recall: Option<f64>,
    pub positive_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub design_name: String,
    pub extract: Vec<String>,
    pub mean_far: Option<f64>,
    pub std_far: Option<f64>,
    pub mean_positive_recall: Option<f64>,
    /// Mean over runs where precision is defined.
    pub mean_positive_precision: Option<f64>,
    pub failures: usize,
    pub runs: Vec<RunRecord>,
}

impl AblationRow {
    /// Row label as printed in tables; singletons read `Extract XX only`.
    pub fn label(&self) -> String {
        if self.extract.len() == 1 {
            format!("{} only", self.design_name)
        } else {
            self.design_name.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub far_denominator: String,
    pub aggregation: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            far_denominator: "ground-truth negative test samples".into(),
            aggregation: "mean and sample standard deviation over seeds (an addition to single-run FAR tables); failed runs excluded".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: u32,
    pub toolkit_version: String,
    pub metadata: ReportMetadata,
    pub config: AblationConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: AblationReport = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if r.version != REPORT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported report version {}",
                r.version
            )));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn row(&self, design_name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.design_name == design_name)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Training seed of the (seed, design) cell.
pub fn run_seed(seed: u64, design_index: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ (design_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; defined as 0 for a single value.
fn sample_std(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn aggregate(design_name: String, extract: Vec<String>, runs: Vec<RunRecord>) -> AblationRow {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.status == RunStatus::Ok).collect();
    let fars: Vec<f64> = ok.iter().filter_map(|r| r.far).collect();
    let recalls: Vec<f64> = ok.iter().filter_map(|r| r.positive_recall).collect();
    let precisions: Vec<f64> = ok.iter().filter_map(|r| r.positive_precision).collect();
    AblationRow {
        design_name,
        extract,
        mean_far: mean(&fars),
        std_far: sample_std(&fars),
        mean_positive_recall: mean(&recalls),
        mean_positive_precision: mean(&precisions),
        failures: runs.len() - ok.len(),
        runs,
    }
}

fn run_cell(
    dataset: &LabeledDataset,
    test: &Manifest,
    template: &TrainConfig,
    name: &str,
    seed: u64,
    design_index: usize,
    log: bool,
) -> Result<RunRecord> {
    let run_seed = run_seed(seed, design_index);
    let cfg = TrainConfig {
        seed: run_seed,
        ..template.clone()
    };
    let outcome = train(dataset, &cfg).and_then(|mut model| {
        model.design_name = Some(name.to_owned());
        evaluate(&model, test)
    });
    let record = match outcome {
        Ok(r) => RunRecord {
            seed,
            run_seed,
            status: RunStatus::Ok,
            far: Some(r.far),
            positive_recall: Some(r.positive_recall),
            positive_precision: r.positive_precision,
            error: None,
        },
        Err(e) if e.is_numerical() => RunRecord {
            seed,
            run_seed,
            status: RunStatus::Failed,
            far: None,
            positive_recall: None,
            positive_precision: None,
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    if log {
        match record.far {
            Some(far) => eprintln!("[ablate] {name} seed {seed}: FAR {}", format_percent(far)),
            None => eprintln!("[ablate] {name} seed {seed}: failed"),
        }
    }
    Ok(record)
}

/// Runs the ablation on already-loaded manifests.
pub fn run_ablation_on(
    config: &AblationConfig,
    train_manifest: &Manifest,
    test_manifest: &Manifest,
    options: RunOptions,
) -> Result<AblationReport> {
    config.validate()?;
    let taxonomy = &train_manifest.taxonomy;
    let designs = match &config.designs {
        Some(ds) => ds
            .iter()
            .map(|d| d.validated(taxonomy))
            .collect::<Result<Vec<_>>>()?,
        None => enumerate_designs(taxonomy),
    };
    let datasets = designs
        .iter()
        .map(|d| apply_design(train_manifest, d))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = designs.iter().map(|d| design_name(d, taxonomy)).collect();

    let cells: Vec<(usize, u64)> = (0..designs.len())
        .flat_map(|d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(d, seed)| {
                run_cell(
                    &datasets[d],
                    test_manifest,
                    &config.train,
                    &names[d],
                    seed,
                    d,
                    options.log,
                )
            })
            .collect::<Result<Vec<RunRecord>>>()
    };
    let records = if options.workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?
            .install(work)?
    };

    let mut records = records.into_iter();
    let rows = designs
        .iter()
        .zip(names)
        .map(|(design, name)| {
            let runs: Vec<RunRecord> = records.by_ref().take(config.seeds.len()).collect();
            aggregate(name, design.extract.clone(), runs)
        })
        .collect();

    Ok(AblationReport {
        version: REPORT_VERSION,
        toolkit_version: TOOLKIT_VERSION.to_owned(),
        metadata: ReportMetadata::default(),
        config: config.clone(),
        rows,
    })
}

pub fn run_ablation(config: &AblationConfig, options: RunOptions) -> Result<AblationReport> {
    config.validate()?;
    let train_manifest = load_manifest(&config.train_manifest)?;
    let test_manifest = load_manifest(&config.test_manifest)?;
    run_ablation_on(config, &train_manifest, &test_manifest, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_owned(), format_percent)
}

fn raw(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn render_report(report: &AblationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Markdown => {
            let mut out = String::from(
                "| Dataset Design | FAR | FAR std | Positive recall | Positive precision | Runs |\n\
                 |---|---|---|---|---|---|\n",
            );
            for row in &report.rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {}/{} |\n",
                    row.label(),
                    pct(row.mean_far),
                    pct(row.std_far),
                    pct(row.mean_positive_recall),
                    pct(row.mean_positive_precision),
                    row.runs.len() - row.failures,
                    row.runs.len()
                ));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "design,far_mean,far_std,positive_recall_mean,positive_precision_mean,runs,failures\n",
            );
            for row in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.label(),
                    raw(row.mean_far),
                    raw(row.std_far),
                    raw(row.mean_positive_recall),
                    raw(row.mean_positive_precision),
                    row.runs.len(),
                    row.failures
                ));
            }
            out
        }
    }
}
