//! End-to-end experiments over presets × seeds × IDCG modes and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PhaseExt, Result};
use crate::ingest::{
    self, ColumnMap, DatasetStats, FileFormat, ImplicitThreshold, InteractionDataset,
};
use crate::knn::{build_matrix, cosine_similarity, truncate_topk, SimilarityMatrix, Strategy};
use crate::metrics::{evaluate, IdcgMode, MetricReport};
use crate::recommend::{recommend_all, Preset};
use crate::split::{split_holdout, SplitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
    Md,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "md" => Ok(OutputFormat::Md),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// Everything that determines the numbers of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub threshold: ImplicitThreshold,
    pub train_ratio: f64,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub n: usize,
    pub presets: Vec<Preset>,
    pub idcg_modes: Vec<IdcgMode>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            threshold: ImplicitThreshold::MOVIELENS,
            train_ratio: 0.8,
            seeds: vec![21, 42, 84],
            k: 20,
            n: 10,
            presets: Preset::ALL.to_vec(),
            idcg_modes: vec![IdcgMode::Truncated],
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if self.presets.is_empty() {
            return fail("at least one preset is required");
        }
        if self.idcg_modes.is_empty() {
            return fail("at least one IDCG mode is required");
        }
        if self.k == 0 {
            return fail("k must be >= 1");
        }
        if self.n == 0 {
            return fail("top-n must be >= 1");
        }
        let has_dupes = |len: usize, mut keys: Vec<String>| {
            keys.sort();
            keys.dedup();
            keys.len() != len
        };
        if has_dupes(
            self.seeds.len(),
            self.seeds.iter().map(u64::to_string).collect(),
        ) || has_dupes(
            self.presets.len(),
            self.presets.iter().map(|p| p.to_string()).collect(),
        ) || has_dupes(
            self.idcg_modes.len(),
            self.idcg_modes.iter().map(|m| m.to_string()).collect(),
        ) {
            return fail("seeds, presets and IDCG modes must not repeat");
        }
        SplitConfig::new(self.train_ratio, 0).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    pub format: FileFormat,
    pub columns: ColumnMap,
}

impl DataSource {
    /// File name without extension, used to label reports.
    pub fn dataset_name(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub settings: RunSettings,
    pub out_dir: PathBuf,
    pub emit: Vec<OutputFormat>,
}

/// One (preset, seed, IDCG mode) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub preset: Preset,
    pub seed: u64,
    pub idcg_mode: IdcgMode,
    pub report: MetricReport,
}

/// The deterministic part of an experiment's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub settings: RunSettings,
    pub stats_raw: DatasetStats,
    pub stats_implicit: DatasetStats,
    /// Ordered seed-major, then preset, then IDCG mode, each in settings order.
    pub cells: Vec<Cell>,
}

impl ExperimentReport {
    pub fn cell(&self, preset: Preset, seed: u64, mode: IdcgMode) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.preset == preset && c.seed == seed && c.idcg_mode == mode)
    }

    /// Mean nDCG of a preset over all seeds.
    pub fn seed_mean_ndcg(&self, preset: Preset, mode: IdcgMode) -> Option<f64> {
        let values: Vec<f64> = self
            .settings
            .seeds
            .iter()
            .map(|&s| self.cell(preset, s, mode).map(|c| c.report.means.ndcg))
            .collect::<Option<_>>()?;
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetTiming {
    pub preset: Preset,
    pub recommend_secs: f64,
    pub evaluate_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub split_secs: f64,
    pub similarity_secs: f64,
    pub truncate_secs: f64,
    pub presets: Vec<PresetTiming>,
    pub total_secs: f64,
}

/// Wall-clock durations; kept apart from the report so the report stays
/// byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_secs: f64,
    pub preprocess_secs: f64,
    pub seeds: Vec<SeedTiming>,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub report: ExperimentReport,
    pub timings: Timings,
}

/// Loads the configured dataset and runs [`run_dataset`] on it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.settings.validate().phase("config")?;
    let start = Instant::now();
    let raw = ingest::load_interactions(&cfg.source.path, cfg.source.format, &cfg.source.columns)
        .phase("load")?;
    let load_secs = start.elapsed().as_secs_f64();
    let mut result = run_dataset(&cfg.source.dataset_name(), &raw, &cfg.settings)?;
    result.timings.load_secs = load_secs;
    result.timings.total_secs += load_secs;
    Ok(result)
}

/// Runs the pipeline on an already loaded (explicit) dataset.
///
/// Per seed: holdout split, one full cosine matrix, one truncated matrix
/// shared by every preset that needs it, then recommendation and evaluation
/// for each preset and IDCG mode.
pub fn run_dataset(
    name: &str,
    raw: &InteractionDataset,
    settings: &RunSettings,
) -> Result<ExperimentResult> {
    settings.validate().phase("config")?;
    let start = Instant::now();
    let implicit = ingest::to_implicit(raw, settings.threshold);
    if implicit.is_empty() {
        return Err(Error::Config(format!(
            "no interactions survive the threshold {:?}",
            settings.threshold
        ))
        .in_phase("preprocess"));
    }
    let preprocess_secs = start.elapsed().as_secs_f64();

    let per_seed: Vec<(Vec<Cell>, SeedTiming)> = settings
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&implicit, settings, seed))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut seed_timings = Vec::new();
    for (c, t) in per_seed {
        cells.extend(c);
        seed_timings.push(t);
    }
    let report = ExperimentReport {
        dataset: name.to_owned(),
        settings: settings.clone(),
        stats_raw: ingest::stats(raw),
        stats_implicit: ingest::stats(&implicit),
        cells,
    };
    Ok(ExperimentResult {
        report,
        timings: Timings {
            load_secs: 0.0,
            preprocess_secs,
            seeds: seed_timings,
            total_secs: start.elapsed().as_secs_f64(),
        },
    })
}

fn run_seed(
    implicit: &InteractionDataset,
    settings: &RunSettings,
    seed: u64,
) -> Result<(Vec<Cell>, SeedTiming)> {
    let seed_start = Instant::now();
    let mut timing = SeedTiming {
        seed,
        ..SeedTiming::default()
    };

    let t = Instant::now();
    let split =
        split_holdout(implicit, &SplitConfig::new(settings.train_ratio, seed)?).phase("split")?;
    timing.split_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let full = cosine_similarity(&build_matrix(&split.train));
    timing.similarity_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let needs_topk = settings
        .presets
        .iter()
        .any(|p| matches!(p.strategy(settings.k), Strategy::TopK { .. }));
    let truncated = if needs_topk {
        Some(truncate_topk(&full, settings.k).phase("similarity")?)
    } else {
        None
    };
    timing.truncate_secs = t.elapsed().as_secs_f64();

    let mut cells = Vec::new();
    for &preset in &settings.presets {
        let matrix: &SimilarityMatrix = match preset.strategy(settings.k) {
            Strategy::Full => &full,
            Strategy::TopK { .. } => truncated.as_ref().expect("built above"),
        };
        let t = Instant::now();
        let recs = recommend_all(matrix, &split, preset.scoring(settings.k), settings.n)
            .phase("recommend")?;
        let recommend_secs = t.elapsed().as_secs_f64();

        let t = Instant::now();
        for &mode in &settings.idcg_modes {
            let mut report = evaluate(&recs, &split.test, settings.n, mode).phase("evaluate")?;
            report.config.preset = Some(preset);
            report.config.seed = Some(seed);
            cells.push(Cell {
                preset,
                seed,
                idcg_mode: mode,
                report,
            });
        }
        timing.presets.push(PresetTiming {
            preset,
            recommend_secs,
            evaluate_secs: t.elapsed().as_secs_f64(),
        });
    }
    timing.total_secs = seed_start.elapsed().as_secs_f64();
    Ok((cells, timing))
}

/// Paths of the files a report emission may produce.
pub fn report_paths(report: &ExperimentReport, out_dir: &Path) -> BTreeMap<&'static str, PathBuf> {
    let name = &report.dataset;
    BTreeMap::from([
        ("json", out_dir.join("report.json")),
        ("timings", out_dir.join("timings.json")),
        ("csv", out_dir.join("results.csv")),
        ("figure", out_dir.join(format!("{name}_figure.csv"))),
        ("md", out_dir.join(format!("{name}.md"))),
    ])
}

/// Writes the requested formats into `out_dir` and returns the written paths.
///
/// * json: `report.json` (plus `timings.json` when timings are given)
/// * csv: `results.csv` with one row per cell, and `<dataset>_figure.csv`
///   with the preset/seed/nDCG series for plotting
/// * md: `<dataset>.md` with seed-column nDCG tables and an `Avg.` column
pub fn emit_report(
    report: &ExperimentReport,
    timings: Option<&Timings>,
    formats: &[OutputFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = report_paths(report, out_dir);
    let write = |key: &str, content: String| -> Result<PathBuf> {
        let path = paths[key].clone();
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let mut written = Vec::new();
    for format in formats {
        match format {
            OutputFormat::Json => {
                written.push(write("json", report.to_json()? + "\n")?);
                if let Some(t) = timings {
                    written.push(write("timings", serde_json::to_string_pretty(t)? + "\n")?);
                }
            }
            OutputFormat::Csv => {
                written.push(write("csv", results_csv(report)?)?);
                written.push(write("figure", figure_csv(report)?)?);
            }
            OutputFormat::Md => written.push(write("md", markdown(report))?),
        }
    }
    Ok(written)
}

fn csv_to_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::Config(format!("csv encoding: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn results_csv(report: &ExperimentReport) -> Result<String> {
    let mut rows = vec![[
        "dataset",
        "preset",
        "seed",
        "idcg_mode",
        "ndcg",
        "precision",
        "recall",
    ]
    .map(String::from)
    .to_vec()];
    for c in &report.cells {
        let m = &c.report.means;
        rows.push(vec![
            report.dataset.clone(),
            c.preset.to_string(),
            c.seed.to_string(),
            c.idcg_mode.to_string(),
            m.ndcg.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
        ]);
    }
    csv_to_string(rows)
}

fn figure_csv(report: &ExperimentReport) -> Result<String> {
    let mut rows = vec![["preset", "seed", "idcg_mode", "ndcg"]
        .map(String::from)
        .to_vec()];
    for c in &report.cells {
        rows.push(vec![
            c.preset.to_string(),
            c.seed.to_string(),
            c.idcg_mode.to_string(),
            c.report.means.ndcg.to_string(),
        ]);
    }
    csv_to_string(rows)
}

fn markdown(report: &ExperimentReport) -> String {
    let s = &report.settings;
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", report.dataset);
    let _ = writeln!(
        out,
        "k={}, N={}, train ratio {}, {} users / {} items / {} interactions after preprocessing\n",
        s.k,
        s.n,
        s.train_ratio,
        report.stats_implicit.n_users,
        report.stats_implicit.n_items,
        report.stats_implicit.n_interactions
    );
    for &mode in &s.idcg_modes {
        let _ = writeln!(out, "## nDCG@{} ({} IDCG)\n", s.n, mode);
        let mut header = String::from("| |");
        let mut rule = String::from("|---|");
        for seed in &s.seeds {
            let _ = write!(header, " {seed} |");
            rule.push_str("---|");
        }
        header.push_str(" Avg. |");
        rule.push_str("---|");
        let _ = writeln!(out, "{header}\n{rule}");
        for &preset in &s.presets {
            let mut line = format!("| {preset} |");
            for &seed in &s.seeds {
                match report.cell(preset, seed, mode) {
                    Some(c) => {
                        let _ = write!(line, " {:.4} |", c.report.means.ndcg);
                    }
                    None => line.push_str(" - |"),
                }
            }
            match report.seed_mean_ndcg(preset, mode) {
                Some(avg) => {
                    let _ = write!(line, " {avg:.4} |");
                }
                None => line.push_str(" - |"),
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');

        let _ = writeln!(out, "### Seed averages ({} IDCG)\n", mode);
        let _ = writeln!(
            out,
            "| | nDCG@{n} | Precision@{n} | Recall@{n} |\n|---|---|---|---|",
            n = s.n
        );
        for &preset in &s.presets {
            let cells: Vec<&Cell> = s
                .seeds
                .iter()
                .filter_map(|&seed| report.cell(preset, seed, mode))
                .collect();
            if cells.is_empty() {
                continue;
            }
            let avg =
                |f: fn(&Cell) -> f64| cells.iter().map(|c| f(c)).sum::<f64>() / cells.len() as f64;
            let _ = writeln!(
                out,
                "| {preset} | {:.4} | {:.4} | {:.4} |",
                avg(|c| c.report.means.ndcg),
                avg(|c| c.report.means.precision),
                avg(|c| c.report.means.recall)
            );
        }
        out.push('\n');
    }
    out
}
