use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use itemknn::error::{Error, Result};
use itemknn::harness::{
    self, DataSource, ExperimentConfig, ExperimentReport, OutputFormat, RunSettings,
};
use itemknn::ingest::{self, ColumnMap, FileFormat, ImplicitThreshold, ThresholdMode};
use itemknn::knn::{build_matrix, cosine_similarity, truncate_topk, SimilarityMatrix, Strategy};
use itemknn::metrics::{evaluate, IdcgMode};
use itemknn::recommend::{self, Preset};
use itemknn::split::{split_holdout, SplitConfig, SplitPair};

#[derive(Parser)]
#[command(
    name = "itemknn",
    version,
    about = "Item-based kNN recommendation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset statistics, before and (with --threshold) after implicit conversion.
    Stats(StatsArgs),
    /// Convert explicit ratings to implicit feedback and write an atomic file.
    Preprocess(PreprocessArgs),
    /// Write seeded per-user holdout splits of an implicit dataset.
    Split(SplitArgs),
    /// Build a similarity matrix from a persisted split.
    Train(TrainArgs),
    /// Produce top-N recommendations for every test user of a persisted split.
    Recommend(RecommendArgs),
    /// Score a recommendation dump against a persisted split.
    Evaluate(EvaluateArgs),
    /// Run the full preset × seed × IDCG-mode experiment and write reports.
    Experiment(ExperimentArgs),
    /// Re-emit report files from a saved report.json.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Interaction file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// File format: atomic or csv.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    user_col: Option<String>,
    #[arg(long)]
    item_col: Option<String>,
    #[arg(long)]
    rating_col: Option<String>,
    #[arg(long)]
    time_col: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ThresholdArgs {
    /// Rating cutoff for implicit conversion.
    #[arg(long)]
    threshold: Option<f64>,
    /// gt (strictly greater) or ge (greater or equal).
    #[arg(long)]
    threshold_mode: Option<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    threshold: ThresholdArgs,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Output atomic file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Implicit atomic file (see `preprocess`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![21u64, 42, 84])]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitFiles {
    #[arg(long)]
    train: PathBuf,
    /// Test half; also fixes the dense index space shared with the train half.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    split: SplitFiles,
    /// full or topk.
    #[arg(long, default_value = "topk")]
    strategy: String,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Output similarity text file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    split: SplitFiles,
    #[arg(long, default_value = "recbole")]
    preset: String,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    topn: usize,
    /// Precomputed similarity file (from `train`); built from the train half otherwise.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Output dump: user, rank, item, score.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    split: SplitFiles,
    /// Recommendation dump from `recommend`.
    #[arg(long)]
    recs: PathBuf,
    #[arg(long, default_value_t = 10)]
    topn: usize,
    /// truncated, fixed-k or both.
    #[arg(long, default_value = "truncated")]
    idcg: String,
    /// Optional JSON output with per-user values.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Key-value (TOML) config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    topn: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    preset: Option<Vec<String>>,
    /// truncated, fixed-k or both.
    #[arg(long)]
    idcg: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `experiment`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["json".to_string(), "csv".into(), "md".into()])]
    emit: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Config-file keys mirror the long flag names.
#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    data: Option<PathBuf>,
    format: Option<String>,
    user_col: Option<String>,
    item_col: Option<String>,
    rating_col: Option<String>,
    time_col: Option<String>,
    threshold: Option<f64>,
    threshold_mode: Option<String>,
    ratio: Option<f64>,
    seeds: Option<Vec<u64>>,
    k: Option<usize>,
    topn: Option<usize>,
    preset: Option<Vec<String>>,
    idcg: Option<String>,
    out: Option<PathBuf>,
    emit: Option<Vec<String>>,
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.trim().parse()).collect()
}

fn parse_idcg(s: &str) -> Result<Vec<IdcgMode>> {
    match s {
        "both" => Ok(vec![IdcgMode::Truncated, IdcgMode::FixedK]),
        one => Ok(vec![one.parse()?]),
    }
}

fn source(data: &DataArgs) -> Result<DataSource> {
    let path = data
        .data
        .clone()
        .ok_or_else(|| Error::Config("--data is required".into()))?;
    let format = match &data.format {
        Some(f) => f.parse()?,
        None if path.extension().is_some_and(|e| e == "csv") => FileFormat::Csv,
        None => FileFormat::Atomic,
    };
    let defaults = ColumnMap::default();
    Ok(DataSource {
        path,
        format,
        columns: ColumnMap {
            user: data.user_col.clone().unwrap_or(defaults.user),
            item: data.item_col.clone().unwrap_or(defaults.item),
            rating: data.rating_col.clone().unwrap_or(defaults.rating),
            timestamp: data.time_col.clone().unwrap_or(defaults.timestamp),
        },
    })
}

fn threshold(args: &ThresholdArgs) -> Result<Option<ImplicitThreshold>> {
    let mode: ThresholdMode = match &args.threshold_mode {
        Some(m) => m.parse()?,
        None => ThresholdMode::StrictlyGreater,
    };
    Ok(args
        .threshold
        .map(|cutoff| ImplicitThreshold { cutoff, mode }))
}

fn load(src: &DataSource) -> Result<ingest::InteractionDataset> {
    ingest::load_interactions(&src.path, src.format, &src.columns)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let src = source(&args.data).map_err(|e| e.in_phase("config"))?;
    let ds = load(&src).map_err(|e| e.in_phase("load"))?;
    let raw = ingest::stats(&ds);
    let implicit = threshold(&args.threshold)?.map(|t| ingest::stats(&ingest::to_implicit(&ds, t)));
    print_json(&serde_json::json!({ "raw": raw, "implicit": implicit }))
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let src = source(&args.data).map_err(|e| e.in_phase("config"))?;
    let t = threshold(&args.threshold)?.unwrap_or(ImplicitThreshold::MOVIELENS);
    let ds = load(&src).map_err(|e| e.in_phase("load"))?;
    let implicit = ingest::to_implicit(&ds, t);
    ingest::write_atomic(&implicit, &args.out).map_err(|e| e.in_phase("write"))?;
    print_json(&ingest::stats(&implicit))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let ds = ingest::load_interactions(&args.data, FileFormat::Atomic, &ColumnMap::default())
        .map_err(|e| e.in_phase("load"))?;
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let stem = file_stem(&args.data);
    for seed in args.seeds {
        let cfg = SplitConfig::new(args.ratio, seed)?;
        let split = split_holdout(&ds, &cfg).map_err(|e| e.in_phase("split"))?;
        let (train, test) = split
            .write(&args.out, &format!("{stem}.seed{seed}"))
            .map_err(|e| e.in_phase("write"))?;
        println!("{}\t{}", train.display(), test.display());
    }
    Ok(())
}

fn load_split(files: &SplitFiles) -> Result<SplitPair> {
    SplitPair::load(&files.train, &files.test).map_err(|e| e.in_phase("load"))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let split = load_split(&args.split)?;
    let full = cosine_similarity(&build_matrix(&split.train));
    let matrix = match args.strategy.as_str() {
        "full" => full,
        "topk" => truncate_topk(&full, args.k).map_err(|e| e.in_phase("similarity"))?,
        other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
    };
    matrix
        .write_text(&args.out)
        .map_err(|e| e.in_phase("write"))?;
    eprintln!(
        "{} items, {} stored similarities",
        matrix.n_items(),
        matrix.nnz()
    );
    Ok(())
}

fn cmd_recommend(args: RecommendArgs) -> Result<()> {
    let preset: Preset = args.preset.parse()?;
    let split = load_split(&args.split)?;
    let matrix = match &args.sim {
        Some(path) => {
            let m = SimilarityMatrix::read_text(path).map_err(|e| e.in_phase("load"))?;
            let wanted = preset.strategy(args.k);
            let compatible = match (wanted, m.strategy()) {
                (Strategy::Full, Strategy::Full) => true,
                (Strategy::TopK { k }, Strategy::TopK { k: have }) => k == have,
                _ => false,
            };
            if !compatible {
                return Err(Error::Config(format!(
                    "preset {preset} expects a {wanted} matrix, file holds {}",
                    m.strategy()
                )));
            }
            m
        }
        None => preset
            .matrix(&cosine_similarity(&build_matrix(&split.train)), args.k)
            .map_err(|e| e.in_phase("similarity"))?
            .into_owned(),
    };
    let recs = recommend::recommend_all(&matrix, &split, preset.scoring(args.k), args.topn)
        .map_err(|e| e.in_phase("recommend"))?;
    recommend::write_recommendations(&args.out, &recs, split.train.users(), split.train.items())
        .map_err(|e| e.in_phase("write"))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let split = load_split(&args.split)?;
    let recs =
        recommend::read_recommendations(&args.recs, split.train.users(), split.train.items())
            .map_err(|e| e.in_phase("load"))?;
    let mut reports = Vec::new();
    for mode in parse_idcg(&args.idcg)? {
        let report =
            evaluate(&recs, &split.test, args.topn, mode).map_err(|e| e.in_phase("evaluate"))?;
        println!(
            "{}\tusers={}\tndcg={:.4}\tprecision={:.4}\trecall={:.4}",
            mode,
            report.means.users,
            report.means.ndcg,
            report.means.precision,
            report.means.recall
        );
        reports.push(report);
    }
    if let Some(out) = args.out {
        let text = serde_json::to_string_pretty(&reports)?;
        fs::write(&out, text + "\n").map_err(|e| Error::Io {
            path: out,
            source: e,
        })?;
    }
    Ok(())
}

fn experiment_config(args: ExperimentArgs) -> Result<ExperimentConfig> {
    let file: ConfigFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let data = DataArgs {
        data: args.data.data.or(file.data),
        format: args.data.format.or(file.format),
        user_col: args.data.user_col.or(file.user_col),
        item_col: args.data.item_col.or(file.item_col),
        rating_col: args.data.rating_col.or(file.rating_col),
        time_col: args.data.time_col.or(file.time_col),
    };
    let th = ThresholdArgs {
        threshold: args.threshold.threshold.or(file.threshold),
        threshold_mode: args.threshold.threshold_mode.or(file.threshold_mode),
    };
    let defaults = RunSettings::default();
    let settings = RunSettings {
        threshold: threshold(&th)?.unwrap_or(defaults.threshold),
        train_ratio: args.ratio.or(file.ratio).unwrap_or(defaults.train_ratio),
        seeds: args.seeds.or(file.seeds).unwrap_or(defaults.seeds),
        k: args.k.or(file.k).unwrap_or(defaults.k),
        n: args.topn.or(file.topn).unwrap_or(defaults.n),
        presets: match args.preset.or(file.preset) {
            Some(list) => parse_list(&list)?,
            None => defaults.presets,
        },
        idcg_modes: match args.idcg.or(file.idcg) {
            Some(s) => parse_idcg(&s)?,
            None => defaults.idcg_modes,
        },
    };
    Ok(ExperimentConfig {
        source: source(&data)?,
        settings,
        out_dir: args
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("results")),
        emit: match args.emit.or(file.emit) {
            Some(list) => parse_list(&list)?,
            None => vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Md],
        },
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(args).map_err(|e| e.in_phase("config"))?;
    let result = harness::run_experiment(&cfg)?;
    let written = harness::emit_report(
        &result.report,
        Some(&result.timings),
        &cfg.emit,
        &cfg.out_dir,
    )
    .map_err(|e| e.in_phase("report"))?;
    for &mode in &cfg.settings.idcg_modes {
        for &preset in &cfg.settings.presets {
            if let Some(avg) = result.report.seed_mean_ndcg(preset, mode) {
                println!(
                    "{}\t{}\t{}\tndcg@{}={avg:.4}",
                    result.report.dataset, mode, preset, cfg.settings.n
                );
            }
        }
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = ExperimentReport::read_json(&args.input).map_err(|e| e.in_phase("load"))?;
    let formats: Vec<OutputFormat> = parse_list(&args.emit)?;
    for path in harness::emit_report(&report, None, &formats, &args.out)
        .map_err(|e| e.in_phase("report"))?
    {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
