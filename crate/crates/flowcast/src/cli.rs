//! Batch command-line entry points: train a model on the chronological
//! training split of a log, evaluate next-event / suffix / remaining-time
//! predictions on the test split, and run the transition-system baselines.
//! Every command is a pure function of its inputs and seed, so reruns
//! produce byte-identical CSVs.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{build_ts_with_stat, ts_predict, Abstraction, AnnotationStat, TsTarget};
use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::evaluate::{
    collect_next_records, collect_remaining_records, collect_suffix_records,
    collect_ts_next_records,
};
use crate::eventlog::{parse_csv_path, EventLog};
use crate::metrics::{aggregate, observed_prefixes, MetricTable};
use crate::network::{CellKind, NetworkConfig};
use crate::prediction::{predict_remaining_time, Model};
use crate::training::{train, TrainHyper, TrainReport};

pub const DEFAULT_SPLIT: f64 = 2.0 / 3.0;
pub const DEFAULT_SEED: u64 = 42;
/// Rollout bound: this many times the longest training trace.
pub const SUFFIX_CAP_FACTOR: usize = 5;

#[derive(Parser, Debug)]
#[command(
    name = "flowcast",
    version,
    about = "Train and evaluate sequence models over business-process event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a recurrent model on the training split of a log
    Train(TrainArgs),
    /// Evaluate next-activity accuracy and next-time MAE on the test split
    EvalNext(EvalNextArgs),
    /// Evaluate predicted case continuations by edit-distance similarity
    EvalSuffix(EvalSuffixArgs),
    /// Evaluate remaining-cycle-time MAE per prefix length
    EvalRemaining(EvalRemainingArgs),
    /// Evaluate an annotated transition-system baseline
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DedupMode {
    /// Keep the log as is
    Off,
    /// Collapse runs of the same activity to their first event
    First,
    /// Collapse runs but always keep each trace's final event
    FirstKeepLast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Lstm,
    Rnn,
}

impl From<CellArg> for CellKind {
    fn from(value: CellArg) -> Self {
        match value {
            CellArg::Lstm => CellKind::Lstm,
            CellArg::Rnn => CellKind::PlainRnn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    NextDelta,
    Remaining,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StatArg {
    Mean,
    Median,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Event log CSV with header case_id,activity,timestamp
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Flat key = value config file; command-line flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fraction of traces (chronologically first) used for training
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Consecutive-duplicate removal applied to the log before anything else
    #[arg(long, value_enum)]
    pub dedup: Option<DedupMode>,
    /// Output directory for CSVs and checkpoints
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub shared: Option<usize>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub loss_weight: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalNextArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model checkpoint written by `train`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated prefix sizes to report individually (e.g. 2,4,6)
    #[arg(long)]
    pub prefixes: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalSuffixArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalRemainingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model checkpoint; mutually exclusive with --abstraction
    #[arg(long, conflicts_with = "abstraction")]
    pub model: Option<PathBuf>,
    /// Evaluate the transition-system baseline instead of a model
    #[arg(long, value_enum)]
    pub abstraction: Option<BaselineAbstraction>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub abstraction: Option<BaselineAbstraction>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub prefixes: Option<String>,
    /// Annotation statistic (median exists for sensitivity checks)
    #[arg(long, value_enum)]
    pub stat: Option<StatArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineAbstraction {
    Set,
    Bag,
    Sequence,
}

impl From<BaselineAbstraction> for Abstraction {
    fn from(value: BaselineAbstraction) -> Self {
        match value {
            BaselineAbstraction::Set => Abstraction::Set,
            BaselineAbstraction::Bag => Abstraction::Bag,
            BaselineAbstraction::Sequence => Abstraction::Sequence,
        }
    }
}

// ---------------------------------------------------------------------------
// Flat key = value config files

pub struct FileConfig(HashMap<String, String>);

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|source| Error::ReadInput {
                path: path.display().to_string(),
                source,
            })?;
            for (no, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedInput {
                    path: path.display().to_string(),
                    message: format!("line {}: expected key = value, got {:?}", no + 1, raw),
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("config key {key:?} has unusable value {raw:?}"))
            }),
        }
    }
}

fn pick<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str, default: T) -> Result<T> {
    Ok(flag.or(file.get(key)?).unwrap_or(default))
}

fn required_path(flag: Option<PathBuf>, file: &FileConfig, key: &str) -> Result<PathBuf> {
    flag.or(file.get::<String>(key)?.map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig(format!("missing required option --{key}")))
}

fn parse_prefix_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad prefix size {p:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn load_log(path: &Path, dedup: DedupMode) -> Result<EventLog> {
    let log = parse_csv_path(path)?;
    Ok(match dedup {
        DedupMode::Off => log,
        DedupMode::First => log.dedup_consecutive(false),
        DedupMode::FirstKeepLast => log.dedup_consecutive(true),
    })
}

struct ResolvedCommon {
    log_path: PathBuf,
    split: f64,
    seed: u64,
    dedup: DedupMode,
    out: PathBuf,
}

fn resolve_common(common: &CommonArgs) -> Result<(ResolvedCommon, FileConfig)> {
    let file = FileConfig::load(common.config.as_deref())?;
    let dedup = match common.dedup {
        Some(d) => d,
        None => match file.get::<String>("dedup")?.as_deref() {
            None => DedupMode::Off,
            Some("off") => DedupMode::Off,
            Some("first") => DedupMode::First,
            Some("first-keep-last") => DedupMode::FirstKeepLast,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown dedup mode {other:?}"
                )))
            }
        },
    };
    let resolved = ResolvedCommon {
        log_path: required_path(common.log.clone(), &file, "log")?,
        split: pick(common.split, &file, "split", DEFAULT_SPLIT)?,
        seed: pick(common.seed, &file, "seed", DEFAULT_SEED)?,
        dedup,
        out: pick(common.out.clone(), &file, "out", PathBuf::from("out"))?,
    };
    Ok((resolved, file))
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn print_table_summary(what: &str, table: &MetricTable) {
    let all = table.all_row();
    let mut parts = vec![format!("{} records", all.count)];
    if let Some(acc) = all.accuracy {
        parts.push(format!("accuracy {acc:.4}"));
    }
    if let Some(mae) = all.mae_days {
        parts.push(format!("MAE {mae:.2} days"));
    }
    if let Some(d) = all.dls {
        parts.push(format!("mean DLS {d:.4}"));
    }
    println!("{what}: {}", parts.join(", "));
}

// ---------------------------------------------------------------------------
// Commands

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub report: TrainReport,
}

pub fn run_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let (common, file) = resolve_common(&args.common)?;
    let hyper_defaults = TrainHyper::default();
    let hyper = TrainHyper {
        learning_rate: pick(
            args.learning_rate,
            &file,
            "learning-rate",
            hyper_defaults.learning_rate,
        )?,
        beta1: hyper_defaults.beta1,
        beta2: hyper_defaults.beta2,
        epsilon: hyper_defaults.epsilon,
        batch_size: pick(
            args.batch_size,
            &file,
            "batch-size",
            hyper_defaults.batch_size,
        )?,
        max_epochs: pick(
            args.max_epochs,
            &file,
            "max-epochs",
            hyper_defaults.max_epochs,
        )?,
        patience: pick(args.patience, &file, "patience", hyper_defaults.patience)?,
        val_fraction: pick(
            args.val_fraction,
            &file,
            "val-fraction",
            hyper_defaults.val_fraction,
        )?,
        loss_weight: pick(
            args.loss_weight,
            &file,
            "loss-weight",
            hyper_defaults.loss_weight,
        )?,
    };
    let layers = pick(args.layers, &file, "layers", 2)?;
    let shared = pick(args.shared, &file, "shared", 1)?;
    let neurons = pick(args.neurons, &file, "neurons", 100)?;
    let cell = match args.cell {
        Some(c) => c,
        None => match file.get::<String>("cell")?.as_deref() {
            None | Some("lstm") => CellArg::Lstm,
            Some("rnn") => CellArg::Rnn,
            Some(other) => return Err(Error::InvalidConfig(format!("unknown cell {other:?}"))),
        },
    };

    let log = load_log(&common.log_path, common.dedup)?;
    let (train_half, _test_half) = log.split_chronological(common.split)?;
    // the model's alphabet and normalizer come from the training split only
    let train_log = EventLog::from_traces(train_half.traces)?;

    let alphabet = train_log.index.len();
    let config = NetworkConfig {
        total_layers: layers,
        shared_layers: shared,
        neurons,
        input_dim: alphabet + 3,
        activity_out_dim: alphabet + 1,
        cell_kind: cell.into(),
        seed: common.seed,
    };
    let (params, norm, report) = train(&train_log, &config, &hyper)?;
    let model = Model::new(config, params, norm, train_log.index.clone())?;

    let checkpoint_path = {
        fs::create_dir_all(&common.out)?;
        let path = common.out.join("model.json");
        checkpoint::save(&Checkpoint::from_model(&model), &path)?;
        path
    };
    let report_path = write_output(&common.out, "train_report.csv", &report.to_csv())?;

    println!(
        "trained {} epochs (best {}), final val loss {:.6}, wall clock {:.1}s",
        report.stopped_epoch,
        report.best_epoch,
        report.epochs[report.best_epoch.saturating_sub(1)].val_loss,
        report.wall_clock_secs
    );
    println!("wrote {}", checkpoint_path.display());
    println!("wrote {}", report_path.display());
    Ok(TrainOutcome {
        checkpoint_path,
        report_path,
        report,
    })
}

/// Test split plus the training half it was split from (already deduped).
fn load_split(common: &ResolvedCommon) -> Result<(EventLog, EventLog)> {
    let log = load_log(&common.log_path, common.dedup)?;
    log.split_chronological(common.split)
}

pub fn run_eval_next(args: &EvalNextArgs) -> Result<(MetricTable, PathBuf)> {
    let (common, file) = resolve_common(&args.common)?;
    let model_path = required_path(args.model.clone(), &file, "model")?;
    let prefixes = match &args.prefixes {
        Some(raw) => parse_prefix_list(raw)?,
        None => match file.get::<String>("prefixes")? {
            Some(raw) => parse_prefix_list(&raw)?,
            None => vec![2, 4, 6],
        },
    };
    let model = checkpoint::load_model(&model_path)?;
    let (_train, test) = load_split(&common)?;

    let records = collect_next_records(&model, &test)?;
    let table = aggregate(&records, &prefixes)?;
    let path = write_output(&common.out, "eval_next.csv", &table.to_csv())?;
    print_table_summary("next-event", &table);
    println!("wrote {}", path.display());
    Ok((table, path))
}

pub struct SuffixOutcome {
    pub table: MetricTable,
    pub mean_dls: f64,
    pub truncated_fraction: f64,
    pub csv_path: PathBuf,
}

pub fn run_eval_suffix(args: &EvalSuffixArgs) -> Result<SuffixOutcome> {
    let (common, file) = resolve_common(&args.common)?;
    let model_path = required_path(args.model.clone(), &file, "model")?;
    let model = checkpoint::load_model(&model_path)?;
    let (train_half, test) = load_split(&common)?;
    let cap = (SUFFIX_CAP_FACTOR * train_half.longest_trace()).max(1);

    let (records, truncated) = collect_suffix_records(&model, &test, cap)?;
    let table = aggregate(&records, &observed_prefixes(&records))?;
    let mean = table.all_row().dls.ok_or(Error::EmptyInput("mean_dls"))?;
    let truncated_fraction = truncated as f64 / records.len() as f64;
    let csv_path = write_output(&common.out, "eval_suffix.csv", &table.to_csv())?;
    println!(
        "suffix: {} prefixes, mean DLS {:.4}, truncated rollouts {:.2}% (cap {})",
        records.len(),
        mean,
        100.0 * truncated_fraction,
        cap
    );
    println!("wrote {}", csv_path.display());
    Ok(SuffixOutcome {
        table,
        mean_dls: mean,
        truncated_fraction,
        csv_path,
    })
}

pub fn run_eval_remaining(args: &EvalRemainingArgs) -> Result<(MetricTable, PathBuf)> {
    let (common, file) = resolve_common(&args.common)?;
    let (train_half, test) = load_split(&common)?;

    let records = if let Some(kind) = args.abstraction {
        let ts = build_ts_with_stat(&train_half, kind.into(), AnnotationStat::Mean)?;
        collect_remaining_records(&test, |prefix| {
            Ok(ts_predict(&ts, prefix, TsTarget::Remaining))
        })?
    } else {
        let model_path = required_path(args.model.clone(), &file, "model")?;
        let model = checkpoint::load_model(&model_path)?;
        let cap = (SUFFIX_CAP_FACTOR * train_half.longest_trace()).max(1);
        collect_remaining_records(&test, |prefix| predict_remaining_time(&model, prefix, cap))?
    };
    let table = aggregate(&records, &observed_prefixes(&records))?;
    let path = write_output(&common.out, "eval_remaining.csv", &table.to_csv())?;
    print_table_summary("remaining-time", &table);
    println!("wrote {}", path.display());
    Ok((table, path))
}

pub fn run_baseline(args: &BaselineArgs) -> Result<(MetricTable, PathBuf)> {
    let (common, file) = resolve_common(&args.common)?;
    let abstraction: Abstraction = match args.abstraction {
        Some(a) => a.into(),
        None => match file.get::<String>("abstraction")?.as_deref() {
            Some("set") => Abstraction::Set,
            Some("bag") => Abstraction::Bag,
            Some("sequence") => Abstraction::Sequence,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown abstraction {other:?}"
                )))
            }
            None => {
                return Err(Error::InvalidConfig(
                    "missing required option --abstraction".into(),
                ))
            }
        },
    };
    let target = args.target.unwrap_or(TargetArg::NextDelta);
    let stat = match args.stat.unwrap_or(StatArg::Mean) {
        StatArg::Mean => AnnotationStat::Mean,
        StatArg::Median => AnnotationStat::Median,
    };
    let (train_half, test) = load_split(&common)?;
    let ts = build_ts_with_stat(&train_half, abstraction, stat)?;

    let (records, displayed) = match target {
        TargetArg::NextDelta => {
            let records = collect_ts_next_records(&ts, &test);
            let displayed = match &args.prefixes {
                Some(raw) => parse_prefix_list(raw)?,
                None => match file.get::<String>("prefixes")? {
                    Some(raw) => parse_prefix_list(&raw)?,
                    None => vec![2, 4, 6],
                },
            };
            (records, displayed)
        }
        TargetArg::Remaining => {
            let records = collect_remaining_records(&test, |prefix| {
                Ok(ts_predict(&ts, prefix, TsTarget::Remaining))
            })?;
            let displayed = observed_prefixes(&records);
            (records, displayed)
        }
    };
    let table = aggregate(&records, &displayed)?;
    let name = format!(
        "baseline_{}_{}.csv",
        match abstraction {
            Abstraction::Set => "set",
            Abstraction::Bag => "bag",
            Abstraction::Sequence => "sequence",
        },
        match target {
            TargetArg::NextDelta => "next_delta",
            TargetArg::Remaining => "remaining",
        }
    );
    let path = write_output(&common.out, &name, &table.to_csv())?;
    print_table_summary("baseline", &table);
    println!("wrote {}", path.display());
    Ok((table, path))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(&args).map(|_| ()),
        Command::EvalNext(args) => run_eval_next(&args).map(|_| ()),
        Command::EvalSuffix(args) => run_eval_suffix(&args).map(|_| ()),
        Command::EvalRemaining(args) => run_eval_remaining(&args).map(|_| ()),
        Command::Baseline(args) => run_baseline(&args).map(|_| ()),
    }
}

/// 2 for usage and input problems, 1 for runtime failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::EmptyLog
        | Error::EmptyInput(_)
        | Error::InvalidFraction(_)
        | Error::TooFewTraces(_)
        | Error::NoTimeGaps
        | Error::ZeroMeanDelta
        | Error::UnknownActivity(_)
        | Error::PrefixOutOfRange { .. }
        | Error::InvalidConfig(_)
        | Error::CheckpointVersion(_)
        | Error::ReadInput { .. }
        | Error::MalformedInput { .. } => 2,
        Error::DimensionMismatch { .. }
        | Error::NonFiniteGradient
        | Error::Io(_)
        | Error::Json(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_config_parses_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\nsplit = 0.5\nseed=7\n\nlayers = 3\n").unwrap();
        let file = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(file.get::<f64>("split").unwrap(), Some(0.5));
        assert_eq!(file.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(file.get::<usize>("layers").unwrap(), Some(3));
        assert_eq!(file.get::<usize>("missing").unwrap(), None);

        // a flag beats the file, the file beats the default
        assert_eq!(pick(Some(0.9), &file, "split", 0.1).unwrap(), 0.9);
        assert_eq!(pick(None, &file, "split", 0.1).unwrap(), 0.5);
        assert_eq!(pick::<f64>(None, &file, "nope", 0.1).unwrap(), 0.1);
    }

    #[test]
    fn file_config_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "this has no equals sign\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());

        let path2 = dir.path().join("badvalue.conf");
        fs::write(&path2, "split = banana\n").unwrap();
        let file = FileConfig::load(Some(&path2)).unwrap();
        assert!(file.get::<f64>("split").is_err());
    }

    #[test]
    fn prefix_list_parsing() {
        assert_eq!(parse_prefix_list("2,4,6").unwrap(), vec![2, 4, 6]);
        assert_eq!(parse_prefix_list("2, 10 ,20").unwrap(), vec![2, 10, 20]);
        assert!(parse_prefix_list("2,x").is_err());
    }

    #[test]
    fn exit_codes_split_input_from_runtime() {
        assert_eq!(exit_code(&Error::EmptyLog), 2);
        assert_eq!(
            exit_code(&Error::ReadInput {
                path: "nope.csv".into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing"),
            }),
            2
        );
        assert_eq!(exit_code(&Error::NonFiniteGradient), 1);
    }
}
