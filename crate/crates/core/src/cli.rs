//! Command-line frontend. Exit codes: 0 success, 1 validation or usage
//! error, 2 runtime error. Progress goes to standard error; data only to
//! files.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataset::{self, Cohort, DatasetError, SynthSpec};
use crate::encoder::{self, EncoderError};
use crate::grouping::{self, GroupingError, GroupingRequest};
use crate::influence::{self, FindingsConfig, InfluenceError, InfluenceReport};
use crate::trainer::{self, TrainConfig, TrainError};

#[derive(Parser)]
#[command(
    name = "rating-influence",
    version,
    about = "Questionnaire rating-profile analysis: grouping tests, image \
             encoding, classifier training, influence reports"
)]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a cohort CSV against the schema.
    Validate { cohort: PathBuf },
    /// Generate a synthetic cohort CSV from a sampling spec.
    Synth {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Correlation matrix and per-grouping test grids, no training.
    Stats {
        cohort: PathBuf,
        /// Output directory for the CSV grids.
        #[arg(short, long)]
        output: PathBuf,
        /// Grouping config JSON; defaults to the built-in thirteen.
        #[arg(long)]
        groupings: Option<PathBuf>,
    },
    /// Encode rating profiles into labeled grayscale images.
    Encode {
        cohort: PathBuf,
        /// Grouping config JSON with exactly one entry.
        #[arg(long)]
        grouping: PathBuf,
        /// Output directory; images land in per-label subdirectories.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train the classifier over an exported image directory.
    Train {
        images: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Metrics JSON output path.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Full pipeline: tests, per-grouping training, report bundle.
    Analyze {
        cohort: PathBuf,
        /// Grouping config JSON; defaults to the built-in thirteen.
        #[arg(long)]
        groupings: Option<PathBuf>,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequences: Option<usize>,
        /// Findings flag threshold on delta.
        #[arg(long, default_value_t = 0.02)]
        delta_flag: f64,
        /// Significant statements listed per finding.
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Re-render the text/CSV bundle from an existing report.json.
    Report { dir: PathBuf },
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        CliError::Validation(e.to_string())
    }
}

impl From<GroupingError> for CliError {
    fn from(e: GroupingError) -> CliError {
        CliError::Validation(e.to_string())
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> CliError {
        match e {
            EncoderError::BadPgm(_) => CliError::Validation(e.to_string()),
            EncoderError::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> CliError {
        match e {
            TrainError::Nn(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InfluenceError> for CliError {
    fn from(e: InfluenceError) -> CliError {
        match e {
            InfluenceError::Train(t) => t.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
        if let Err(e) = pool {
            eprintln!("error: cannot configure {} threads: {e}", cli.threads);
            return 2;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

/// Input files that fail to open or parse are the caller's problem
/// (validation); failures writing our own outputs are runtime errors.
fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, content: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_cohort(path: &Path) -> Result<Cohort, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut cohort = dataset::parse_cohort(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    cohort.source = path.display().to_string();
    Ok(cohort)
}

fn load_groupings(path: Option<&Path>) -> Result<Vec<GroupingRequest>, CliError> {
    match path {
        None => Ok(grouping::default_groupings()),
        Some(p) => {
            let json = read_input(p)?;
            grouping::parse_grouping_config(&json)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
        }
    }
}

fn load_train_config(
    path: Option<&Path>,
    seed: Option<u64>,
    sequences: Option<usize>,
) -> Result<TrainConfig, CliError> {
    let mut cfg = match path {
        None => TrainConfig::default(),
        Some(p) => {
            let json = read_input(p)?;
            serde_json::from_str(&json)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = sequences {
        cfg.sequences = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Validate { cohort } => {
            let c = load_cohort(&cohort)?;
            eprintln!("ok: {} respondents in {}", c.len(), cohort.display());
            Ok(())
        }
        Command::Synth { spec, output, seed } => {
            let spec_json = read_input(&spec)?;
            let spec = SynthSpec::from_json(&spec_json)?;
            let cohort = dataset::synthesize_cohort(&spec, seed)?;
            if let Some(parent) = output.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
                }
            }
            let file = fs::File::create(&output)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", output.display())))?;
            dataset::write_cohort(&cohort, BufWriter::new(file))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            eprintln!("wrote {} respondents to {}", cohort.len(), output.display());
            Ok(())
        }
        Command::Stats { cohort, output, groupings } => {
            let cohort = load_cohort(&cohort)?;
            let requests = load_groupings(groupings.as_deref())?;
            let (bundle, warnings) = influence::stats_bundle(&cohort, &requests);
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            for (rel, content) in influence::render_stats(&bundle) {
                write_output(&output.join(rel), content.as_bytes())?;
            }
            let json = serde_json::to_string_pretty(&bundle)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_output(&output.join("stats.json"), format!("{json}\n").as_bytes())?;
            eprintln!(
                "wrote test grids for {} groupings to {}",
                bundle.labels.len(),
                output.display()
            );
            Ok(())
        }
        Command::Encode { cohort, grouping, output } => {
            let cohort = load_cohort(&cohort)?;
            let requests = load_groupings(Some(&grouping))?;
            if requests.len() != 1 {
                return Err(CliError::Validation(format!(
                    "encode needs a grouping config with exactly one entry, found {}",
                    requests.len()
                )));
            }
            let g = grouping::apply_request(&cohort, &requests[0])?;
            encoder::export_images(&cohort, &g, &output)?;
            eprintln!(
                "exported {} images across {} labels to {}",
                cohort.len(),
                g.arity,
                output.display()
            );
            Ok(())
        }
        Command::Train { images, config, output, seed, sequences } => {
            let set = encoder::import_images(&images)?;
            let cfg = load_train_config(config.as_deref(), seed, sequences)?;
            eprintln!(
                "training {} sequences on {} images, {} labels",
                cfg.sequences,
                set.len(),
                set.arity
            );
            let result = trainer::run_experiment(&set, &cfg)?;
            let json = serde_json::to_string_pretty(&result)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_output(&output, format!("{json}\n").as_bytes())?;
            eprintln!(
                "mean validation accuracy {:.4} over {} sequences; metrics in {}",
                result.aggregate.val_acc.mean,
                result.aggregate.sequences,
                output.display()
            );
            Ok(())
        }
        Command::Analyze {
            cohort,
            groupings,
            config,
            output,
            seed,
            sequences,
            delta_flag,
            top_k,
        } => {
            let cohort = load_cohort(&cohort)?;
            let requests = load_groupings(groupings.as_deref())?;
            let cfg = load_train_config(config.as_deref(), seed, sequences)?;
            let fcfg = FindingsConfig { delta_flag, top_k };
            eprintln!(
                "analyzing {} groupings, {} sequences each",
                requests.len(),
                cfg.sequences
            );
            let report = influence::build_report(&cohort, &requests, &cfg, &fcfg)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_output(&output.join("report.json"), format!("{json}\n").as_bytes())?;
            for (rel, content) in influence::render_report(&report) {
                write_output(&output.join(rel), content.as_bytes())?;
            }
            eprintln!("report bundle in {}", output.display());
            Ok(())
        }
        Command::Report { dir } => {
            let json = read_input(&dir.join("report.json"))?;
            let report: InfluenceReport = serde_json::from_str(&json)
                .map_err(|e| CliError::Validation(format!("report.json: {e}")))?;
            let files = influence::render_report(&report);
            let count = files.len();
            for (rel, content) in files {
                write_output(&dir.join(rel), content.as_bytes())?;
            }
            eprintln!("re-rendered {count} files in {}", dir.display());
            Ok(())
        }
    }
}
