//! The `confcal` command line.
//!
//! Every failure is reported on stderr as a single `ERR <code>: <message>`
//! line; exit codes are 2 for usage errors, 3 for data errors and 4 for
//! numerical errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines;
use crate::confcalib::{FitConfig, DEFAULT_LAMBDA};
use crate::dataset::{Dataset, FieldSpec};
use crate::error::{CalibError, Result};
use crate::fusion::{fit_weights, Objective, DEFAULT_STEP};
use crate::harness::{self, StreamConfig, SynthConfig, WeightPolicy};
use crate::io::{self, Columns, Format, ModelBody, ModelFile};
use crate::metrics::{self, EvalConfig};
use crate::pipeline::{Pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "confcal", version, about = "Confidence-aware multi-field probability calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a calibrator and write a model file.
    Fit(FitArgs),
    /// Grid-search fusion weights and rewrite the model file in place.
    Weights(WeightsArgs),
    /// Append a `calibrated` column to the input rows.
    Apply(ApplyArgs),
    /// Compute calibration and ranking metrics.
    Eval(EvalArgs),
    /// Generate a synthetic miscalibrated dataset.
    Synth(SynthArgs),
    /// Replay a timestamped log with periodic refits.
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// `csv` or `jsonl`; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
}

impl InputArgs {
    fn format(&self) -> Result<Option<Format>> {
        self.format.as_deref().map(Format::parse).transpose()
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    fields: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// confcalib, naive, platt, histbin or isotonic.
    #[arg(long, default_value = "confcalib")]
    method: String,
    /// Existing model to recalibrate: the new stage is fitted on its output
    /// and appended to it.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "multi-field-rce")]
    objective: String,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Column holding the scores to evaluate.
    #[arg(long, default_value = "prediction")]
    pred_col: String,
    #[arg(long)]
    fields: String,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    ece_bins: usize,
    #[arg(long, default_value_t = metrics::DEFAULT_SHUFFLES)]
    mvce_shuffles: usize,
    #[arg(long, default_value_t = metrics::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value_t = 1800)]
    refit_interval: i64,
    #[arg(long, default_value_t = 86400)]
    window: i64,
    #[arg(long)]
    fields: String,
    #[arg(long, default_value_t = 1)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Grid-search weights at every refit against this objective.
    #[arg(long)]
    objective: Option<String>,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    ece_bins: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing human-readable output to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                write!(stdout, "{e}")?;
                return Ok(());
            }
            _ => return Err(CalibError::Config(first_line(&e.to_string()))),
        },
    };
    match cli.command {
        Command::Fit(a) => fit(a, stdout),
        Command::Weights(a) => weights(a, stdout),
        Command::Apply(a) => apply(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::Synth(a) => synth(a, stdout),
        Command::Stream(a) => stream(a, stdout),
    }
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string()
}

/// Process entry point: runs the CLI and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(args, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ERR {}: {}", e.code(), first_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn read(input: &InputArgs, spec: &FieldSpec, columns: &Columns) -> Result<(Dataset, io::Records)> {
    io::read_dataset(&input.input, input.format()?, spec, columns)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn fit(a: FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let need_bins = || a.bins.ok_or_else(|| CalibError::Config(format!("--bins is required for method {}", a.method)));
    let spec = match &a.fields {
        Some(f) => FieldSpec::parse_list(f)?,
        None if a.method == "confcalib" => return Err(CalibError::Config("--fields is required for confcalib".into())),
        None => FieldSpec::empty(),
    };
    let base = a.base.as_deref().map(ModelFile::load).transpose()?.map(|f| f.pipeline());
    let mut needed: Vec<String> = spec.names().to_vec();
    if let Some(base) = &base {
        for f in pipeline_fields(base)?.names() {
            if !needed.contains(f) {
                needed.push(f.clone());
            }
        }
    }
    let read_spec = if needed.is_empty() { FieldSpec::empty() } else { FieldSpec::new(needed)? };
    let (mut data, _) = read(&a.input, &read_spec, &Columns::default())?;
    if let Some(base) = &base {
        data = base.apply(&data)?;
    }
    let stage = match a.method.as_str() {
        "confcalib" => {
            let model = crate::ConfCalibModel::fit(&data, &spec, &FitConfig::new(need_bins()?, a.lambda))?;
            Stage::ConfCalib(model)
        }
        "naive" => Stage::Baseline(baselines::fit_naive(&data)?),
        "platt" => Stage::Baseline(baselines::fit_platt(&data)?),
        "histbin" => Stage::Baseline(baselines::fit_histbin(&data, need_bins()?)?),
        "isotonic" => Stage::Baseline(baselines::fit_isotonic(&data)?),
        other => return Err(CalibError::Config(format!("unknown method {other:?}"))),
    };
    let kind = stage.kind();
    let file = match base {
        Some(mut base) => {
            base.stages.push(stage);
            ModelFile::new(ModelBody::Pipeline(base.stages))
        }
        None => ModelFile::new(ModelBody::Stage(stage)),
    };
    file.save(&a.out)?;
    writeln!(stdout, "fitted {kind} on {} samples -> {} ({})", data.len(), a.out.display(), file.kind())?;
    Ok(())
}

/// Union of the fields any stage of `pipeline` needs, in first-seen order.
fn pipeline_fields(pipeline: &Pipeline) -> Result<FieldSpec> {
    let mut names: Vec<String> = Vec::new();
    for stage in &pipeline.stages {
        if let Stage::ConfCalib(m) = stage {
            for f in m.spec().names() {
                if !names.contains(f) {
                    names.push(f.clone());
                }
            }
        }
    }
    if names.is_empty() {
        Ok(FieldSpec::empty())
    } else {
        FieldSpec::new(names)
    }
}

fn weights(a: WeightsArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let mut pipeline = file.pipeline();
    let objective = Objective::parse(&a.objective)?;
    let spec = pipeline_fields(&pipeline)?;
    let (data, _) = read(&a.input, &spec, &Columns::default())?;
    let Some(Stage::ConfCalib(model)) = pipeline.stages.last() else {
        return Err(CalibError::Config("the last model stage must be confcalib to fit weights".into()));
    };
    let inner = Pipeline { stages: pipeline.stages[..pipeline.stages.len() - 1].to_vec() };
    let transformed = inner.apply(&data)?;
    let search = fit_weights(model, &transformed, &objective, a.step)?;
    let mut model = model.clone();
    model.set_weights(search.best.clone())?;
    *pipeline.stages.last_mut().expect("checked above") = Stage::ConfCalib(model);
    let body = match file.body {
        ModelBody::Stage(_) => ModelBody::Stage(pipeline.stages.remove(0)),
        ModelBody::Pipeline(_) => ModelBody::Pipeline(pipeline.stages),
    };
    ModelFile::new(body).save(&a.model)?;
    writeln!(
        stdout,
        "weights {:?} ({} = {}) over {} candidates",
        search.best.weights,
        a.objective,
        search.best_score,
        search.candidates.len()
    )?;
    Ok(())
}

fn apply(a: ApplyArgs, stdout: &mut dyn Write) -> Result<()> {
    let pipeline = ModelFile::load(&a.model)?.pipeline();
    let spec = pipeline_fields(&pipeline)?;
    let (data, records) = read(&a.input, &spec, &Columns::default())?;
    let calibrated = pipeline.calibrate(&data)?;
    io::write_with_column(&records, "calibrated", &calibrated, create(&a.out)?)?;
    writeln!(stdout, "calibrated {} rows -> {}", data.len(), a.out.display())?;
    Ok(())
}

fn eval(a: EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = FieldSpec::parse_list(&a.fields)?;
    let columns = Columns { prediction: a.pred_col.clone(), ..Columns::default() };
    let (data, _) = read(&a.input, &spec, &columns)?;
    let config = EvalConfig {
        fields: spec.names().to_vec(),
        ece_bins: a.ece_bins,
        mvce_shuffles: a.mvce_shuffles,
        seed: a.seed,
    };
    let report = metrics::evaluate(&data, &config)?;
    if let Some(path) = &a.report {
        let mut text = report.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
    }
    write!(stdout, "{}", report.to_table())?;
    Ok(())
}

fn synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let config: SynthConfig = serde_json::from_str(&fs::read_to_string(&a.config)?)?;
    let data = harness::generate(&config)?;
    let parts = harness::split(&data, config.split);
    fs::create_dir_all(&a.out_dir)?;
    io::write_dataset_csv(&parts.validation.dataset, create(&a.out_dir.join("validation.csv"))?)?;
    io::write_dataset_csv(&parts.test.dataset, create(&a.out_dir.join("test.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(&a.out_dir.join("truth.csv"))?);
    w.write_record(["split", "row", "truth"])?;
    for (name, part) in [("validation", &parts.validation), ("test", &parts.test)] {
        for (row, q) in part.truth.iter().enumerate() {
            w.write_record([name, &row.to_string(), &io::format_prob(*q)])?;
        }
    }
    w.flush()?;
    writeln!(
        stdout,
        "wrote {} validation and {} test samples to {}",
        parts.validation.dataset.len(),
        parts.test.dataset.len(),
        a.out_dir.display()
    )?;
    Ok(())
}

fn stream(a: StreamArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = FieldSpec::parse_list(&a.fields)?;
    let format = a.format.as_deref().map(Format::parse).transpose()?;
    let (log, _) = io::read_dataset(&a.log, format, &spec, &Columns::default())?;
    let mut config = StreamConfig::new(a.refit_interval, a.window, spec, FitConfig::new(a.bins, a.lambda));
    config.ece_bins = a.ece_bins;
    if let Some(obj) = &a.objective {
        config.weights = WeightPolicy::Grid { objective: Objective::parse(obj)?, step: a.step };
    }
    let report = harness::simulate_stream(&log, &config)?;
    report.write_csv(create(&a.out)?)?;
    writeln!(
        stdout,
        "{} intervals, {} refits -> {}",
        report.intervals.len(),
        report.refits,
        a.out.display()
    )?;
    Ok(())
}
