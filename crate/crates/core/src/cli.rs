//! The `cdf` command-line tool.
//!
//! Every command writes its artifacts into an output directory together with
//! a manifest listing the invocation and the SHA-256 of each artifact, so the
//! run can be repeated and checked with `cdf replay`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::Linkage;
use crate::benchmark::BenchmarkConfig;
use crate::clustering::Algorithm;
use crate::detection::{minimal_cpd, run_anomaly_identification, CpdResult};
use crate::error::{CdfError, Result};
use crate::pipeline::{fit_pipeline, run_ablation, run_comparison, PipelineModel, Variant};
use crate::telemetry::{generate_dataset, generate_labeled, FeatureMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "cdf",
    version,
    about = "Pump-current drift detection for EDFA telemetry"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Benchmark definition (JSON); the bundled one when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs and the run manifest.
    #[arg(long, global = true, env = "CDF_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic telemetry as CSV.
    Generate(GenerateArgs),
    /// Fit a pipeline on the benchmark (or a labeled CSV) and save it.
    Train(TrainArgs),
    /// Apply a saved pipeline to a telemetry CSV.
    Predict(PredictArgs),
    /// Averaged error for every pipeline variant and algorithm.
    Ablate(AblateArgs),
    /// Baseline clusterers against the detection pipeline.
    Compare(CompareArgs),
    /// Minimal detectable drift per algorithm.
    Cpd(CpdArgs),
    /// Classify drifting inspection streams.
    Detect(DetectArgs),
    /// Re-run a command from its manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output CSV file, relative to the output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub constants: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mix in drifted samples and add a `label` column.
    #[arg(long)]
    pub labeled: bool,
}

#[derive(Debug, Args)]
pub struct PipelineChoice {
    #[arg(long, default_value = "EA_PCA")]
    pub variant: Variant,
    #[arg(long, default_value = "PossCP")]
    pub algorithm: Algorithm,
    /// Clustering seed; the benchmark run seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub pipeline: PipelineChoice,
    /// Labeled telemetry CSV instead of the benchmark set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Smoothing window for OK / nOK decisions over the rows in order.
    #[arg(long, default_value_t = 40)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub linkage: Option<Linkage>,
}

#[derive(Debug, Args)]
pub struct CpdArgs {
    #[arg(long, default_value = "EA_PCA")]
    pub variant: Variant,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub pipeline: PipelineChoice,
    /// Use a saved pipeline instead of fitting one.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, without the output directory.
    pub args: Vec<String>,
    /// Files read by the run, with their digests at run time.
    pub inputs: Vec<FileDigest>,
    /// Artifacts relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Collects artifacts of one command run.
struct Run {
    out_dir: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            inputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn read_input(&mut self, path: &Path) -> Result<String> {
        self.inputs.push(path.to_path_buf());
        Ok(fs::read_to_string(path)?)
    }

    fn finish(self, command: &str, args: Vec<String>) -> Result<RunManifest> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.to_string_lossy().into_owned(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        let outputs = self
            .outputs
            .iter()
            .map(|name| {
                Ok(FileDigest {
                    path: name.clone(),
                    sha256: sha256_file(&self.out_dir.join(name))?,
                })
            })
            .collect::<Result<_>>()?;
        let manifest = RunManifest {
            tool: "cdf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(
            self.out_dir.join(format!("{command}{MANIFEST_SUFFIX}")),
            text,
        )?;
        Ok(manifest)
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Predict(_) => "predict",
        Command::Ablate(_) => "ablate",
        Command::Compare(_) => "compare",
        Command::Cpd(_) => "cpd",
        Command::Detect(_) => "detect",
        Command::Replay(_) => "replay",
    }
}

/// Drops `--out-dir` so a replay can redirect outputs.
fn strip_out_dir(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out-dir" {
            skip = true;
        } else if !a.starts_with("--out-dir=") {
            kept.push(a.clone());
        }
    }
    kept
}

fn load_benchmark(run: &mut Run, config: &Option<PathBuf>) -> Result<BenchmarkConfig> {
    match config {
        Some(path) => {
            let text = run.read_input(path)?;
            BenchmarkConfig::from_json(&text)
        }
        None => Ok(BenchmarkConfig::bundled()),
    }
}

fn read_matrix(run: &mut Run, path: &Path) -> Result<FeatureMatrix> {
    let text = run.read_input(path)?;
    FeatureMatrix::read_csv(text.as_bytes())
}

fn split_labels(matrix: &FeatureMatrix, column: &str) -> Result<(FeatureMatrix, Vec<u8>)> {
    let j = matrix
        .column_index(column)
        .ok_or_else(|| CdfError::MissingFeature(format!("label column `{column}`")))?;
    let labels = matrix
        .column(j)
        .iter()
        .map(|&x| {
            if x == 0.0 {
                Ok(0)
            } else if x == 1.0 {
                Ok(1)
            } else {
                Err(CdfError::InvalidData(format!("label {x} is not 0 or 1")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    let keep: Vec<usize> = (0..matrix.n_features()).filter(|k| *k != j).collect();
    Ok((matrix.select_columns(&keep), labels))
}

fn cmd_generate(run: &mut Run, common: &Common, a: &GenerateArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let mut config = bench.generator.clone();
    if let Some(n) = a.samples {
        config.samples = n;
    }
    if let Some(n) = a.features {
        config.features = n;
    }
    if let Some(n) = a.constants {
        config.constant_features = n;
    }
    if let Some(x) = a.noise {
        config.noise_level = x;
    }
    let name = a.out.to_string_lossy().into_owned();
    let matrix = if a.labeled {
        let set = generate_labeled(&config, &bench.labels, a.seed)?;
        let mut names = set.matrix.names().to_vec();
        names.push("label".into());
        let mut values = ndarray::Array2::zeros((set.matrix.n_samples(), names.len()));
        values
            .slice_mut(ndarray::s![.., ..names.len() - 1])
            .assign(set.matrix.values());
        for (i, l) in set.labels.iter().enumerate() {
            values[[i, names.len() - 1]] = f64::from(*l);
        }
        FeatureMatrix::new(names, values)?
    } else {
        generate_dataset(&config, a.seed)?
    };
    run.write_csv(&name, |buf| matrix.write_csv(buf))?;
    run.write_json(&format!("{name}.config.json"), &config)?;
    eprintln!(
        "wrote {} x {} to {name}",
        matrix.n_samples(),
        matrix.n_features()
    );
    Ok(())
}

fn fit_from_args(
    run: &mut Run,
    bench: &BenchmarkConfig,
    choice: &PipelineChoice,
    data: Option<(&Path, &str)>,
) -> Result<crate::pipeline::PipelineFit> {
    let seed = choice.seed.unwrap_or(bench.run_seed);
    let (matrix, labels) = match data {
        Some((path, column)) => split_labels(&read_matrix(run, path)?, column)?,
        None => {
            let set = bench.dataset()?;
            (set.matrix, set.labels)
        }
    };
    fit_pipeline(
        &matrix,
        &labels,
        choice.variant,
        choice.algorithm,
        &bench.stages,
        seed,
    )
}

fn cmd_train(run: &mut Run, common: &Common, a: &TrainArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let fit = fit_from_args(
        run,
        &bench,
        &a.pipeline,
        a.data.as_deref().map(|p| (p, a.label_column.as_str())),
    )?;
    let mut model = fit.model.to_json()?;
    model.push('\n');
    run.write("model.json", model.as_bytes())?;
    run.write_json("evaluation.json", &fit.evaluation)?;
    run.write_csv("trace.csv", |buf| fit.trace.write_csv(buf))?;
    run.write_json("trace.json", &fit.trace)?;
    eprintln!(
        "{} {}: train MSE {:.4}, test MSE {:.4}, {} iterations",
        a.pipeline.variant,
        a.pipeline.algorithm,
        fit.evaluation.mse_train,
        fit.evaluation.mse_test,
        fit.trace.iterations_used
    );
    Ok(())
}

fn cmd_predict(run: &mut Run, a: &PredictArgs) -> Result<()> {
    let model = PipelineModel::from_json(&run.read_input(&a.model)?)?;
    let data = read_matrix(run, &a.data)?;
    let memberships = model.memberships(&data)?;
    let raw = model.classify(&data)?;
    let verdict = crate::detection::DetectionVerdict::from_raw(raw, a.window)?;
    run.write_csv("predictions.csv", |buf| {
        let mut out = csv::Writer::from_writer(buf);
        let m = memberships.weights.ncols();
        let mut header = vec!["sample".to_string()];
        header.extend((0..m).map(|j| format!("w{j}")));
        header.extend(["anomaly".into(), "smoothed".into(), "state".into()]);
        out.write_record(&header)?;
        for (i, row) in memberships.weights.rows().into_iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|w| w.to_string()));
            rec.push(verdict.raw[i].to_string());
            rec.push(verdict.smoothed[i].to_string());
            rec.push(verdict.states[i].to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Predictions<'a> {
        memberships: &'a ndarray::Array2<f64>,
        verdict: &'a crate::detection::DetectionVerdict,
    }
    run.write_json(
        "predictions.json",
        &Predictions {
            memberships: &memberships.weights,
            verdict: &verdict,
        },
    )?;
    eprintln!(
        "{} samples, transition at {:?}",
        data.n_samples(),
        verdict.transition_index
    );
    Ok(())
}

fn cmd_ablate(run: &mut Run, common: &Common, a: &AblateArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let set = bench.dataset()?;
    let table = run_ablation(
        &set.matrix,
        &set.labels,
        &Variant::ALL,
        &Algorithm::ALL,
        &bench.stages,
        a.runs.unwrap_or(bench.runs),
        a.seed.unwrap_or(bench.run_seed),
    )?;
    run.write_csv("ablation.csv", |buf| table.write_csv(buf))?;
    run.write_csv("traces.csv", |buf| table.write_traces_csv(buf))?;
    run.write_json("ablation.json", &table)?;
    for r in &table.rows {
        eprintln!(
            "{:7} {:7} test MSE {:.4} ± {:.4}",
            r.config.name(),
            r.algorithm.name(),
            r.mse_test,
            r.std
        );
    }
    Ok(())
}

fn cmd_compare(run: &mut Run, common: &Common, a: &CompareArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let set = bench.dataset()?;
    let mut baselines = bench.baselines.clone();
    if let Some(l) = a.linkage {
        baselines.linkage = l;
    }
    let table = run_comparison(
        &set.matrix,
        &set.labels,
        &bench.stages,
        &baselines,
        Variant::EaPca,
        Algorithm::PossCp,
        a.repeats.unwrap_or(bench.repeats),
        a.seed.unwrap_or(bench.run_seed),
    )?;
    run.write_csv("compare.csv", |buf| table.write_csv(buf))?;
    run.write_json("compare.json", &table)?;
    for r in &table.rows {
        eprintln!("{:12} test MSE {:.4} ± {:.4}", r.method, r.mse_test, r.std);
    }
    Ok(())
}

fn write_cpd_csv(results: &[CpdResult], buf: &mut Vec<u8>) -> Result<()> {
    let mut out = csv::Writer::from_writer(buf);
    out.write_record(["algorithm", "minimal_ratio", "detected"])?;
    for r in results {
        out.write_record([
            r.algorithm.name().to_string(),
            r.minimal_ratio.map(|x| x.to_string()).unwrap_or_default(),
            r.detected().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_cpd(run: &mut Run, common: &Common, a: &CpdArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let set = bench.dataset()?;
    let seed = a.seed.unwrap_or(bench.run_seed);
    let mut results = Vec::new();
    for algorithm in Algorithm::ALL {
        let fit = fit_pipeline(
            &set.matrix,
            &set.labels,
            a.variant,
            algorithm,
            &bench.stages,
            seed,
        )?;
        let r = minimal_cpd(&fit.model, &bench.generator, &bench.cpd)?;
        match r.minimal_ratio {
            Some(g) => eprintln!("{algorithm:7} minimal detected drift {:.1} %", 100.0 * g),
            None => eprintln!("{algorithm:7} no drift on the grid detected"),
        }
        results.push(r);
    }
    run.write_csv("cpd.csv", |buf| write_cpd_csv(&results, buf))?;
    run.write_csv("cpd_points.csv", |buf| {
        let mut out = csv::Writer::from_writer(buf);
        out.write_record(["algorithm", "ratio", "not_ok_fraction", "detected"])?;
        for r in &results {
            for p in &r.points {
                out.write_record([
                    r.algorithm.name().to_string(),
                    p.ratio.to_string(),
                    p.not_ok_fraction.to_string(),
                    p.detected.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    run.write_json("cpd.json", &results)?;
    Ok(())
}

fn cmd_detect(run: &mut Run, common: &Common, a: &DetectArgs) -> Result<()> {
    let bench = load_benchmark(run, &common.config)?;
    let model = match &a.model {
        Some(path) => PipelineModel::from_json(&run.read_input(path)?)?,
        None => fit_from_args(run, &bench, &a.pipeline, None)?.model,
    };
    let report = run_anomaly_identification(&model, &bench.generator, &bench.streams)?;
    run.write_csv("curves.csv", |buf| report.write_curves_csv(buf))?;
    run.write_csv("transitions.csv", |buf| report.write_transitions_csv(buf))?;
    for o in &report.outcomes {
        let name = format!("verdicts/rate_{}.csv", o.rate);
        run.write_csv(&name, |buf| o.verdict.write_csv(buf))?;
        eprintln!(
            "rate {:>4}: transition {:?}",
            o.rate, o.verdict.transition_index
        );
    }
    run.write_json("detect.json", &report)?;
    Ok(())
}

fn dispatch(cli: &Cli, run: &mut Run) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(run, &cli.common, a),
        Command::Train(a) => cmd_train(run, &cli.common, a),
        Command::Predict(a) => cmd_predict(run, a),
        Command::Ablate(a) => cmd_ablate(run, &cli.common, a),
        Command::Compare(a) => cmd_compare(run, &cli.common, a),
        Command::Cpd(a) => cmd_cpd(run, &cli.common, a),
        Command::Detect(a) => cmd_detect(run, &cli.common, a),
        Command::Replay(_) => unreachable!("replay is handled separately"),
    }
}

/// Runs one command and writes its manifest.
fn execute(cli: &Cli, args: Vec<String>) -> Result<RunManifest> {
    let mut run = Run::new(&cli.common.out_dir)?;
    dispatch(cli, &mut run)?;
    run.finish(command_name(&cli.command), args)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub command: String,
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-executes the manifest's command into `out_dir` and compares digests.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplayReport> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    for input in &manifest.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CdfError::InvalidData(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }
    let mut argv = vec![
        "cdf".to_string(),
        "--out-dir".to_string(),
        out_dir.to_string_lossy().into_owned(),
    ];
    argv.extend(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CdfError::InvalidConfig(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CdfError::InvalidConfig(
            "a replay manifest cannot be replayed".into(),
        ));
    }
    let fresh = execute(&cli, manifest.args.clone())?;
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    for recorded in &manifest.outputs {
        match fresh.outputs.iter().find(|f| f.path == recorded.path) {
            Some(f) if f.sha256 == recorded.sha256 => matched.push(recorded.path.clone()),
            _ => mismatched.push(recorded.path.clone()),
        }
    }
    for f in &fresh.outputs {
        if !manifest.outputs.iter().any(|r| r.path == f.path) {
            mismatched.push(f.path.clone());
        }
    }
    Ok(ReplayReport {
        command: manifest.command,
        matched,
        mismatched,
    })
}

/// Parses `argv` (program name first), runs, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let outcome = match &cli.command {
        Command::Replay(r) => replay(&r.manifest, &cli.common.out_dir).map(|report| {
            let mut stdout = std::io::stdout();
            for p in &report.matched {
                let _ = writeln!(stdout, "match    {p}");
            }
            for p in &report.mismatched {
                let _ = writeln!(stdout, "MISMATCH {p}");
            }
            report.is_exact()
        }),
        _ => execute(&cli, strip_out_dir(&args)).map(|m| {
            eprintln!("manifest: {} outputs", m.outputs.len());
            true
        }),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
