//! `annorank`: train, apply and evaluate ranking-based box annotation.

mod manifest;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annorank::annotator::{annotate, annotate_fused, annotate_fused_objectness, FusionConfig};
use annorank::baselines::{annotate_with_binary, objectness_baseline};
use annorank::dataio::synth::{synth_generate, OverlapProfile, SynthConfig};
use annorank::dataio::{
    load_dataset_with, model_from_str, save_dataset, save_model, AnyModel, LoadOptions,
};
use annorank::eval::{
    evaluate, fit_method, run_split_protocol, select_c_for_method, CSelection, Fitted, Method,
    ProtocolConfig,
};
use annorank::{AnnotatedImage, AnnotationResult, Error, GtMode, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use manifest::Recorder;

#[derive(Parser)]
#[command(
    name = "annorank",
    version,
    about = "Annotate object locations by transferring a learned region ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Train a ranking model on fully annotated images.
    Train(TrainArgs),
    /// Report the cross-validation score of every C in the grid.
    CrossValidate(CvArgs),
    /// Pick one box per image with a trained model.
    Annotate(AnnotateArgs),
    /// Fuse model scores with external per-candidate scores.
    Fuse(FuseArgs),
    /// Train and apply a comparison method.
    Baseline(BaselineArgs),
    /// Score annotation results against ground truth.
    Evaluate(EvaluateArgs),
    /// Repeated random auxiliary/target class splits.
    SplitProtocol(SplitArgs),
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// Dataset file (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Maximum candidates per image.
    #[arg(long, default_value_t = 100)]
    max_candidates: usize,
}

impl DataArgs {
    fn load(&self) -> Result<Vec<AnnotatedImage>, Error> {
        eprintln!("loading {}", self.data.display());
        let images = load_dataset_with(
            &self.data,
            &LoadOptions {
                max_candidates: self.max_candidates,
            },
        )?;
        eprintln!("{} images", images.len());
        Ok(images)
    }
}

#[derive(Args, Serialize)]
struct SolverArgs {
    /// Regularisation grid searched by cross-validation.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3])]
    c_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    /// Keep at most this many preference pairs per image (seeded subsample).
    #[arg(long)]
    pair_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            c_grid: self.c_grid.clone(),
            folds: self.folds,
            max_iterations: self.max_iterations,
            rel_objective_tolerance: self.rel_tol,
            gradient_tolerance: self.grad_tol,
            pair_cap_per_image: self.pair_cap,
            seed: self.seed,
        }
    }
}

#[derive(Args, Serialize)]
#[group(required = false, multiple = false)]
struct CArgs {
    /// Fixed regularisation weight.
    #[arg(long)]
    c: Option<f64>,
    /// Choose C by cross-validation (the default when --c is absent).
    #[arg(long)]
    cv: bool,
}

impl CArgs {
    fn selection(&self) -> CSelection {
        match self.c {
            Some(c) if !self.cv => CSelection::Fixed(c),
            _ => CSelection::CrossValidate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GtModeArg {
    Exact,
    Approximate,
}

impl From<GtModeArg> for GtMode {
    fn from(m: GtModeArg) -> Self {
        match m {
            GtModeArg::Exact => GtMode::Exact,
            GtModeArg::Approximate => GtMode::Approximate,
        }
    }
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Also write the construction record (true overlaps, ranks, planted weights).
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n_images: usize,
    #[arg(long, default_value_t = 20)]
    candidates: usize,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 0.4)]
    zero_fraction: f64,
    #[arg(long, default_value_t = 1.2)]
    beta_a: f64,
    #[arg(long, default_value_t = 1.5)]
    beta_b: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    c: CArgs,
    #[arg(long, value_enum, default_value_t = GtModeArg::Approximate)]
    gt_mode: GtModeArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = GtModeArg::Approximate)]
    gt_mode: GtModeArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the scores as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AnnotateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Fuse with the candidates' objectness using this model weight.
    #[arg(long)]
    fuse_objectness: Option<f64>,
    /// Results file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct FuseArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// External scores: JSON lines of {"image_id": ..., "scores": [...]}.
    #[arg(long)]
    scores: PathBuf,
    /// Weight of the model score.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BaselineKind {
    Generic,
    Tworank,
    Nonranking,
    Objectness,
}

#[derive(Args, Serialize)]
struct BaselineArgs {
    /// Training images; also annotated unless --target is given.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    kind: BaselineKind,
    /// Images to annotate.
    #[arg(long)]
    target: Option<PathBuf>,
    #[command(flatten)]
    c: CArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Where to save the trained model.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Results file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    results: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Ranking,
    RankingExact,
    Tworank,
    Nonranking,
    Generic,
    Objectness,
    Fused,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    n_aux: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Ranking)]
    method: MethodArg,
    /// Model weight for --method fused.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    c: CArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl MethodArg {
    fn method(self, alpha: f64) -> Method {
        match self {
            MethodArg::Ranking => Method::Ranking {
                gt_mode: GtMode::Approximate,
            },
            MethodArg::RankingExact => Method::Ranking {
                gt_mode: GtMode::Exact,
            },
            MethodArg::Tworank => Method::TwoRank,
            MethodArg::Nonranking => Method::NonRanking,
            MethodArg::Generic => Method::GenericDetector,
            MethodArg::Objectness => Method::Objectness,
            MethodArg::Fused => Method::RankingWithObjectness { alpha },
        }
    }
}

#[derive(Debug)]
enum CliError {
    Data(Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

type CliResult = Result<(), CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_results(path: &Path, results: &[AnnotationResult]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in results {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn load_any_model(path: &Path) -> Result<AnyModel, CliError> {
    Ok(model_from_str(&fs::read_to_string(path)?)?)
}

fn check_model_dim(model: &AnyModel, images: &[AnnotatedImage]) -> Result<(), CliError> {
    if let Some(d) = images.iter().find_map(AnnotatedImage::dim) {
        if d != model.dim() {
            return Err(CliError::Data(Error::InvalidParameter(format!(
                "model dimension {} does not match dataset dimension {d}",
                model.dim()
            ))));
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> CliResult {
    let rec = Recorder::start("synth", a, &[], Some(a.seed));
    let cfg = SynthConfig {
        n_images: a.n_images,
        candidates_per_image: a.candidates,
        dim: a.dim,
        n_classes: a.classes,
        noise_sigma: a.noise_sigma,
        overlap_profile: OverlapProfile {
            zero_fraction: a.zero_fraction,
            beta_a: a.beta_a,
            beta_b: a.beta_b,
            ..OverlapProfile::default()
        },
        hidden_signal_strength: a.signal,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let data = synth_generate(&cfg)?;
    save_dataset(&a.out, &data.images)?;
    eprintln!("wrote {} images to {}", data.images.len(), a.out.display());
    let mut artifacts = vec![a.out.as_path()];
    if let Some(p) = &a.oracle {
        write_json(p, &data.oracle)?;
        artifacts.push(p);
    }
    rec.finish(&artifacts)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let rec = Recorder::start("train", a, &[&a.data.data], Some(a.solver.seed));
    let images = a.data.load()?;
    let config = a.solver.config();
    let method = Method::Ranking {
        gt_mode: a.gt_mode.into(),
    };
    let c = match a.c.selection() {
        CSelection::Fixed(c) => c,
        CSelection::CrossValidate => {
            eprintln!("cross-validating C over {:?}", config.c_grid);
            select_c_for_method(&method, &images, &config)?.best_c
        }
    };
    let Fitted::Rank(model) = fit_method(&method, &images, c, &config)? else {
        unreachable!("ranking methods produce ranking models")
    };
    let stats = &model.training_stats;
    println!(
        "C = {}  objective = {}  iterations = {}  stop = {:?}",
        c, stats.objective, stats.iterations, stats.stop_reason
    );
    save_model(&a.out, &AnyModel::Rank(model))?;
    rec.finish(&[&a.out])?;
    Ok(())
}

fn cmd_cross_validate(a: &CvArgs) -> CliResult {
    let rec = Recorder::start("cross-validate", a, &[&a.data.data], Some(a.solver.seed));
    let images = a.data.load()?;
    let cv = select_c_for_method(
        &Method::Ranking {
            gt_mode: a.gt_mode.into(),
        },
        &images,
        &a.solver.config(),
    )?;
    for s in &cv.scores {
        println!(
            "C = {:<8}  score = {:.4}  pairwise = {:.4}",
            s.c, s.score, s.pairwise
        );
    }
    println!("best C = {}", cv.best_c);
    if let Some(out) = &a.out {
        write_json(out, &cv)?;
        rec.finish(&[out])?;
    }
    Ok(())
}

fn cmd_annotate(a: &AnnotateArgs) -> CliResult {
    let rec = Recorder::start("annotate", a, &[&a.model, &a.data.data], None);
    let model = load_any_model(&a.model)?;
    let images = a.data.load()?;
    check_model_dim(&model, &images)?;
    let fusion = a.fuse_objectness.map(FusionConfig::new).transpose()?;
    let results = images
        .iter()
        .map(|img| match (&model, fusion) {
            (AnyModel::Rank(m), None) => annotate(m, img),
            (AnyModel::Rank(m), Some(f)) => annotate_fused_objectness(m, img, &f),
            (AnyModel::Binary(m), None) => annotate_with_binary(m, img),
            (AnyModel::Binary(_), Some(_)) => Err(Error::InvalidParameter(
                "objectness fusion needs a ranking model".into(),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_results(&a.out, &results)?;
    eprintln!("annotated {} images", results.len());
    rec.finish(&[&a.out])?;
    Ok(())
}

#[derive(Deserialize)]
struct ExternalScores {
    image_id: String,
    scores: Vec<f64>,
}

fn cmd_fuse(a: &FuseArgs) -> CliResult {
    let rec = Recorder::start("fuse", a, &[&a.model, &a.data.data, &a.scores], None);
    let AnyModel::Rank(model) = load_any_model(&a.model)? else {
        return Err(CliError::Usage("fuse needs a ranking model".into()));
    };
    let images = a.data.load()?;
    check_model_dim(&AnyModel::Rank(model.clone()), &images)?;
    let external: std::collections::HashMap<String, Vec<f64>> =
        read_jsonl::<ExternalScores>(&a.scores)?
            .into_iter()
            .map(|e| (e.image_id, e.scores))
            .collect();
    let cfg = FusionConfig::new(a.alpha)?;
    let results = images
        .iter()
        .map(|img| {
            let ext = external
                .get(&img.image_id)
                .ok_or_else(|| Error::MissingScores(img.image_id.clone()))?;
            annotate_fused(&model, img, ext, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_results(&a.out, &results)?;
    rec.finish(&[&a.out])?;
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs) -> CliResult {
    let mut inputs = vec![a.data.data.as_path()];
    if let Some(t) = &a.target {
        inputs.push(t);
    }
    let rec = Recorder::start("baseline", a, &inputs, Some(a.solver.seed));
    let train_images = a.data.load()?;
    let target_images = match &a.target {
        Some(t) => DataArgs {
            data: t.clone(),
            max_candidates: a.data.max_candidates,
        }
        .load()?,
        None => train_images.clone(),
    };
    let method = match a.kind {
        BaselineKind::Generic => Method::GenericDetector,
        BaselineKind::Tworank => Method::TwoRank,
        BaselineKind::Nonranking => Method::NonRanking,
        BaselineKind::Objectness => Method::Objectness,
    };
    let results = if let BaselineKind::Objectness = a.kind {
        target_images
            .iter()
            .map(objectness_baseline)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let config = a.solver.config();
        let c = match a.c.selection() {
            CSelection::Fixed(c) => c,
            CSelection::CrossValidate => {
                select_c_for_method(&method, &train_images, &config)?.best_c
            }
        };
        eprintln!("training {} with C = {c}", method.label());
        let model: AnyModel = match fit_method(&method, &train_images, c, &config)? {
            Fitted::Rank(m) => m.into(),
            Fitted::Binary(m) => m.into(),
            Fitted::Untrained => unreachable!("trained kinds return a model"),
        };
        check_model_dim(&model, &target_images)?;
        if let Some(p) = &a.model_out {
            save_model(p, &model)?;
        }
        target_images
            .iter()
            .map(|img| match &model {
                AnyModel::Rank(m) => annotate(m, img),
                AnyModel::Binary(m) => annotate_with_binary(m, img),
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    write_results(&a.out, &results)?;
    let mut artifacts = vec![a.out.as_path()];
    if let (Some(p), false) = (&a.model_out, matches!(a.kind, BaselineKind::Objectness)) {
        artifacts.push(p);
    }
    rec.finish(&artifacts)?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult {
    let rec = Recorder::start("evaluate", a, &[&a.results, &a.data.data], None);
    let images = a.data.load()?;
    let results: Vec<AnnotationResult> = read_jsonl(&a.results)?;
    let report = evaluate(&results, &images)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        rec.finish(&[out])?;
    }
    Ok(())
}

fn cmd_split_protocol(a: &SplitArgs) -> CliResult {
    let rec = Recorder::start("split-protocol", a, &[&a.data.data], Some(a.seed()));
    let images = a.data.load()?;
    let protocol = ProtocolConfig {
        n_aux: a.n_aux,
        trials: a.trials,
        seed: a.seed(),
        method: a.method.method(a.alpha),
        c: a.c.selection(),
    };
    eprintln!(
        "running {} trials of {} with {} auxiliary classes",
        a.trials,
        protocol.method.label(),
        a.n_aux
    );
    let report = run_split_protocol(&images, &protocol, &a.solver.config())?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        rec.finish(&[out])?;
    }
    Ok(())
}

impl SplitArgs {
    fn seed(&self) -> u64 {
        self.solver.seed
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::CrossValidate(a) => cmd_cross_validate(a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SplitProtocol(a) => cmd_split_protocol(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
