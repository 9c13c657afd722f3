//! `cernet` command-line interface.
//!
//! Subcommands: `gen-data` (synthetic trajectory sets), `train` (seeded
//! training sweeps), `generate` (closed-loop reproduction with optional
//! perturbation), `infer` (online class inference trials), and `evaluate`
//! (DTW / recognition / confidence reports). All commands are deterministic
//! given explicit seeds; independent runs fan out over a worker pool capped
//! by CERNET_THREADS.

mod util;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cernet_core::checkpoint::Checkpoint;
use cernet_core::config::{ModelConfig, Preset, TopdownSource};
use cernet_core::dataset::{generate_synthetic, SyntheticSpec, TrajectoryDataset};
use cernet_core::eval::{dtw, mann_whitney_u, recognition_summary, Alternative, RecognitionRecord};
use cernet_core::inference::{infer_class, InferenceConfig};
use cernet_core::optim::TrainConfig;
use cernet_core::report::RunReport;
use cernet_core::rng::Rng;
use cernet_core::runtime::{generate_closed_loop, PerturbationSchedule, PlantConfig, PlantMode};
use cernet_core::train::{train, TrainError};

use util::{
    mean_std, median, parallel_map, prepare_out_dir, prepare_out_file, CliError, CliResult,
};

#[derive(Parser)]
#[command(name = "cernet", version, about = "Class-embedding predictive-coding RNN toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled trajectory dataset.
    GenData(GenDataArgs),
    /// Train one or more seeded runs on a dataset.
    Train(TrainArgs),
    /// Reproduce a class in a closed loop against a simulated plant.
    Generate(GenerateArgs),
    /// Infer the class of observed trajectories online.
    Infer(InferArgs),
    /// Score trajectories and recognition outcomes.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of classes K.
    #[arg(long)]
    classes: usize,
    /// Sequence length T.
    #[arg(long, default_value_t = 100)]
    timesteps: usize,
    /// Output dimensionality D.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Steps at the end holding the final point.
    #[arg(long, default_value_t = 10)]
    hold_tail: usize,
    /// Use one curve family for every class (ellipse, lissajous, polygon,
    /// spiral, figure-eight) instead of cycling through all five.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by gen-data (or matching its schema).
    #[arg(long)]
    data: PathBuf,
    /// Named model preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON file holding a full model config (alternative to --preset).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent seeded runs.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Base seed; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Top-down schedule: prior_t or posterior_tminus1.
    #[arg(long)]
    topdown: Option<String>,
    /// Output directory for checkpoints, traces, and the summary CSV.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Class index to reproduce.
    #[arg(long)]
    class: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Plant mode: ideal, noisy, or lagged.
    #[arg(long, default_value = "ideal")]
    plant: String,
    /// Observation noise std for the noisy plant.
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    /// Lag coefficient for the lagged plant.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Observation perturbation, formatted start:end:dx,dy,... (inclusive).
    #[arg(long)]
    perturb: Option<String>,
    /// Override the per-layer posterior rates (single value broadcasts).
    #[arg(long)]
    alpha_h: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output report file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Observation stream: a report JSON (its trajectory), a dataset JSON
    /// (pick the class with --class-true), or a raw [[x,y,z],...] array.
    #[arg(long, conflicts_with = "self_stream")]
    observations: Option<PathBuf>,
    /// Generate the observed stream from the model itself for this class.
    #[arg(long)]
    self_stream: Option<usize>,
    /// Ground-truth class label for the observation file.
    #[arg(long)]
    class_true: Option<usize>,
    /// Stream length for --self-stream.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Gaussian noise std added to the observed stream (fresh per trial).
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Independent trials; trial i draws its embedding init from seed + i.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 2.5e-2)]
    alpha_c: f64,
    #[arg(long, default_value_t = 15)]
    n_iter: usize,
    #[arg(long, default_value_t = 0.1)]
    init_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for per-trial reports.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(subcommand)]
    what: EvaluateCommand,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// DTW score between two trajectories.
    Dtw {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Class index when --a is a dataset file.
        #[arg(long)]
        class_a: Option<usize>,
        /// Class index when --b is a dataset file.
        #[arg(long)]
        class_b: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-1/Top-2 rates and per-group confidence lists over a report dir.
    Recognition {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise rank tests of the final reconstruction MSE across outcome
    /// groups.
    Confidence {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Evaluate(args) => match args.what {
            EvaluateCommand::Dtw { a, b, class_a, class_b, out } => {
                cmd_evaluate_dtw(&a, &b, class_a, class_b, out.as_deref())
            }
            EvaluateCommand::Recognition { reports, out } => {
                cmd_evaluate_recognition(&reports, out.as_deref())
            }
            EvaluateCommand::Confidence { reports, out } => {
                cmd_evaluate_confidence(&reports, out.as_deref())
            }
        },
    }
}

fn cmd_gen_data(args: GenDataArgs) -> CliResult<()> {
    prepare_out_file(&args.out, args.force)?;
    let base_family = args
        .family
        .as_deref()
        .map(|name| {
            serde_json::from_value(serde_json::Value::String(name.to_string()))
                .map_err(|_| CliError::Usage(format!("unknown curve family '{name}'")))
        })
        .transpose()?;
    let spec = SyntheticSpec {
        num_classes: args.classes,
        timesteps: args.timesteps,
        dim: args.dim,
        hold_tail: args.hold_tail,
        seed: args.seed,
        base_family,
    };
    let dataset = generate_synthetic(&spec)?;
    dataset.save(&args.out)?;
    println!(
        "wrote {} classes x {} steps x {} dims to {}",
        dataset.num_classes(),
        dataset.timesteps(),
        dataset.dim(),
        args.out.display()
    );
    Ok(())
}

fn parse_topdown(s: &str) -> CliResult<TopdownSource> {
    match s {
        "prior_t" => Ok(TopdownSource::PriorT),
        "posterior_tminus1" => Ok(TopdownSource::PosteriorTminus1),
        other => Err(CliError::Usage(format!(
            "unknown topdown source '{other}' (expected prior_t or posterior_tminus1)"
        ))),
    }
}

fn resolve_model_config(args: &TrainArgs, dataset: &TrajectoryDataset) -> CliResult<(String, ModelConfig)> {
    let (model_id, mut config) = match (&args.preset, &args.config) {
        (Some(name), None) => {
            let preset = Preset::from_name(name).ok_or_else(|| {
                let valid: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                CliError::Usage(format!(
                    "unknown preset '{name}'; valid presets: {}",
                    valid.join(", ")
                ))
            })?;
            (
                preset.name().to_string(),
                preset.config(dataset.num_classes(), dataset.dim())?,
            )
        }
        (None, Some(path)) => {
            let json = std::fs::read_to_string(path)?;
            let config: ModelConfig =
                serde_json::from_str(&json).map_err(|e| CliError::Usage(e.to_string()))?;
            config.validate()?;
            ("custom".to_string(), config)
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --preset or --config is required".into(),
            ))
        }
    };
    if let Some(topdown) = &args.topdown {
        config.topdown_source = parse_topdown(topdown)?;
    }
    Ok((model_id, config))
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let dataset = TrajectoryDataset::load(&args.data)?;
    let (model_id, model_config) = resolve_model_config(&args, &dataset)?;
    prepare_out_dir(&args.out_dir, args.force)?;

    let outcomes = parallel_map(args.runs, |run| {
        let train_config = TrainConfig {
            epochs: args.epochs,
            learning_rate: args.lr,
            seed: args.seed + run as u64,
            ..TrainConfig::default()
        };
        let outcome = train(&dataset, &model_config, &train_config).map_err(|e| match e {
            TrainError::Diverged { epoch, .. } => {
                CliError::Runtime(format!("run {run} diverged at epoch {epoch}"))
            }
            TrainError::Core(c) => CliError::from(c),
        })?;
        let ckpt_path = args.out_dir.join(format!("checkpoint_run{run:03}.json"));
        outcome.checkpoint.save(&ckpt_path)?;
        std::fs::write(
            args.out_dir.join(format!("trace_run{run:03}.csv")),
            outcome.trace.to_csv(),
        )?;
        Ok((train_config.seed, outcome.trace))
    })?;

    let mut per_run = String::from("run,seed,min_loss,min_loss_epoch\n");
    let minima: Vec<f64> = outcomes.iter().map(|(_, t)| t.min_loss()).collect();
    for (run, (seed, trace)) in outcomes.iter().enumerate() {
        per_run.push_str(&format!(
            "{run},{seed},{},{}\n",
            trace.min_loss(),
            trace.min_loss_epoch
        ));
    }
    std::fs::write(args.out_dir.join("per_run.csv"), per_run)?;
    let (mean, std) = mean_std(&minima);
    std::fs::write(
        args.out_dir.join("summary.csv"),
        format!("model,runs,min_loss_mean,min_loss_std\n{model_id},{},{mean},{std}\n", args.runs),
    )?;
    println!(
        "trained {model_id} x{} runs: min loss mean {mean:.6e} (std {std:.3e})",
        args.runs
    );
    Ok(())
}

fn parse_plant(args: &GenerateArgs) -> CliResult<PlantConfig> {
    let mode = match args.plant.as_str() {
        "ideal" => PlantMode::Ideal,
        "noisy" => PlantMode::Noisy,
        "lagged" => PlantMode::Lagged,
        other => {
            return Err(CliError::Usage(format!(
                "unknown plant mode '{other}' (expected ideal, noisy, or lagged)"
            )))
        }
    };
    let plant = PlantConfig {
        mode,
        sigma: args.sigma,
        lambda: args.lambda,
    };
    plant.validate()?;
    Ok(plant)
}

fn parse_perturbation(spec: &str) -> CliResult<PerturbationSchedule> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "perturbation '{spec}' must look like start:end:dx,dy,dz"
        )));
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::Usage(format!("bad perturbation {what} '{s}'")))
    };
    let offset: Result<Vec<f64>, CliError> = parts[2]
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad perturbation offset component '{s}'")))
        })
        .collect();
    Ok(PerturbationSchedule {
        start_step: parse_usize(parts[0], "start")?,
        end_step: parse_usize(parts[1], "end")?,
        offset: offset?,
    })
}

fn parse_alpha_override(spec: &str, layers: usize) -> CliResult<Vec<f64>> {
    let values: Result<Vec<f64>, CliError> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad alpha_h component '{s}'")))
        })
        .collect();
    let values = values?;
    if values.len() == 1 {
        return Ok(vec![values[0]; layers]);
    }
    if values.len() != layers {
        return Err(CliError::Usage(format!(
            "alpha_h override has {} entries but the model has {layers} layers",
            values.len()
        )));
    }
    Ok(values)
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let plant = parse_plant(&args)?;
    let perturbation = args.perturb.as_deref().map(parse_perturbation).transpose()?;
    prepare_out_file(&args.out, args.force)?;
    let mut checkpoint = Checkpoint::load(&args.checkpoint)?;
    if let Some(spec) = &args.alpha_h {
        checkpoint.config.alpha_h = parse_alpha_override(spec, checkpoint.config.num_layers())?;
    }
    let report = generate_closed_loop(
        &checkpoint,
        args.class,
        args.steps,
        &plant,
        perturbation.as_ref(),
        args.seed,
    )?;
    report.save(&args.out)?;
    println!("wrote generation report to {}", args.out.display());
    Ok(())
}

/// Accepts a report (trajectory field), a dataset (with a class index), or a
/// raw nested array of points.
fn load_trajectory(path: &Path, class_idx: Option<usize>) -> CliResult<Vec<Vec<f64>>> {
    let json = std::fs::read_to_string(path)?;
    if let Ok(report) = RunReport::from_json(&json) {
        if !report.trajectory.is_empty() {
            return Ok(report.trajectory);
        }
    }
    if let Ok(dataset) = TrajectoryDataset::from_json(&json) {
        let k = class_idx.ok_or_else(|| {
            CliError::Usage(format!(
                "{} is a dataset file; pass a class index to pick one sequence",
                path.display()
            ))
        })?;
        let class = dataset.classes.get(k).ok_or_else(|| {
            CliError::Usage(format!(
                "class index {k} out of range for {} classes",
                dataset.num_classes()
            ))
        })?;
        return Ok(class.points.clone());
    }
    if let Ok(points) = serde_json::from_str::<Vec<Vec<f64>>>(&json) {
        if points.is_empty() || points.iter().any(|p| p.len() != points[0].len()) {
            return Err(CliError::Usage(format!(
                "{} holds an empty or ragged point array",
                path.display()
            )));
        }
        return Ok(points);
    }
    Err(CliError::Usage(format!(
        "{} is not a report, dataset, or point-array file",
        path.display()
    )))
}

fn cmd_infer(args: InferArgs) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (clean_stream, class_true) = match (&args.observations, args.self_stream) {
        (Some(path), None) => (load_trajectory(path, args.class_true)?, args.class_true),
        (None, Some(k)) => {
            let report = generate_closed_loop(
                &checkpoint,
                k,
                args.steps,
                &PlantConfig::default(),
                None,
                args.seed,
            )?;
            (report.trajectory, Some(k))
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --observations or --self-stream is required".into(),
            ))
        }
    };
    if clean_stream.iter().any(|p| p.len() != checkpoint.config.output_dim) {
        return Err(CliError::Usage(format!(
            "observations have {} dims but the model expects D={}",
            clean_stream.first().map_or(0, Vec::len),
            checkpoint.config.output_dim
        )));
    }
    prepare_out_dir(&args.out_dir, args.force)?;

    parallel_map(args.trials, |trial| {
        let trial_seed = args.seed + trial as u64;
        let stream = if args.noise_sigma > 0.0 {
            let mut rng = Rng::new(trial_seed ^ 0x9E37_79B9_7F4A_7C15);
            clean_stream
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|&v| v + rng.normal_scaled(args.noise_sigma))
                        .collect()
                })
                .collect()
        } else {
            clean_stream.clone()
        };
        let cfg = InferenceConfig {
            alpha_c: args.alpha_c,
            n_iter: args.n_iter,
            init_sigma: args.init_sigma,
            seed: trial_seed,
            replay_posterior_corrections: true,
        };
        let trace = infer_class(&checkpoint, &stream, &cfg)?;
        let report = trace.to_report(format!("trial_{trial:03}"), class_true);
        report.save(&args.out_dir.join(format!("trial_{trial:03}.json")))?;
        Ok(())
    })?;
    println!(
        "wrote {} inference trial reports to {}",
        args.trials,
        args.out_dir.display()
    );
    Ok(())
}

fn emit(content: &str, out: Option<&Path>) -> CliResult<()> {
    print!("{content}");
    if let Some(path) = out {
        prepare_out_file(path, true)?;
        std::fs::write(path, content)?;
    }
    Ok(())
}

fn cmd_evaluate_dtw(
    a: &Path,
    b: &Path,
    class_a: Option<usize>,
    class_b: Option<usize>,
    out: Option<&Path>,
) -> CliResult<()> {
    let ta = load_trajectory(a, class_a)?;
    let tb = load_trajectory(b, class_b)?;
    let result = dtw(&ta, &tb)?;
    let content = format!(
        "score,raw_cost,len_a,len_b\n{},{},{},{}\n",
        result.score,
        result.raw_cost,
        ta.len(),
        tb.len()
    );
    emit(&content, out)
}

fn load_recognition_records(dir: &Path) -> CliResult<Vec<RecognitionRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "no .json reports found in {}",
            dir.display()
        )));
    }
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let report = RunReport::load(&path)?;
        let missing = |field: &str| {
            CliError::Usage(format!(
                "{} lacks {field}; it is not a labeled inference report",
                path.display()
            ))
        };
        records.push(RecognitionRecord {
            class_true: report.class_true.ok_or_else(|| missing("class_true"))?,
            class_top1: report.class_top1.ok_or_else(|| missing("class_top1"))?,
            class_top2: report.class_top2.ok_or_else(|| missing("class_top2"))?,
            final_mse: report.final_mse.ok_or_else(|| missing("final_mse"))?,
        });
    }
    Ok(records)
}

fn cmd_evaluate_recognition(reports: &Path, out: Option<&Path>) -> CliResult<()> {
    let records = load_recognition_records(reports)?;
    let summary = recognition_summary(&records)?;
    let mut content = format!(
        "n_trials,top1_accuracy,top2_accuracy\n{},{},{}\n\ngroup,final_mse\n",
        summary.n_trials, summary.top1_accuracy, summary.top2_accuracy
    );
    for (group, values) in [
        ("top1_correct", &summary.mse_top1_correct),
        ("top2_correct", &summary.mse_top2_correct),
        ("incorrect", &summary.mse_incorrect),
    ] {
        for v in values {
            content.push_str(&format!("{group},{v}\n"));
        }
    }
    emit(&content, out)
}

fn cmd_evaluate_confidence(reports: &Path, out: Option<&Path>) -> CliResult<()> {
    let records = load_recognition_records(reports)?;
    let summary = recognition_summary(&records)?;
    let groups = [
        ("top1_correct", &summary.mse_top1_correct),
        ("top2_correct", &summary.mse_top2_correct),
        ("incorrect", &summary.mse_incorrect),
    ];
    let mut content = String::from("group,n,median_final_mse\n");
    for (name, values) in groups {
        match median(values) {
            Some(m) => content.push_str(&format!("{name},{},{m}\n", values.len())),
            None => content.push_str(&format!("{name},0,\n")),
        }
    }
    content.push_str("\ncomparison,alternative,u,p_value,exact\n");
    for (ia, ib) in [(0, 1), (0, 2), (1, 2)] {
        let (name_a, sample_a) = groups[ia];
        let (name_b, sample_b) = groups[ib];
        if sample_a.is_empty() || sample_b.is_empty() {
            continue;
        }
        let result = mann_whitney_u(sample_a, sample_b, Alternative::Less)?;
        content.push_str(&format!(
            "{name_a}_vs_{name_b},less,{},{},{}\n",
            result.u, result.p_value, result.exact
        ));
    }
    emit(&content, out)
}
