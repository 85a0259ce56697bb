//! `fdia`: simulate grids, construct stealthy injections, generate datasets,
//! train the two-stage detector and its baselines, and sweep scenarios.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! `FDIA_WORKERS` caps the worker thread count.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fdia_core::baselines::{
    evaluate_baseline, load_baseline, save_baseline, BaselineContext, BaselineHyperGrid,
    BaselineKind,
};
use fdia_core::dataset::{
    apply_norm_stats, export_csv, generate_source_dataset, generate_target_dataset,
    generate_target_test_dataset, load_dataset, normalize_and_split, save_dataset, split_dataset,
    Dataset, GenerationConfig, Label,
};
use fdia_core::error::ErrorCategory;
use fdia_core::estimation::run_3bus_demo;
use fdia_core::eval::{
    compute_metrics, emit_report, run_delta_sweep, run_sigma_sweep, ConfusionCounts, ReportFormat,
    SweepConfig,
};
use fdia_core::grid::{load_case_file, perturb_case, GridCase, PerturbSpec};
use fdia_core::nn::{load_checkpoint, save_checkpoint, Checkpoint, MLPConfig, MLPModel};
use fdia_core::seed::{derive_seed, role};
use fdia_core::transfer::{
    build_stage2_dataset, classify_dataset, finetune, pretrain, StopReason, TrainConfig, TrainRun,
};

#[derive(Parser)]
#[command(name = "fdia", version, about = "Stealthy FDIA simulation and detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Source,
    Target,
    TargetTest,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 3-bus modeling-error demonstration.
    Demo3bus {
        /// Emit the report as JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Generate a dataset and write it in the binary dataset format.
    Gen {
        /// Case file path or builtin name (case3, case14).
        #[arg(long)]
        case: String,
        /// Modeling-error level for target-side roles.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Measurement noise fraction.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed of the real-world parameter draw; fixed separately from
        /// --seed so target and target-test land on the same perturbed case.
        #[arg(long, default_value_t = 0)]
        perturb_seed: u64,
        #[arg(long, default_value_t = 10)]
        n_base: usize,
        #[arg(long, default_value_t = 1000)]
        n_per_base: usize,
        /// Also write a CSV rendering next to the output.
        #[arg(long)]
        csv: bool,
    },
    /// Stage-1 pre-training on a source and a target dataset.
    Pretrain {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// TOML training configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Stage-2 fine-tuning of a pre-trained checkpoint.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Source dataset, enabling attack replay into the stage-2 set
        /// (omit for the default normal-only stage-2 set).
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train a comparison baseline on a source dataset.
    Baseline {
        /// bdd | dnn-b | lr | knn | gnb
        #[arg(long)]
        kind: String,
        #[arg(long)]
        source: PathBuf,
        /// Nominal case for the BDD residual route (path or builtin name).
        #[arg(long, default_value = "case14")]
        case: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model (checkpoint or baseline file) on a test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Write a JSON report with the confusion counts and metrics.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Scenario sweeps over modeling error and source noise.
    Sweep {
        #[arg(long)]
        case: String,
        /// Comma-separated modeling-error levels, e.g. 0,0.02,0.1,0.5
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        /// Comma-separated source noise levels for the noise sweep.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        /// Modeling error pinned during the noise sweep.
        #[arg(long, default_value_t = 0.5)]
        sigma_sweep_delta: f64,
        /// TOML sweep configuration; desk-scale defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report_dir: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(fdia_core::Error),
}

impl From<fdia_core::Error> for CliError {
    fn from(e: fdia_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn resolve_case(name: &str) -> CliResult<GridCase> {
    if let Some(case) = GridCase::builtin(name) {
        return Ok(case);
    }
    Ok(load_case_file(Path::new(name))?)
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Core(e.into()))
}

fn load_train_config(path: &Option<PathBuf>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => Ok(TrainConfig::from_toml(&read_to_string(p)?)?),
        None => Ok(TrainConfig::default()),
    }
}

/// Bring a dataset pair onto the shared source input map, normalizing
/// in-place when the files hold raw features.
fn ensure_normalized_pair(
    source: &mut Dataset,
    target: &mut Dataset,
    seed: u64,
) -> CliResult<()> {
    if source.norm_stats.is_none() {
        normalize_and_split(source, seed)?;
    } else if source.split.is_none() {
        split_dataset(source, seed)?;
    }
    let stats = source.norm_stats.clone().expect("normalized above");
    match &target.norm_stats {
        None => apply_norm_stats(target, &stats)?,
        Some(s) if *s == stats => {}
        Some(_) => {
            return Err(CliError::Usage(
                "target dataset was normalized with different stats than the source".into(),
            ))
        }
    }
    if target.split.is_none() {
        split_dataset(target, derive_seed(seed, &[1]))?;
    }
    Ok(())
}

fn write_trace(trace_path: &Option<PathBuf>, run: &TrainRun) -> CliResult<()> {
    if let Some(p) = trace_path {
        std::fs::write(p, run.trace.to_csv()).map_err(fdia_core::Error::from)?;
    }
    Ok(())
}

fn checkpoint_meta(run: &TrainRun, stats: Option<fdia_core::dataset::NormStats>) -> Checkpoint {
    let mut metrics = serde_json::Map::new();
    metrics.insert("best_val_acc".into(), serde_json::json!(run.best_val_acc));
    metrics.insert("stop".into(), serde_json::json!(format!("{:?}", run.stop)));
    metrics.insert(
        "iterations".into(),
        serde_json::json!(run.trace.records.len()),
    );
    Checkpoint {
        config: run.model.cfg,
        step: run.trace.records.len() as u64,
        metrics,
        norm_stats: stats,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Demo3bus { json } => {
            let report = run_3bus_demo();
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| fdia_core::Error::Corrupt(e.to_string()))?
                );
            } else {
                println!("{report}");
            }
            Ok(())
        }

        Command::Gen {
            case,
            delta,
            sigma,
            role,
            out,
            seed,
            perturb_seed,
            n_base,
            n_per_base,
            csv,
        } => {
            let nominal = resolve_case(&case)?;
            let cfg = GenerationConfig {
                n_base,
                n_per_base,
                sigma,
                seed,
                ..GenerationConfig::desk(seed)
            };
            let ds = match role {
                Role::Source => generate_source_dataset(&nominal, &cfg)?,
                Role::Target | Role::TargetTest => {
                    let spec = PerturbSpec::new(delta, derive_seed(perturb_seed, &[role::SCENARIO]))?;
                    let real = perturb_case(&nominal, &spec)?;
                    match role {
                        Role::Target => generate_target_dataset(&real, &cfg)?,
                        _ => generate_target_test_dataset(&real, &cfg)?,
                    }
                }
            };
            save_dataset(&ds, &out)?;
            if csv {
                export_csv(&ds, &out.with_extension("csv"))?;
            }
            let (normal, attack) = ds.class_counts();
            println!(
                "wrote {} samples ({normal} normal, {attack} attack) to {}",
                ds.len(),
                out.display()
            );
            Ok(())
        }

        Command::Pretrain {
            source,
            target,
            config,
            out,
            trace,
        } => {
            let cfg = load_train_config(&config)?;
            let mut source_ds = load_dataset(&source)?;
            let mut target_ds = load_dataset(&target)?;
            ensure_normalized_pair(&mut source_ds, &mut target_ds, cfg.seed)?;

            let model = MLPModel::init(
                MLPConfig::new(source_ds.feature_len()),
                derive_seed(cfg.seed, &[role::MODEL_INIT]),
            )?;
            let run = pretrain(model, &source_ds, &target_ds, &cfg)?;
            write_trace(&trace, &run)?;
            if run.stop == StopReason::Diverged {
                return Err(CliError::Core(fdia_core::Error::NonFinite(
                    "stage-1 training diverged; partial trace written".into(),
                )));
            }
            let meta = checkpoint_meta(&run, source_ds.norm_stats.clone());
            save_checkpoint(&run.model, &meta, &out)?;
            println!(
                "stage 1 done: stop={:?}, best validation accuracy {:.4}, checkpoint {}",
                run.stop,
                run.best_val_acc,
                out.display()
            );
            Ok(())
        }

        Command::Finetune {
            model,
            target,
            source,
            config,
            out,
            trace,
        } => {
            let mut cfg = load_train_config(&config)?;
            let (net, meta) = load_checkpoint(&model)?;
            let stats = meta.norm_stats.clone().ok_or_else(|| {
                CliError::Usage("checkpoint carries no normalization stats".into())
            })?;
            let mut target_ds = load_dataset(&target)?;
            if target_ds.norm_stats.is_none() {
                apply_norm_stats(&mut target_ds, &stats)?;
            }

            let stage2 = match &source {
                Some(src) => {
                    cfg.stage2_mode = fdia_core::transfer::Stage2Mode::ReplaySource;
                    let mut source_ds = load_dataset(src)?;
                    if source_ds.norm_stats.is_none() {
                        apply_norm_stats(&mut source_ds, &stats)?;
                    }
                    build_stage2_dataset(&target_ds, &source_ds, cfg.stage2_mode, cfg.seed)?
                }
                None => {
                    cfg.stage2_mode = fdia_core::transfer::Stage2Mode::NormalOnly;
                    build_stage2_dataset(&target_ds, &target_ds, cfg.stage2_mode, cfg.seed)?
                }
            };
            let run = finetune(net, &stage2, &cfg)?;
            write_trace(&trace, &run)?;
            if run.stop == StopReason::Diverged {
                return Err(CliError::Core(fdia_core::Error::NonFinite(
                    "stage-2 training diverged; partial trace written".into(),
                )));
            }
            let meta = checkpoint_meta(&run, Some(stats));
            save_checkpoint(&run.model, &meta, &out)?;
            println!(
                "stage 2 done: best validation accuracy {:.4}, checkpoint {}",
                run.best_val_acc,
                out.display()
            );
            Ok(())
        }

        Command::Baseline {
            kind,
            source,
            case,
            config,
            out,
        } => {
            let kind: BaselineKind = kind.parse()?;
            let nominal = resolve_case(&case)?;
            let train = load_train_config(&config)?;
            let mut source_ds = load_dataset(&source)?;
            if source_ds.norm_stats.is_none() {
                normalize_and_split(&mut source_ds, train.seed)?;
            } else if source_ds.split.is_none() {
                split_dataset(&mut source_ds, train.seed)?;
            }
            let grid = BaselineHyperGrid::default();
            let ctx = BaselineContext {
                source: &source_ds,
                case: &nominal,
                train: &train,
                grid: &grid,
                seed: train.seed,
            };
            let tb = fdia_core::baselines::train_baseline(kind, &ctx)?;
            save_baseline(&tb, &out)?;
            println!(
                "trained {kind}: validation accuracy {}, hyper {}, saved to {}",
                tb.val_acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
                tb.hyper,
                out.display()
            );
            Ok(())
        }

        Command::Eval {
            model,
            test,
            report,
        } => {
            let mut test_ds = load_dataset(&test)?;
            let is_checkpoint = std::fs::read(&model)
                .map_err(fdia_core::Error::from)?
                .starts_with(b"FDIACKPT");
            let verdicts = if is_checkpoint {
                let (net, meta) = load_checkpoint(&model)?;
                if test_ds.norm_stats.is_none() {
                    let stats = meta.norm_stats.clone().ok_or_else(|| {
                        CliError::Usage("checkpoint carries no normalization stats".into())
                    })?;
                    apply_norm_stats(&mut test_ds, &stats)?;
                }
                classify_dataset(&net, &test_ds)?
            } else {
                let tb = load_baseline(&model)?;
                if test_ds.norm_stats.is_none() {
                    if let Some(stats) = &tb.norm_stats {
                        apply_norm_stats(&mut test_ds, stats)?;
                    }
                }
                evaluate_baseline(&tb, &test_ds)?
            };
            let truth: Vec<Label> = test_ds.samples.iter().map(|s| s.label).collect();
            let confusion = ConfusionCounts::from_verdicts(&truth, &verdicts)?;
            let metrics = compute_metrics(&confusion)?;
            println!(
                "samples {}  ACC {:.2}%  MAR {}",
                test_ds.len(),
                metrics.acc * 100.0,
                metrics
                    .mar
                    .map(|m| format!("{:.2}%", m * 100.0))
                    .unwrap_or_else(|| "n/a".into())
            );
            if let Some(p) = report {
                let doc = serde_json::json!({
                    "confusion": confusion,
                    "metrics": metrics,
                    "samples": test_ds.len(),
                });
                std::fs::write(&p, serde_json::to_string_pretty(&doc).unwrap())
                    .map_err(fdia_core::Error::from)?;
            }
            Ok(())
        }

        Command::Sweep {
            case,
            deltas,
            sigmas,
            sigma_sweep_delta,
            config,
            report_dir,
        } => {
            if deltas.is_empty() && sigmas.is_empty() {
                return Err(CliError::Usage(
                    "nothing to sweep: give --deltas and/or --sigmas".into(),
                ));
            }
            let nominal = resolve_case(&case)?;
            let cfg = match &config {
                Some(p) => SweepConfig::from_toml(&read_to_string(p)?)?,
                None => SweepConfig::default(),
            };
            std::fs::create_dir_all(&report_dir).map_err(fdia_core::Error::from)?;

            let write_reports = |name: &str,
                                     results: &[fdia_core::eval::ScenarioResult]|
             -> CliResult<()> {
                for (fmt, ext) in [
                    (ReportFormat::Markdown, "md"),
                    (ReportFormat::Csv, "csv"),
                    (ReportFormat::Json, "json"),
                ] {
                    let text = emit_report(results, fmt)?;
                    let path = report_dir.join(format!("{name}.{ext}"));
                    std::fs::write(&path, text).map_err(fdia_core::Error::from)?;
                }
                println!("wrote {name} reports to {}", report_dir.display());
                Ok(())
            };

            if !deltas.is_empty() {
                let results = run_delta_sweep(&nominal, &deltas, &cfg);
                for r in &results {
                    if let Some(e) = &r.error {
                        eprintln!("scenario delta={} failed: {e}", r.delta);
                    }
                }
                write_reports("delta_sweep", &results)?;
            }
            if !sigmas.is_empty() {
                let results = run_sigma_sweep(&nominal, &sigmas, sigma_sweep_delta, &cfg);
                for r in &results {
                    if let Some(e) = &r.error {
                        eprintln!("scenario sigma={} failed: {e}", r.sigma_source);
                    }
                }
                write_reports("sigma_sweep", &results)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Ok(workers) = std::env::var("FDIA_WORKERS") {
        match workers.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: FDIA_WORKERS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Data => ExitCode::from(2),
                ErrorCategory::Numerical => ExitCode::from(3),
            }
        }
    }
}
