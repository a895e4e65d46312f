//! `maxnet` — train, verify, and reproduce experiments with shallow networks
//! whose hidden units solve the source-free Maxwell equations exactly.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 verification failure,
//! 3 numerical abort (non-finite loss).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maxnet::checkpoint::{load_checkpoint, save_checkpoint};
use maxnet::exact_init::{assemble_cos_network, TrigTerm};
use maxnet::experiment::{
    run_data_budget, run_gradcheck, run_race, run_time_budget, run_train, run_verify, Aggregate,
    ExperimentConfig, ExperimentKind, RunRecord,
};
use maxnet::ground_truth::{write_field_csv, GroundTruth, GroundTruthId};
use maxnet::metrics::{relative_l2, residual_error_model, EvalReport};
use maxnet::sampling::{sample_validation, SetupId};
use maxnet::{forward, Error, Result, SpacetimePoint};

#[derive(Parser)]
#[command(
    name = "maxnet",
    version,
    about = "Exact Maxwell-solution networks: training, verification, experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed (repeats use seed, seed+1, ...).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch parallelism (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for run artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ProblemArgs {
    /// plane-waves | radial-waves | hopf-fibration | random-solution[:seed]
    #[arg(long)]
    ground_truth: Option<String>,
    /// ic | bc
    #[arg(long)]
    setup: Option<String>,
    /// Neurons per sign per branch (total neurons = 4 × width_half).
    #[arg(long)]
    width_half: Option<usize>,
    /// tanh | cos | relu | silu | gelu | sigmoid
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    val_every_steps: Option<u64>,
    /// Training observations (IC slice or BC faces).
    #[arg(long)]
    n_train: Option<usize>,
    /// Validation points.
    #[arg(long)]
    n_val: Option<usize>,
    /// Independent repeats (seeds fan out from --seed).
    #[arg(long)]
    repeats: Option<u32>,
    /// Early-stop threshold on relative validation error.
    #[arg(long)]
    target_rel_error: Option<f64>,
    /// Wall-clock training budget in seconds.
    #[arg(long)]
    budget_s: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and keep the best-validation checkpoint.
    Train(ProblemArgs),
    /// Race to a target validation error (default 5%) over repeats.
    Race(ProblemArgs),
    /// Train under a fixed wall-clock budget; the log is the error curve.
    TimeBudget(ProblemArgs),
    /// Sweep training-set sizes at fixed seed 42, one run per size.
    DataBudget {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated training-set sizes (default 100,...,12000).
        #[arg(long, value_delimiter = ',')]
        n_points: Option<Vec<usize>>,
    },
    /// Residual exactness, FD convergence, and multiplier identity checks.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Points for the residual-exactness sweep.
        #[arg(long, default_value_t = 10_000)]
        n_points: usize,
    },
    /// Finite-difference gradient checks over widths × activations × seeds.
    Gradcheck,
    /// Build an exact cosine network from a JSON list of trig terms.
    ExactInit {
        /// JSON file: [{"xi":[...3], "amp_cos":[...6], "amp_sin":[...6]}, ...]
        #[arg(long)]
        terms: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a field (ground truth or checkpoint) on a grid and write CSV.
    ExportField {
        /// Ground truth to export (mutually exclusive with --checkpoint).
        #[arg(long)]
        ground_truth: Option<String>,
        /// Checkpoint to export (mutually exclusive with --ground-truth).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Grid resolution per spatial axis over [0,1]³.
        #[arg(long, default_value_t = 16)]
        grid: usize,
        /// Time slice.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a ground truth on fresh validation data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        problem: ProblemArgs,
    },
}

fn usage(msg: &str) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Builds the effective config: file (if given) → flags override.
fn resolve_config(
    kind: ExperimentKind,
    cli_config: &Option<PathBuf>,
    seed: Option<u64>,
    output_dir: &Option<PathBuf>,
    p: &ProblemArgs,
) -> Result<ExperimentConfig> {
    let mut config = match cli_config {
        Some(path) => {
            let mut c = ExperimentConfig::from_json_file(path)?;
            c.experiment = kind;
            c
        }
        None => {
            let gt: GroundTruthId = p
                .ground_truth
                .as_deref()
                .ok_or_else(|| usage("--ground-truth is required without --config"))?
                .parse()?;
            let setup: SetupId = p
                .setup
                .as_deref()
                .ok_or_else(|| usage("--setup is required without --config"))?
                .parse()?;
            ExperimentConfig::new(kind, gt, setup)
        }
    };
    if let Some(gt) = p.ground_truth.as_deref() {
        config.ground_truth = gt.parse()?;
    }
    if let Some(setup) = p.setup.as_deref() {
        config.setup = setup.parse()?;
    }
    if let Some(act) = p.activation.as_deref() {
        config.train.activation = act.parse().map_err(Error::InvalidConfig)?;
    }
    if let Some(v) = p.width_half {
        config.train.width_half = v;
    }
    if let Some(v) = p.learning_rate {
        config.train.learning_rate = v;
    }
    if let Some(v) = p.weight_decay {
        config.train.weight_decay = v;
    }
    if let Some(v) = p.batch_size {
        config.train.batch_size = v;
    }
    if let Some(v) = p.max_epochs {
        config.train.max_epochs = v;
        config.train.cosine_epochs = config.train.cosine_epochs.min(v.max(1));
    }
    if let Some(v) = p.val_every_steps {
        config.train.val_every_steps = v;
    }
    if let Some(v) = p.target_rel_error {
        config.train.target_rel_error = Some(v);
    }
    if let Some(v) = p.budget_s {
        config.train.wall_clock_budget_s = Some(v);
    }
    if let Some(v) = p.n_train {
        config.sampling.n_train = v;
    }
    if let Some(v) = p.n_val {
        config.sampling.n_val = v;
    }
    if let Some(v) = p.repeats {
        config.repeats = v;
    } else if kind == ExperimentKind::Train && cli_config.is_none() {
        config.repeats = 1;
    }
    if let Some(s) = seed {
        config.train.seed = s;
    }
    if let Some(dir) = output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Errors below display precision print as "<1.00%"; raw values live in the
/// JSON reports.
fn pct(e: f64) -> String {
    if e < 0.01 {
        "<1.00%".to_string()
    } else {
        format!("{:.2}%", 100.0 * e)
    }
}

fn print_aggregate(label: &str, agg: &Option<Aggregate>, as_pct: bool) {
    if let Some(a) = agg {
        if as_pct {
            println!(
                "{label}: {} ± {:.2}% (n={})",
                pct(a.mean),
                100.0 * a.sem,
                a.n
            );
        } else {
            println!("{label}: {:.1} ± {:.1} s (n={})", a.mean, a.sem, a.n);
        }
    }
}

fn print_record(record: &RunRecord) {
    for run in &record.runs {
        let err = run
            .min_val_error
            .map_or("n/a".to_string(), |e| pct(e).to_string());
        match run.reached_target {
            Some(true) => println!(
                "{}: reached target in {:.1} s (min error {})",
                run.run_id,
                run.time_to_target_s.unwrap_or_default(),
                err
            ),
            Some(false) => println!(
                "{}: NOT converged within {:.1} s (best {})",
                run.run_id,
                run.time_to_target_s.unwrap_or_default(),
                err
            ),
            None => println!(
                "{}: min error {} at {:.1} s ({:?})",
                run.run_id,
                err,
                run.time_to_min_s.unwrap_or_default(),
                run.stop_reason
            ),
        }
    }
    print_aggregate("min validation error", &record.error_aggregate, true);
    print_aggregate("time", &record.time_aggregate, false);
    println!("summary: {}", record.summary_path.display());
}

fn grid_points(grid: usize, time: f64) -> Vec<SpacetimePoint> {
    let coord = |i: usize| {
        if grid <= 1 {
            0.5
        } else {
            i as f64 / (grid - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(grid * grid * grid);
    for ix in 0..grid {
        for iy in 0..grid {
            for iz in 0..grid {
                pts.push(SpacetimePoint::new(time, coord(ix), coord(iy), coord(iz)));
            }
        }
    }
    pts
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(ref p) => {
            let config =
                resolve_config(ExperimentKind::Train, &cli.config, cli.seed, &cli.output_dir, p)?;
            print_record(&run_train(&config)?);
        }
        Command::Race(ref p) => {
            let config =
                resolve_config(ExperimentKind::Race, &cli.config, cli.seed, &cli.output_dir, p)?;
            print_record(&run_race(&config)?);
        }
        Command::TimeBudget(ref p) => {
            let config = resolve_config(
                ExperimentKind::TimeBudget,
                &cli.config,
                cli.seed,
                &cli.output_dir,
                p,
            )?;
            print_record(&run_time_budget(&config)?);
        }
        Command::DataBudget {
            ref problem,
            ref n_points,
        } => {
            let mut config = resolve_config(
                ExperimentKind::DataBudget,
                &cli.config,
                cli.seed,
                &cli.output_dir,
                problem,
            )?;
            if n_points.is_some() {
                config.n_points = n_points.clone();
            }
            let (record, rows) = run_data_budget(&config)?;
            println!("n_points  min_error  time_to_min_s");
            for row in &rows {
                println!(
                    "{:>8}  {:>9}  {:>13.1}",
                    row.n_points,
                    row.min_error.map_or("n/a".into(), pct),
                    row.time_to_min_s.unwrap_or_default()
                );
            }
            println!("summary: {}", record.summary_path.display());
        }
        Command::Verify {
            ref problem,
            n_points,
        } => {
            // Verification has no problem of its own; missing fields fall to
            // placeholders so `maxnet verify` runs bare.
            let mut p = ProblemArgs::default();
            p.ground_truth = problem
                .ground_truth
                .clone()
                .or_else(|| Some("plane-waves".into()));
            p.setup = problem.setup.clone().or_else(|| Some("ic".into()));
            let config = resolve_config(
                ExperimentKind::Verify,
                &cli.config,
                cli.seed,
                &cli.output_dir,
                &p,
            )?;
            let report = run_verify(&config, n_points)?;
            for s in &report.residual {
                println!(
                    "residual width_half {:>5}: max |residual| {:.3e} ≤ {:.3e}  [{}]",
                    s.width_half,
                    s.max_abs_residual,
                    s.bound,
                    if s.pass { "ok" } else { "FAIL" }
                );
            }
            for r in &report.convergence {
                println!(
                    "fd convergence {:<20} ratio {:.3} (h {:.0e} → {:.0e})  [{}]",
                    r.ground_truth.to_string(),
                    r.ratio,
                    r.h_coarse,
                    r.h_fine,
                    if r.pass { "ok" } else { "FAIL" }
                );
            }
            println!(
                "multiplier identities: {}",
                if report.multiplier_identities_ok { "ok" } else { "FAIL" }
            );
            println!(
                "corrupted-multiplier detection: {}",
                if report.mutation_detected { "ok" } else { "FAIL" }
            );
        }
        Command::Gradcheck => {
            let mut p = ProblemArgs::default();
            p.ground_truth = Some("plane-waves".into());
            p.setup = Some("ic".into());
            let config = resolve_config(
                ExperimentKind::Gradcheck,
                &cli.config,
                cli.seed,
                &cli.output_dir,
                &p,
            )?;
            let report = run_gradcheck(&config)?;
            println!(
                "gradient check: {} cases, max relative error {:.3e} ≤ {:.0e}  [{}]",
                report.cases.len(),
                report.max_rel_error,
                report.tol,
                if report.pass { "ok" } else { "FAIL" }
            );
        }
        Command::ExactInit { ref terms, ref out } => {
            let text = std::fs::read_to_string(terms)?;
            let list: Vec<TrigTerm> =
                serde_json::from_str(&text).map_err(|e| Error::MalformedFile {
                    path: terms.display().to_string(),
                    reason: e.to_string(),
                })?;
            let params = assemble_cos_network(&list)?;
            save_checkpoint(out, &params, None)?;
            println!(
                "assembled {} terms into a width_half {} cosine network → {}",
                list.len(),
                params.width_half,
                out.display()
            );
        }
        Command::ExportField {
            ref ground_truth,
            ref checkpoint,
            grid,
            time,
            ref out,
        } => {
            if grid == 0 {
                return Err(usage("--grid must be positive"));
            }
            let points = grid_points(grid, time);
            let fields = match (ground_truth, checkpoint) {
                (Some(gt), None) => {
                    GroundTruth::new(gt.parse()?).eval_batch(&points)?
                }
                (None, Some(path)) => {
                    let (params, _) = load_checkpoint(path)?;
                    forward(&params, &points)
                }
                _ => {
                    return Err(usage(
                        "exactly one of --ground-truth or --checkpoint is required",
                    ))
                }
            };
            write_field_csv(out, &points, &fields)?;
            println!("wrote {} samples to {}", points.len(), out.display());
        }
        Command::Eval {
            ref checkpoint,
            ref problem,
        } => {
            let config = resolve_config(
                ExperimentKind::ExportField,
                &cli.config,
                cli.seed,
                &cli.output_dir,
                problem,
            )?;
            let (params, _) = load_checkpoint(checkpoint)?;
            let sampling = maxnet::sampling::SamplingConfig {
                setup: config.setup,
                ground_truth: config.ground_truth,
                seed: config.train.seed,
                ..config.sampling
            };
            let (points, targets) = sample_validation(&sampling)?;
            if points.is_empty() {
                return Err(usage("--n-val must be positive for eval"));
            }
            let report = EvalReport {
                rel_l2_error: relative_l2(&forward(&params, &points), &targets)?,
                residual_rmse: Some(residual_error_model(&params, &points)?),
                n_points: points.len(),
                setup: config.setup,
                ground_truth: config.ground_truth,
                seed: config.train.seed,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::VerificationFailed(_) => 2,
        Error::NonFiniteLoss { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version "errors" are successes; real parse errors
            // are usage errors (exit 1).
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: could not configure {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
