//! Experiment orchestration: JSON-configured runs, deterministic run
//! directories, and the race / time-budget / data-budget / verify /
//! gradcheck protocols with mean ± standard-error aggregation over repeats.
//!
//! Every run writes its artifacts before returning — config snapshot,
//! training log, checkpoint, and evaluation report — so non-converged or
//! aborted runs still leave a complete audit trail. Repeats execute
//! sequentially to keep wall-clock measurements uncontended.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::ground_truth::GroundTruthId;
use crate::metrics::{relative_l2, residual_error_model, EvalReport};
use crate::model::forward;
use crate::sampling::{sample_train, sample_validation, SamplingConfig, SetupId};
use crate::train::{train, StopReason, TrainConfig, TrainLog, TrainOutcome};
use crate::verify;

/// Schema tag carried by every experiment config JSON.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Default point-count ladder for the data-budget protocol.
pub const DATA_BUDGET_POINTS: [usize; 8] = [100, 200, 500, 1000, 2000, 5000, 10_000, 12_000];
/// The data-budget protocol runs one repeat at this fixed seed.
pub const DATA_BUDGET_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Plain training (no protocol-imposed stopping rule).
    Train,
    Race,
    TimeBudget,
    DataBudget,
    Verify,
    Gradcheck,
    ExactInit,
    ExportField,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Train => "train",
            Self::Race => "race",
            Self::TimeBudget => "time-budget",
            Self::DataBudget => "data-budget",
            Self::Verify => "verify",
            Self::Gradcheck => "gradcheck",
            Self::ExactInit => "exact-init",
            Self::ExportField => "export-field",
        };
        f.write_str(s)
    }
}

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_repeats() -> u32 {
    5
}

fn sampling_placeholder() -> SamplingConfig {
    SamplingConfig::new(SetupId::Ic, GroundTruthId::PlaneWaves)
}

/// One experiment, fully specified. `ground_truth`, `setup`, and the repeat
/// seed are single-sourced at this level: matching fields inside `sampling`
/// are overwritten when the run is materialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub ground_truth: GroundTruthId,
    pub setup: SetupId,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "sampling_placeholder")]
    pub sampling: SamplingConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Repeats fan seeds out as seed, seed+1, … and aggregate.
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    /// Data-budget protocol only: training-set sizes to sweep.
    #[serde(default)]
    pub n_points: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn new(
        experiment: ExperimentKind,
        ground_truth: GroundTruthId,
        setup: SetupId,
    ) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment,
            ground_truth,
            setup,
            train: TrainConfig::default(),
            sampling: SamplingConfig::new(setup, ground_truth),
            output_dir: default_output_dir(),
            repeats: default_repeats(),
            n_points: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be positive".into()));
        }
        self.train.validate()?;
        match self.experiment {
            ExperimentKind::TimeBudget if self.train.wall_clock_budget_s.is_none() => Err(
                Error::InvalidConfig("time-budget requires wall_clock_budget_s".into()),
            ),
            ExperimentKind::DataBudget
                if self.n_points.as_deref().is_some_and(<[usize]>::is_empty) =>
            {
                Err(Error::InvalidConfig("n_points must be nonempty".into()))
            }
            _ => Ok(()),
        }
    }

    /// The sampling configuration actually used for a repeat: top-level
    /// ground truth / setup, per-repeat seed.
    fn effective_sampling(&self, seed: u64) -> SamplingConfig {
        SamplingConfig {
            setup: self.setup,
            ground_truth: self.ground_truth,
            seed,
            ..self.sampling
        }
    }

    /// Deterministic run directory name.
    pub fn run_id(&self, seed: u64) -> String {
        let gt = self.ground_truth.to_string().replace(':', "-");
        format!("{}-{}-{}-s{}", self.experiment, gt, self.setup, seed)
    }
}

/// Mean and standard error of the mean (sample standard deviation / √n;
/// zero for a single repeat).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, sem })
    }
}

/// Everything recorded about one trained repeat.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub seed: u64,
    pub eval: EvalReport,
    pub stop_reason: StopReason,
    /// Race protocol: whether the target error was reached.
    pub reached_target: Option<bool>,
    /// Race protocol: seconds to the stopping validation; the full budget
    /// for non-converged runs.
    pub time_to_target_s: Option<f64>,
    pub min_val_error: Option<f64>,
    pub time_to_min_s: Option<f64>,
    pub n_train: usize,
    pub steps: u64,
    pub config_path: PathBuf,
    pub trainlog_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Summary over the repeats of one experiment invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub ground_truth: GroundTruthId,
    pub setup: SetupId,
    pub runs: Vec<RunReport>,
    /// Aggregate of min validation errors over repeats.
    pub error_aggregate: Option<Aggregate>,
    /// Aggregate of time-to-target (race) or time-to-min (otherwise).
    pub time_aggregate: Option<Aggregate>,
    pub summary_path: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Seconds at which the logged best validation error was first reached.
fn time_to_min(log: &TrainLog) -> Option<f64> {
    let best = log.min_val_error()?;
    log.records
        .iter()
        .find(|r| r.val_rel_error == Some(best))
        .map(|r| r.wall_seconds_total)
}

/// Trains one repeat and writes its artifact directory; returns the report.
fn run_one(config: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    let run_id = config.run_id(seed);
    let dir = config.output_dir.join(&run_id);
    fs::create_dir_all(&dir)?;

    let mut effective = config.clone();
    effective.train.seed = seed;
    effective.sampling = config.effective_sampling(seed);
    let config_path = dir.join("config.json");
    write_json(&config_path, &effective)?;

    let obs = sample_train(&effective.sampling)?;
    let (val_points, val_targets) = sample_validation(&effective.sampling)?;

    let trainlog_path = dir.join("trainlog.csv");
    let checkpoint_path = dir.join("checkpoint.json");
    let outcome = match train(&effective.train, &obs, &val_points, &val_targets) {
        Ok(outcome) => outcome,
        Err(Error::NonFiniteLoss {
            step,
            epoch,
            loss,
            log,
        }) => {
            // Leave the audit trail before surfacing the abort.
            log.write_csv(&trainlog_path)?;
            return Err(Error::NonFiniteLoss {
                step,
                epoch,
                loss,
                log,
            });
        }
        Err(e) => return Err(e),
    };
    let TrainOutcome {
        params,
        optimizer,
        log,
    } = outcome;
    log.write_csv(&trainlog_path)?;
    save_checkpoint(&checkpoint_path, &params, Some(&optimizer))?;

    let rel_l2_error = if val_points.is_empty() {
        f64::NAN
    } else {
        relative_l2(&forward(&params, &val_points), &val_targets)?
    };
    let residual_rmse = if val_points.is_empty() {
        None
    } else {
        Some(residual_error_model(&params, &val_points)?)
    };
    let eval = EvalReport {
        rel_l2_error,
        residual_rmse,
        n_points: val_points.len(),
        setup: config.setup,
        ground_truth: config.ground_truth,
        seed,
    };

    let reached = log.stop_reason == StopReason::TargetReached;
    let (reached_target, time_to_target_s) = match config.experiment {
        ExperimentKind::Race => {
            let t = if reached {
                log.final_total_seconds()
            } else {
                effective
                    .train
                    .wall_clock_budget_s
                    .unwrap_or_else(|| log.final_total_seconds())
            };
            (Some(reached), Some(t))
        }
        _ => (None, None),
    };

    let report = RunReport {
        run_id,
        seed,
        eval,
        stop_reason: log.stop_reason,
        reached_target,
        time_to_target_s,
        min_val_error: log.min_val_error(),
        time_to_min_s: time_to_min(&log),
        n_train: obs.len(),
        steps: log.records.last().map_or(0, |r| r.step),
        config_path,
        trainlog_path,
        checkpoint_path,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn summarize(config: &ExperimentConfig, runs: Vec<RunReport>) -> Result<RunRecord> {
    let errors: Vec<f64> = runs.iter().filter_map(|r| r.min_val_error).collect();
    let times: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.time_to_target_s.or(r.time_to_min_s))
        .collect();
    let summary_path = config.output_dir.join(format!(
        "{}-summary.json",
        config.run_id(config.train.seed)
    ));
    let record = RunRecord {
        schema_version: CONFIG_SCHEMA_VERSION,
        experiment: config.experiment,
        ground_truth: config.ground_truth,
        setup: config.setup,
        runs,
        error_aggregate: Aggregate::from_values(&errors),
        time_aggregate: Aggregate::from_values(&times),
        summary_path: summary_path.clone(),
    };
    write_json(&summary_path, &record)?;
    Ok(record)
}

/// Plain training: run the configured repeats to whatever stopping rule the
/// training config carries (epoch cap, budget, optional target).
pub fn run_train(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let base = config.train.seed;
    let runs = (0..config.repeats)
        .map(|i| run_one(config, base + u64::from(i)))
        .collect::<Result<Vec<_>>>()?;
    summarize(config, runs)
}

/// Race to a target validation error with early stopping; non-converged
/// repeats report the budget time and their best error.
pub fn run_race(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let mut config = config.clone();
    config.train.target_rel_error = Some(config.train.target_rel_error.unwrap_or(0.05));
    let base = config.train.seed;
    let runs = (0..config.repeats)
        .map(|i| run_one(&config, base + u64::from(i)))
        .collect::<Result<Vec<_>>>()?;
    summarize(&config, runs)
}

/// Train to a fixed wall-clock budget; the training log is the full
/// error-versus-time curve.
pub fn run_time_budget(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    if config.train.wall_clock_budget_s.is_none() {
        return Err(Error::InvalidConfig(
            "time-budget requires wall_clock_budget_s".into(),
        ));
    }
    let base = config.train.seed;
    let runs = (0..config.repeats)
        .map(|i| run_one(config, base + u64::from(i)))
        .collect::<Result<Vec<_>>>()?;
    summarize(config, runs)
}

/// One row of the data-budget table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DataBudgetRow {
    pub n_points: usize,
    pub min_error: Option<f64>,
    pub time_to_min_s: Option<f64>,
}

/// Sweep the number of training points at fixed seed 42, one run each.
pub fn run_data_budget(config: &ExperimentConfig) -> Result<(RunRecord, Vec<DataBudgetRow>)> {
    config.validate()?;
    let ladder: Vec<usize> = config
        .n_points
        .clone()
        .unwrap_or_else(|| DATA_BUDGET_POINTS.to_vec());
    let mut runs = Vec::with_capacity(ladder.len());
    let mut rows = Vec::with_capacity(ladder.len());
    for &n in &ladder {
        let mut one = config.clone();
        one.train.seed = DATA_BUDGET_SEED;
        one.sampling.n_train = n;
        // Distinct directories per ladder rung.
        one.output_dir = config.output_dir.join(format!("n{n}"));
        let report = run_one(&one, DATA_BUDGET_SEED)?;
        rows.push(DataBudgetRow {
            n_points: n,
            min_error: report.min_val_error,
            time_to_min_s: report.time_to_min_s,
        });
        runs.push(report);
    }
    let mut summary_config = config.clone();
    summary_config.train.seed = DATA_BUDGET_SEED;
    let record = summarize(&summary_config, runs)?;
    let table_path = config.output_dir.join(format!(
        "{}-table.json",
        summary_config.run_id(DATA_BUDGET_SEED)
    ));
    write_json(&table_path, &rows)?;
    Ok((record, rows))
}

/// Combined verification report (residual exactness, FD convergence,
/// multiplier identities, and the harness's own mutation self-test).
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub residual: Vec<verify::ResidualStats>,
    pub convergence: Vec<verify::ConvergenceRow>,
    pub multiplier_identities_ok: bool,
    /// True when a deliberately corrupted multiplier is caught — proof the
    /// identity check has teeth.
    pub mutation_detected: bool,
    pub pass: bool,
}

/// Runs the full verification suite and writes report.json; returns the
/// offending statistic as an error if any bound is violated.
pub fn run_verify(config: &ExperimentConfig, n_points: usize) -> Result<VerifyReport> {
    config.validate()?;
    let seed = config.train.seed;
    let residual = verify::residual_exactness(&[1, 16, 128, 1024], n_points, seed);
    let convergence = verify::fd_convergence(seed)?;
    let multiplier_identities_ok = verify::multiplier_identity_check(seed).is_ok();
    let mutation_detected = verify::multiplier_identity_check_with(
        |branch, z| {
            let mut p = crate::model::noetherian_multiplier(branch, z);
            p[0] = -p[0] + 2.0 * f64::EPSILON; // corrupt: flip a sign (and break the zero entries)
            p
        },
        seed,
    )
    .is_err();
    let pass = residual.iter().all(|s| s.pass)
        && convergence.iter().all(|r| r.pass)
        && multiplier_identities_ok
        && mutation_detected;
    let report = VerifyReport {
        residual,
        convergence,
        multiplier_identities_ok,
        mutation_detected,
        pass,
    };
    let dir = config.output_dir.join(config.run_id(seed));
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    if !report.pass {
        verify::assert_residual_exactness(&report.residual)?;
        verify::assert_fd_convergence(&report.convergence)?;
        verify::multiplier_identity_check(seed)?;
        return Err(Error::VerificationFailed(
            "corrupted-multiplier mutation was not detected".into(),
        ));
    }
    Ok(report)
}

/// Runs the finite-difference gradient sweep and writes report.json.
pub fn run_gradcheck(config: &ExperimentConfig) -> Result<verify::GradCheckReport> {
    config.validate()?;
    let report = verify::gradient_check_default()?;
    let dir = config.output_dir.join(config.run_id(config.train.seed));
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    verify::assert_gradient_check(&report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::checkpoint::load_checkpoint;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(
            ExperimentKind::Race,
            GroundTruthId::PlaneWaves,
            SetupId::Ic,
        );
        config.train = TrainConfig {
            width_half: 4,
            activation: Activation::Tanh,
            max_epochs: 3,
            cosine_epochs: 3,
            batch_size: 16,
            val_every_steps: 2,
            ..TrainConfig::default()
        };
        config.sampling.n_train = 16;
        config.sampling.n_val = 32;
        config.repeats = 2;
        config.output_dir = dir.to_path_buf();
        config
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let a = Aggregate::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.n, 3);
        assert!((a.mean - 2.0).abs() < 1e-15);
        // sample std = 1, sem = 1/√3
        assert!((a.sem - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
        let single = Aggregate::from_values(&[5.0]).unwrap();
        assert_eq!(single.sem, 0.0);
        assert!(Aggregate::from_values(&[]).is_none());
    }

    #[test]
    fn config_json_round_trip_and_schema_gate() {
        let config = ExperimentConfig::new(
            ExperimentKind::TimeBudget,
            GroundTruthId::HopfFibration,
            SetupId::Bc,
        );
        let text = serde_json::to_string(&config).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        assert!(text.contains("\"time_budget\""));
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.ground_truth, GroundTruthId::HopfFibration);

        let mut bad = config;
        bad.schema_version = 99;
        assert!(matches!(
            bad.validate().unwrap_err(),
            Error::SchemaVersion { found: 99, .. }
        ));
    }

    #[test]
    fn minimal_config_json_fills_defaults() {
        let text = r#"{
            "experiment": "race",
            "ground_truth": "plane-waves",
            "setup": "ic"
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.schema_version, CONFIG_SCHEMA_VERSION);
        assert_eq!(config.repeats, 5);
        assert_eq!(config.sampling.n_train, 2000);
        assert_eq!(config.train.width_half, 5000);
    }

    #[test]
    fn race_writes_artifacts_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let record = run_race(&config).unwrap();
        assert_eq!(record.runs.len(), 2);
        assert_eq!(record.runs[0].seed, 0);
        assert_eq!(record.runs[1].seed, 1);
        let agg = record.error_aggregate.unwrap();
        assert_eq!(agg.n, 2);
        for run in &record.runs {
            assert!(run.config_path.exists());
            assert!(run.trainlog_path.exists());
            assert!(run.checkpoint_path.exists());
            let (params, opt) = load_checkpoint(&run.checkpoint_path).unwrap();
            assert_eq!(params.width_half, 4);
            assert!(opt.is_some());
            // Per-repeat seed is stamped into the config snapshot.
            let snap = ExperimentConfig::from_json_file(&run.config_path).unwrap();
            assert_eq!(snap.train.seed, run.seed);
            assert_eq!(snap.sampling.seed, run.seed);
        }
        assert!(record.summary_path.exists());
        assert!(record.runs[0].run_id.starts_with("race-plane-waves-ic-s0"));
    }

    #[test]
    fn race_with_already_met_target_stops_at_first_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.repeats = 1;
        // Measure the untrained model's validation error, then race with a
        // target just above it: the step-0 validation must stop the run.
        let sampling = SamplingConfig {
            seed: 0,
            ..config.sampling
        };
        let (points, targets) = crate::sampling::sample_validation(&sampling).unwrap();
        let init = crate::train::init_params(&config.train);
        let e0 = crate::metrics::relative_l2(&crate::model::forward(&init, &points), &targets)
            .unwrap();
        config.train.target_rel_error = Some(e0 * 1.01);
        let record = run_race(&config).unwrap();
        let run = &record.runs[0];
        assert_eq!(run.stop_reason, StopReason::TargetReached);
        assert_eq!(run.reached_target, Some(true));
        assert_eq!(run.steps, 0, "stops at the step-0 validation");
    }

    #[test]
    fn data_budget_sweeps_point_ladder_at_fixed_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.experiment = ExperimentKind::DataBudget;
        config.repeats = 3; // ignored: protocol fixes one repeat
        config.n_points = Some(vec![8, 16]);
        let (record, rows) = run_data_budget(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(record.runs.len(), 2);
        assert_eq!(rows[0].n_points, 8);
        assert!(rows.iter().all(|r| r.min_error.is_some()));
        assert!(record.runs.iter().all(|r| r.seed == DATA_BUDGET_SEED));
        assert_eq!(record.runs[0].n_train, 8);
        assert_eq!(record.runs[1].n_train, 16);
    }

    #[test]
    fn time_budget_requires_budget_and_zero_budget_validates_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.experiment = ExperimentKind::TimeBudget;
        config.repeats = 1;
        assert!(run_time_budget(&config).is_err());
        config.train.wall_clock_budget_s = Some(0.0);
        let record = run_time_budget(&config).unwrap();
        let run = &record.runs[0];
        assert_eq!(run.stop_reason, StopReason::WallClock);
        assert_eq!(run.steps, 0);
        assert!(run.min_val_error.is_some());
    }

    #[test]
    fn verify_report_passes_at_small_scale() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.experiment = ExperimentKind::Verify;
        // Small residual sweep keeps this test fast; the full-size sweep is
        // the acceptance run.
        let report = run_verify(&config, 200).unwrap();
        assert!(report.pass);
        assert!(report.mutation_detected);
        assert_eq!(report.residual.len(), 4);
        assert_eq!(report.convergence.len(), 4);
    }
}
