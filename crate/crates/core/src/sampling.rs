//! Observation and validation sampling for the two data setups.
//!
//! **ic** — pure initial-value data: points on the t=0 slice of the unit
//! cube with all six field components observed; validation points live in
//! the domain of dependence [0, 0.1] × [0.2, 0.8]³.
//!
//! **bc** — initial-boundary data on the 7 faces of the unit 4-cube that
//! carry data: the t=0 slice (full mask) plus the six spatial boundary
//! faces, where only the two tangential E components are observed (the
//! normal E component and the whole B field are masked out); validation
//! points are uniform in [0, 1]⁴.
//!
//! All draws come from a dedicated seeded stream in a fixed documented
//! order (per point: spatial coordinates in coordinate order, preceded by t
//! where t is free), so sampled sets are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::{GroundTruth, GroundTruthId};
use crate::model::{FieldSample, SpacetimePoint};
use crate::rng::{seeded_stream, uniform, StreamId};
use crate::train::ObservationSet;

/// Which observation protocol generates the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetupId {
    Ic,
    Bc,
}

impl std::fmt::Display for SetupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ic => "ic",
            Self::Bc => "bc",
        })
    }
}

impl std::str::FromStr for SetupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ic" => Ok(Self::Ic),
            "bc" => Ok(Self::Bc),
            other => Err(Error::InvalidConfig(format!(
                "unknown setup {other:?}; expected ic or bc"
            ))),
        }
    }
}

fn default_n_train() -> usize {
    2000
}

fn default_n_val() -> usize {
    10_000
}

/// What to sample: setup, sizes, seed, and the solution providing targets.
///
/// For the bc setup `n_train` is split as ⌊n_train/7⌋ points per face with
/// the remainder dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub setup: SetupId,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default)]
    pub seed: u64,
    pub ground_truth: GroundTruthId,
}

impl SamplingConfig {
    pub fn new(setup: SetupId, ground_truth: GroundTruthId) -> Self {
        Self {
            setup,
            n_train: default_n_train(),
            n_val: default_n_val(),
            seed: 0,
            ground_truth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::InvalidConfig("n_train must be positive".into()));
        }
        if self.setup == SetupId::Bc && self.n_train < 7 {
            return Err(Error::InvalidConfig(format!(
                "bc setup needs n_train ≥ 7 (⌊{}/7⌋ points per face would be zero)",
                self.n_train
            )));
        }
        Ok(())
    }
}

/// Mask observing only the E components tangential to the face whose
/// outward normal is spatial axis `axis` (1 = x, 2 = y, 3 = z).
pub(crate) fn tangential_mask(axis: usize) -> u8 {
    match axis {
        1 => ObservationSet::mask_bit(1) | ObservationSet::mask_bit(2),
        2 => ObservationSet::mask_bit(0) | ObservationSet::mask_bit(2),
        3 => ObservationSet::mask_bit(0) | ObservationSet::mask_bit(1),
        _ => unreachable!("spatial axis"),
    }
}

/// Draws the training observations for `config`.
pub fn sample_train(config: &SamplingConfig) -> Result<ObservationSet> {
    config.validate()?;
    let gt = GroundTruth::new(config.ground_truth);
    let mut rng = seeded_stream(config.seed, StreamId::TrainSampling);
    let mut points = Vec::new();
    let mut masks = Vec::new();

    let mut t0_slice = |n: usize, points: &mut Vec<SpacetimePoint>, masks: &mut Vec<u8>| {
        for _ in 0..n {
            let x = uniform(&mut rng, 0.0, 1.0);
            let y = uniform(&mut rng, 0.0, 1.0);
            let z = uniform(&mut rng, 0.0, 1.0);
            points.push(SpacetimePoint::new(0.0, x, y, z));
            masks.push(ObservationSet::FULL_MASK);
        }
    };

    match config.setup {
        SetupId::Ic => t0_slice(config.n_train, &mut points, &mut masks),
        SetupId::Bc => {
            let per_face = config.n_train / 7;
            t0_slice(per_face, &mut points, &mut masks);
            for (axis, value) in [
                (1, 0.0),
                (1, 1.0),
                (2, 0.0),
                (2, 1.0),
                (3, 0.0),
                (3, 1.0),
            ] {
                let mask = tangential_mask(axis);
                let free = match axis {
                    1 => [2, 3],
                    2 => [1, 3],
                    _ => [1, 2],
                };
                for _ in 0..per_face {
                    let mut c = [0.0f64; 4];
                    c[0] = uniform(&mut rng, 0.0, 1.0);
                    c[free[0]] = uniform(&mut rng, 0.0, 1.0);
                    c[free[1]] = uniform(&mut rng, 0.0, 1.0);
                    c[axis] = value;
                    points.push(SpacetimePoint::new(c[0], c[1], c[2], c[3]));
                    masks.push(mask);
                }
            }
        }
    }

    let targets = gt.eval_batch(&points)?;
    ObservationSet::new(points, targets, masks)
}

/// Draws the validation cloud for `config` (size `n_val`) with exact
/// targets.
pub fn sample_validation(
    config: &SamplingConfig,
) -> Result<(Vec<SpacetimePoint>, Vec<FieldSample>)> {
    let gt = GroundTruth::new(config.ground_truth);
    let mut rng = seeded_stream(config.seed, StreamId::ValidationSampling);
    let mut points = Vec::with_capacity(config.n_val);
    for _ in 0..config.n_val {
        let p = match config.setup {
            SetupId::Ic => SpacetimePoint::new(
                uniform(&mut rng, 0.0, 0.1),
                uniform(&mut rng, 0.2, 0.8),
                uniform(&mut rng, 0.2, 0.8),
                uniform(&mut rng, 0.2, 0.8),
            ),
            SetupId::Bc => SpacetimePoint::new(
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
            ),
        };
        points.push(p);
    }
    let targets = gt.eval_batch(&points)?;
    Ok((points, targets))
}
