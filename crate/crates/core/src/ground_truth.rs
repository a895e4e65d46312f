//! Closed-form benchmark solutions of the homogeneous Maxwell system and a
//! finite-difference residual oracle that certifies any field — including
//! these — independently of how it was produced.
//!
//! Four families:
//! * **plane-waves** — superposition of three polarized plane waves with a
//!   wavelet profile (second derivative of a squared-exponential bump);
//! * **radial-waves** — an outward-dissipating spherical pulse, singular
//!   only at the spatial origin;
//! * **hopf-fibration** — a rational (polynomial-quotient) electromagnetic
//!   knot, smooth everywhere;
//! * **random-solution:SEED** — 100 random plane waves with Gaussian
//!   directions and shifts, statistically indistinguishable from a generic
//!   solution.
//!
//! Plane waves and the random solution share one representation (a list of
//! superposition terms), so term-level properties — Maxwell-symbol
//! annihilation of each amplitude, translation along a wave direction —
//! are tested on both through the same code path.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{spatial_norm, FieldSample, SpacetimePoint};
use crate::rng::{seeded_stream, StreamId};

/// Default central-difference step: balances O(h²) truncation against
/// O(ε/h) roundoff for fields of order one.
pub const FD_DEFAULT_H: f64 = 1e-4;

/// Radial-wave fields are rejected (not clamped) below this radius; random
/// samplers avoid the singular point almost surely.
pub const RADIAL_MIN_R: f64 = 1e-8;

/// Wavelet center for the plane-wave and random-solution profiles.
const WAVE_CENTER: f64 = 0.3;
/// Pulse center for the radial-wave profile.
const RADIAL_CENTER: f64 = 0.7;

const RANDOM_TERM_COUNT: usize = 100;
pub const DEFAULT_RANDOM_SEED: u64 = 42;

/// Which benchmark solution to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GroundTruthId {
    PlaneWaves,
    RadialWaves,
    HopfFibration,
    RandomSolution { seed: u64 },
}

impl fmt::Display for GroundTruthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PlaneWaves => write!(f, "plane-waves"),
            Self::RadialWaves => write!(f, "radial-waves"),
            Self::HopfFibration => write!(f, "hopf-fibration"),
            Self::RandomSolution { seed } => write!(f, "random-solution:{seed}"),
        }
    }
}

impl FromStr for GroundTruthId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane-waves" => Ok(Self::PlaneWaves),
            "radial-waves" => Ok(Self::RadialWaves),
            "hopf-fibration" => Ok(Self::HopfFibration),
            "random-solution" => Ok(Self::RandomSolution {
                seed: DEFAULT_RANDOM_SEED,
            }),
            other => {
                if let Some(seed) = other.strip_prefix("random-solution:") {
                    let seed = seed.parse::<u64>().map_err(|e| {
                        Error::InvalidConfig(format!("bad random-solution seed {seed:?}: {e}"))
                    })?;
                    Ok(Self::RandomSolution { seed })
                } else {
                    Err(Error::InvalidConfig(format!(
                        "unknown ground truth {other:?}; expected plane-waves, radial-waves, \
                         hopf-fibration, or random-solution[:SEED]"
                    )))
                }
            }
        }
    }
}

impl From<GroundTruthId> for String {
    fn from(id: GroundTruthId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for GroundTruthId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One plane wave of a superposition: field = (amp_e, amp_b) · F(z·x + b).
#[derive(Debug, Clone, Copy)]
pub(crate) struct SuperpositionTerm {
    pub z: [f64; 4],
    pub b: f64,
    pub amp_e: [f64; 3],
    pub amp_b: [f64; 3],
}

impl SuperpositionTerm {
    #[inline]
    pub fn phase(&self, x: &SpacetimePoint) -> f64 {
        self.z[0] * x.t + self.z[1] * x.x + self.z[2] * x.y + self.z[3] * x.z + self.b
    }
}

/// The wavelet profile F(s) = −0.2·e^{−10(s−c)²}·[1 − 20(s−c)²], the second
/// derivative of 0.01·e^{−10(s−c)²}.
pub(crate) fn wave_profile(s: f64, center: f64) -> f64 {
    let d = s - center;
    -0.2 * (-10.0 * d * d).exp() * (1.0 - 20.0 * d * d)
}

fn radial_f(s: f64) -> f64 {
    let d = s - RADIAL_CENTER;
    0.01 * (-10.0 * d * d).exp()
}

fn radial_fp(s: f64) -> f64 {
    let d = s - RADIAL_CENTER;
    -0.2 * d * (-10.0 * d * d).exp()
}

fn radial_fpp(s: f64) -> f64 {
    let d = s - RADIAL_CENTER;
    -0.2 * (-10.0 * d * d).exp() * (1.0 - 20.0 * d * d)
}

fn plane_wave_terms() -> Vec<SuperpositionTerm> {
    let r3 = 3.0f64.sqrt();
    let r6 = 6.0f64.sqrt();
    vec![
        SuperpositionTerm {
            z: [r3, 1.0, 1.0, 1.0],
            b: 0.0,
            amp_e: [1.0 - r3, 1.0 + r3, -2.0],
            amp_b: [r3 + 1.0, 1.0 - r3, -2.0],
        },
        SuperpositionTerm {
            z: [r3, -1.0, 1.0, 1.0],
            b: 0.0,
            amp_e: [-(1.0 + r3), 1.0 - r3, -2.0],
            amp_b: [r3 - 1.0, 1.0 + r3, -2.0],
        },
        SuperpositionTerm {
            z: [r6, -1.0, -2.0, 1.0],
            b: 0.0,
            amp_e: [1.0 - 2.0 * r6, 2.0 + r6, 5.0],
            amp_b: [2.0 * r6 + 1.0, 2.0 - r6, 5.0],
        },
    ]
}

/// Draws the 100 random-wave terms. Per term, in order: z1, z2, z3 from
/// N(0, 0.1²), then the shift b from N(0, 1); z0 = +‖(z1,z2,z3)‖.
fn random_solution_terms(seed: u64) -> Vec<SuperpositionTerm> {
    let mut rng = seeded_stream(seed, StreamId::RandomSolution);
    let freq = Normal::new(0.0, 0.1).expect("fixed std");
    let shift = Normal::new(0.0, 1.0).expect("fixed std");
    (0..RANDOM_TERM_COUNT)
        .map(|_| {
            let z1 = freq.sample(&mut rng);
            let z2 = freq.sample(&mut rng);
            let z3 = freq.sample(&mut rng);
            let b = shift.sample(&mut rng);
            let z0 = spatial_norm([z1, z2, z3]);
            SuperpositionTerm {
                z: [z0, z1, z2, z3],
                b,
                amp_e: [z1 * z3 - z2 * z0, z2 * z3 + z1 * z0, z3 * z3 - z0 * z0],
                amp_b: [z0 * z2 + z1 * z3, -z0 * z1 + z2 * z3, -z1 * z1 - z2 * z2],
            }
        })
        .collect()
}

/// A benchmark solution, ready to evaluate. Construct once per id and share
/// read-only; the random solution pre-draws its terms here.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    id: GroundTruthId,
    terms: Vec<SuperpositionTerm>,
}

impl GroundTruth {
    pub fn new(id: GroundTruthId) -> Self {
        let terms = match id {
            GroundTruthId::PlaneWaves => plane_wave_terms(),
            GroundTruthId::RandomSolution { seed } => random_solution_terms(seed),
            _ => Vec::new(),
        };
        Self { id, terms }
    }

    pub fn id(&self) -> GroundTruthId {
        self.id
    }

    #[cfg(test)]
    pub(crate) fn terms(&self) -> &[SuperpositionTerm] {
        &self.terms
    }

    /// Exact field value at one point.
    pub fn eval(&self, x: &SpacetimePoint) -> Result<FieldSample> {
        match self.id {
            GroundTruthId::PlaneWaves | GroundTruthId::RandomSolution { .. } => {
                Ok(eval_superposition(&self.terms, x))
            }
            GroundTruthId::RadialWaves => eval_radial(x),
            GroundTruthId::HopfFibration => Ok(eval_hopf(x)),
        }
    }

    /// Batched evaluation; fails on the first invalid point.
    pub fn eval_batch(&self, points: &[SpacetimePoint]) -> Result<Vec<FieldSample>> {
        points.par_iter().map(|x| self.eval(x)).collect()
    }

    /// Central-difference Maxwell residual of this solution at `x`;
    /// O(h²)-small everywhere the field is smooth.
    pub fn fd_residual(&self, x: &SpacetimePoint, h: f64) -> Result<[f64; 8]> {
        fd_residual(&|p: &SpacetimePoint| self.eval(p), x, h)
    }
}

/// One-off evaluation; prefer constructing a [`GroundTruth`] when evaluating
/// many points of a random solution.
pub fn eval_ground_truth(id: GroundTruthId, x: &SpacetimePoint) -> Result<FieldSample> {
    GroundTruth::new(id).eval(x)
}

fn eval_superposition(terms: &[SuperpositionTerm], x: &SpacetimePoint) -> FieldSample {
    let mut out = FieldSample::default();
    for term in terms {
        let f = wave_profile(term.phase(x), WAVE_CENTER);
        for c in 0..3 {
            out.e[c] += term.amp_e[c] * f;
            out.b[c] += term.amp_b[c] * f;
        }
    }
    out
}

fn eval_radial(p: &SpacetimePoint) -> Result<FieldSample> {
    let (x, y, z) = (p.x, p.y, p.z);
    let r = spatial_norm([x, y, z]);
    if r < RADIAL_MIN_R {
        return Err(Error::RadialSingularity {
            r,
            min: RADIAL_MIN_R,
        });
    }
    let s = r - p.t;
    let f = radial_f(s);
    let fp = radial_fp(s);
    let fpp = radial_fpp(s);
    let r2 = r * r;
    let r3 = r2 * r;
    let r4 = r3 * r;
    let r5 = r4 * r;
    let g = fp / r2 - f / r3;
    let h = fpp / r3 - 3.0 * fp / r4 + 3.0 * f / r5;
    let q = -fpp / r2 + fp / r3;
    Ok(FieldSample {
        e: [
            10.0 * (x * z * h - y * q),
            10.0 * (y * z * h + x * q),
            10.0 * (g + z * z * h - fpp / r),
        ],
        b: [
            10.0 * (y * q + x * z * h),
            10.0 * (-x * q + y * z * h),
            10.0 * (-2.0 * g - (x * x + y * y) * h),
        ],
    })
}

fn eval_hopf(p: &SpacetimePoint) -> FieldSample {
    let (t, x, y, z) = (p.t, p.x, p.y, p.z);
    let a = 1.0 + x * x + y * y + z * z - t * t;
    let a2 = a * a;
    let t2 = t * t;
    let t1 = a * a2 - 12.0 * t2 * a;
    let tt2 = 8.0 * t2 * t - 6.0 * t * a2;
    let base = a2 + 4.0 * t2;
    let dinv = 1.0 / (base * base * base);
    let u = t - z;
    // The six quadratic brackets shared between E and B.
    let k1 = u * u - 1.0 - x * x + y * y;
    let k2 = 2.0 * x * y - 2.0 * u;
    let k3 = 1.0 - u * u - x * x + y * y;
    let k4 = -2.0 * x * y - 2.0 * u;
    let k5 = 2.0 * x * u - 2.0 * y;
    let k6 = 2.0 * x + 2.0 * y * u;
    FieldSample {
        e: [
            dinv * (t1 * k1 - tt2 * k2),
            dinv * (t1 * k4 - tt2 * k3),
            dinv * (t1 * k5 + tt2 * k6),
        ],
        b: [
            dinv * (tt2 * k1 + t1 * k2),
            dinv * (tt2 * k4 + t1 * k3),
            dinv * (tt2 * k5 - t1 * k6),
        ],
    }
}

/// Central-difference Maxwell residual
/// (∂tE − ∇×B, ∂tB + ∇×E, ∇·E, ∇·B) of an arbitrary field at `x`.
///
/// Evaluates the field at the 8 stencil points x ± h·e_axis. Second-order
/// accurate for C³ fields; propagates any evaluation error.
pub fn fd_residual<F>(field: &F, x: &SpacetimePoint, h: f64) -> Result<[f64; 8]>
where
    F: Fn(&SpacetimePoint) -> Result<FieldSample>,
{
    debug_assert!(h > 0.0, "step must be positive");
    // de[axis][comp] = ∂ E_comp / ∂ axis, axes ordered (t, x, y, z).
    let mut de = [[0.0f64; 3]; 4];
    let mut db = [[0.0f64; 3]; 4];
    for axis in 0..4 {
        let fp = field(&x.shifted(axis, h))?;
        let fm = field(&x.shifted(axis, -h))?;
        for c in 0..3 {
            de[axis][c] = (fp.e[c] - fm.e[c]) / (2.0 * h);
            db[axis][c] = (fp.b[c] - fm.b[c]) / (2.0 * h);
        }
    }
    let curl_e = [
        de[2][2] - de[3][1],
        de[3][0] - de[1][2],
        de[1][1] - de[2][0],
    ];
    let curl_b = [
        db[2][2] - db[3][1],
        db[3][0] - db[1][2],
        db[1][1] - db[2][0],
    ];
    Ok([
        de[0][0] - curl_b[0],
        de[0][1] - curl_b[1],
        de[0][2] - curl_b[2],
        db[0][0] + curl_e[0],
        db[0][1] + curl_e[1],
        db[0][2] + curl_e[2],
        de[1][0] + de[2][1] + de[3][2],
        db[1][0] + db[2][1] + db[3][2],
    ])
}

/// Writes a sampled field as CSV with header t,x,y,z,E1,E2,E3,B1,B2,B3
/// (lossless shortest-round-trip number formatting).
pub fn write_field_csv(
    path: &Path,
    points: &[SpacetimePoint],
    fields: &[FieldSample],
) -> Result<()> {
    assert_eq!(points.len(), fields.len(), "one field sample per point");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "y", "z", "E1", "E2", "E3", "B1", "B2", "B3"])?;
    for (p, f) in points.iter().zip(fields) {
        let mut rec = Vec::with_capacity(10);
        for v in p.coords().iter().chain(f.components().iter()) {
            rec.push(v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lift_frequency, maxwell_symbol_apply, ulp_gap, FrequencyVector};
    use crate::rng::uniform;

    fn interior_point(rng: &mut rand_chacha::ChaCha8Rng) -> SpacetimePoint {
        SpacetimePoint::new(
            uniform(rng, 0.0, 1.0),
            uniform(rng, 0.2, 0.8),
            uniform(rng, 0.2, 0.8),
            uniform(rng, 0.2, 0.8),
        )
    }

    #[test]
    fn id_string_round_trip() {
        for id in [
            GroundTruthId::PlaneWaves,
            GroundTruthId::RadialWaves,
            GroundTruthId::HopfFibration,
            GroundTruthId::RandomSolution { seed: 7 },
        ] {
            assert_eq!(id.to_string().parse::<GroundTruthId>().unwrap(), id);
        }
        assert_eq!(
            "random-solution".parse::<GroundTruthId>().unwrap(),
            GroundTruthId::RandomSolution {
                seed: DEFAULT_RANDOM_SEED
            }
        );
        assert!("fourier".parse::<GroundTruthId>().is_err());
    }

    #[test]
    fn wave_profile_center_value() {
        assert_eq!(wave_profile(0.3, WAVE_CENTER), -0.2);
        assert_eq!(wave_profile(1.0, WAVE_CENTER), radial_fpp(1.4));
    }

    #[test]
    fn hopf_origin_exact() {
        let f = eval_ground_truth(GroundTruthId::HopfFibration, &SpacetimePoint::new(0., 0., 0., 0.))
            .unwrap();
        assert_eq!(f.e, [-1.0, 0.0, 0.0]);
        assert_eq!(f.b, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn radial_singularity_is_an_error() {
        let gt = GroundTruth::new(GroundTruthId::RadialWaves);
        let err = gt.eval(&SpacetimePoint::new(0.5, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::RadialSingularity { .. }));
        assert!(gt.eval(&SpacetimePoint::new(0.5, 0.1, 0.0, 0.0)).is_ok());
    }

    /// Every superposition term's frequency lies on the light cone and its
    /// amplitude is annihilated by the Maxwell symbol — that is what makes
    /// these closed forms solutions.
    #[test]
    fn superposition_terms_solve_maxwell() {
        for id in [
            GroundTruthId::PlaneWaves,
            GroundTruthId::RandomSolution { seed: 42 },
            GroundTruthId::RandomSolution { seed: 7 },
        ] {
            let gt = GroundTruth::new(id);
            assert!(!gt.terms().is_empty());
            for term in gt.terms() {
                let z = FrequencyVector(term.z);
                assert!(term.z[0] >= 0.0);
                assert!(z.cone_gap_ulps() <= 4.0);
                let amp = [
                    term.amp_e[0],
                    term.amp_e[1],
                    term.amp_e[2],
                    term.amp_b[0],
                    term.amp_b[1],
                    term.amp_b[2],
                ];
                let scale: f64 = term.z.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let sym = maxwell_symbol_apply(z, amp);
                for v in sym {
                    assert!(
                        v.abs() <= 64.0 * f64::EPSILON * scale.powi(3).max(1e-30),
                        "symbol residual {v:e} for term {term:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn random_solution_is_deterministic_per_seed() {
        let a = GroundTruth::new(GroundTruthId::RandomSolution { seed: 42 });
        let b = GroundTruth::new(GroundTruthId::RandomSolution { seed: 42 });
        let c = GroundTruth::new(GroundTruthId::RandomSolution { seed: 43 });
        assert_eq!(a.terms().len(), 100);
        let x = SpacetimePoint::new(0.4, 0.3, 0.6, 0.1);
        assert_eq!(a.eval(&x).unwrap(), b.eval(&x).unwrap());
        assert_ne!(a.eval(&x).unwrap(), c.eval(&x).unwrap());
    }

    /// Summing the random solution's terms in reverse order must agree with
    /// the canonical order up to tiny roundoff.
    #[test]
    fn superposition_order_independence() {
        let gt = GroundTruth::new(GroundTruthId::RandomSolution { seed: 42 });
        let mut rng = seeded_stream(1, StreamId::Verify);
        for _ in 0..50 {
            let x = interior_point(&mut rng);
            let fwd = gt.eval(&x).unwrap();
            let reversed: Vec<_> = gt.terms().iter().rev().copied().collect();
            let rev = eval_superposition(&reversed, &x);
            for (a, b) in fwd.components().iter().zip(rev.components()) {
                assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
            }
        }
    }

    /// Translating a single wave along its own direction re-evaluates the
    /// profile at a shifted argument.
    #[test]
    fn wave_translation_property() {
        for id in [
            GroundTruthId::PlaneWaves,
            GroundTruthId::RandomSolution { seed: 42 },
        ] {
            let gt = GroundTruth::new(id);
            let mut rng = seeded_stream(2, StreamId::Verify);
            for term in gt.terms().iter().take(10) {
                let single = vec![*term];
                let x = interior_point(&mut rng);
                let tau = uniform(&mut rng, -0.5, 0.5);
                // Direction (z0, ξ) shifts the phase by 2·z0²·τ.
                let shifted = SpacetimePoint::new(
                    x.t + tau * term.z[0],
                    x.x + tau * term.z[1],
                    x.y + tau * term.z[2],
                    x.z + tau * term.z[3],
                );
                let moved = eval_superposition(&single, &shifted);
                let phase_shift = 2.0 * term.z[0] * term.z[0] * tau;
                let expected = wave_profile(term.phase(&x) + phase_shift, WAVE_CENTER);
                for (c, v) in moved.components().iter().enumerate() {
                    let amp = [
                        term.amp_e[0],
                        term.amp_e[1],
                        term.amp_e[2],
                        term.amp_b[0],
                        term.amp_b[1],
                        term.amp_b[2],
                    ][c];
                    assert!(
                        (v - amp * expected).abs() <= 1e-10 * (1.0 + v.abs()),
                        "component {c}: {v} vs {}",
                        amp * expected
                    );
                }
            }
        }
    }

    #[test]
    fn fd_residual_trivial_fields() {
        let constant =
            |_: &SpacetimePoint| Ok(FieldSample::new([1.0, -2.0, 0.5], [0.0, 3.0, 1.0]));
        let res = fd_residual(&constant, &SpacetimePoint::new(0.1, 0.2, 0.3, 0.4), 1e-4).unwrap();
        for v in res {
            assert!(v.abs() <= 1e-9);
        }
        // E = (x, 0, 0): divergence exactly 1, everything else zero.
        let linear = |p: &SpacetimePoint| Ok(FieldSample::new([p.x, 0.0, 0.0], [0.0; 3]));
        let res = fd_residual(&linear, &SpacetimePoint::new(0.1, 0.2, 0.3, 0.4), 1e-4).unwrap();
        assert!((res[6] - 1.0).abs() <= 1e-9, "divE = {}", res[6]);
        for (i, v) in res.iter().enumerate().filter(|(i, _)| *i != 6) {
            assert!(v.abs() <= 1e-9, "component {i} = {v}");
        }
    }

    /// Quick convergence spot-check per solution; the full sweep lives in
    /// the verification harness.
    #[test]
    fn fd_residual_second_order_convergence_spot() {
        let mut rng = seeded_stream(4, StreamId::Verify);
        for id in [
            GroundTruthId::PlaneWaves,
            GroundTruthId::RadialWaves,
            GroundTruthId::HopfFibration,
            GroundTruthId::RandomSolution { seed: 42 },
        ] {
            let gt = GroundTruth::new(id);
            let x = interior_point(&mut rng);
            let coarse = gt.fd_residual(&x, 1e-3).unwrap();
            let fine = gt.fd_residual(&x, 5e-4).unwrap();
            let max_c = coarse.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_f = fine.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                max_c > 1e-10,
                "{id:?}: coarse residual {max_c:e} already at roundoff floor"
            );
            let ratio = max_c / max_f;
            assert!(
                (3.0..5.0).contains(&ratio),
                "{id:?}: convergence ratio {ratio} (coarse {max_c:e}, fine {max_f:e})"
            );
        }
    }

    #[test]
    fn radial_b_field_differs_from_e_field() {
        // The radial solution's B differs from E only in the sign of the q
        // terms; a transcription slip collapsing them would break this.
        let gt = GroundTruth::new(GroundTruthId::RadialWaves);
        let f = gt.eval(&SpacetimePoint::new(0.2, 0.4, 0.3, 0.5)).unwrap();
        assert!(ulp_gap(f.e[0], f.b[0]) > 4.0);
        assert!(ulp_gap(f.e[1], -f.b[1]) > 4.0);
    }

    #[test]
    fn field_csv_writes_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let pts = vec![
            SpacetimePoint::new(0.0, 0.25, 0.5, 0.75),
            SpacetimePoint::new(0.5, 0.1, 0.2, 0.3),
        ];
        let gt = GroundTruth::new(GroundTruthId::HopfFibration);
        let fields = gt.eval_batch(&pts).unwrap();
        write_field_csv(&path, &pts, &fields).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y,z,E1,E2,E3,B1,B2,B3");
        assert_eq!(lines.count(), 2);
        // Numbers round-trip losslessly.
        let first = text.lines().nth(1).unwrap();
        let e1: f64 = first.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(e1, fields[0].e[0]);
    }

    #[test]
    fn lift_matches_superposition_cone() {
        // The random terms' z agree with the model's own lift.
        let gt = GroundTruth::new(GroundTruthId::RandomSolution { seed: 9 });
        for term in gt.terms().iter().take(5) {
            let lifted = lift_frequency([term.z[1], term.z[2], term.z[3]], 1.0);
            assert_eq!(lifted.0, term.z);
        }
    }
}
