//! Verification harness: residual-exactness sweeps over random models,
//! finite-difference convergence of the analytic ground truths, multiplier
//! identity checks (with an injectable hook so a corrupted multiplier is
//! provably detected), and finite-difference gradient checks.
//!
//! Every check returns a report with the measured statistics; callers decide
//! whether to surface a failure as a process exit code. The `assert_pass`
//! helpers convert a failed report into `Error::VerificationFailed` carrying
//! the offending number.

use rayon::prelude::*;
use serde::Serialize;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::ground_truth::{fd_residual, GroundTruth, GroundTruthId};
use crate::model::{
    forward, lift_frequency, maxwell_symbol_apply, model_residual_batch, noetherian_multiplier,
    FrequencyVector, SpacetimePoint,
};
use crate::rng::{seeded_stream, uniform, StreamId};
use crate::sampling::tangential_mask;
use crate::train::{init_params_from, loss_gradient, masked_mse_loss, ObservationSet, TrainConfig};

/// Residual bound for exact models: 1e-8 × (1 + max |field|).
pub const RESIDUAL_REL_BOUND: f64 = 1e-8;
/// Acceptable range for the FD residual ratio when h is halved (second-order
/// stencil → ideal ratio 4).
pub const FD_RATIO_RANGE: (f64, f64) = (3.5, 4.5);
/// Central-difference step for gradient checks.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Maximum relative gradient error tolerated.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Residual statistics for one random model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualStats {
    pub width_half: usize,
    pub max_abs_residual: f64,
    pub max_field_magnitude: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Evaluates the analytic residual of freshly initialized random models at
/// the given widths over `n_points` uniform points in [0,1]⁴.
pub fn residual_exactness(widths: &[usize], n_points: usize, seed: u64) -> Vec<ResidualStats> {
    let mut rng = seeded_stream(seed, StreamId::Verify);
    let points: Vec<SpacetimePoint> = (0..n_points)
        .map(|_| {
            SpacetimePoint::new(
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
            )
        })
        .collect();
    widths
        .iter()
        .map(|&w| {
            let config = TrainConfig {
                width_half: w,
                activation: Activation::Tanh,
                seed,
                ..TrainConfig::default()
            };
            let params = init_params_from(&config, &mut rng);
            let fields = forward(&params, &points);
            let residuals = model_residual_batch(&params, &points);
            let max_field = fields
                .par_iter()
                .flat_map_iter(|f| f.components())
                .map(f64::abs)
                .reduce(|| 0.0, f64::max);
            let max_res = residuals
                .par_iter()
                .flat_map_iter(|r| r.iter().copied())
                .map(f64::abs)
                .reduce(|| 0.0, f64::max);
            let bound = RESIDUAL_REL_BOUND * (1.0 + max_field);
            ResidualStats {
                width_half: w,
                max_abs_residual: max_res,
                max_field_magnitude: max_field,
                bound,
                pass: max_res <= bound,
            }
        })
        .collect()
}

/// Fails with the offending statistic if any width violates the bound.
pub fn assert_residual_exactness(stats: &[ResidualStats]) -> Result<()> {
    for s in stats {
        if !s.pass {
            return Err(Error::VerificationFailed(format!(
                "width_half {}: max |residual| {:.3e} exceeds bound {:.3e}",
                s.width_half, s.max_abs_residual, s.bound
            )));
        }
    }
    Ok(())
}

/// One row of the finite-difference convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub ground_truth: GroundTruthId,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub max_residual_coarse: f64,
    pub max_residual_fine: f64,
    pub ratio: f64,
    pub pass: bool,
}

fn convergence_points(n: usize, seed: u64) -> Vec<SpacetimePoint> {
    let mut rng = seeded_stream(seed, StreamId::Verify);
    (0..n)
        .map(|_| {
            // Spatial coordinates stay in [0.2, 0.8] so the radial family is
            // probed at r ≥ 0.1 and stencil shifts never cross r = 0.
            SpacetimePoint::new(
                uniform(&mut rng, 0.0, 0.5),
                uniform(&mut rng, 0.2, 0.8),
                uniform(&mut rng, 0.2, 0.8),
                uniform(&mut rng, 0.2, 0.8),
            )
        })
        .collect()
}

fn max_fd_residual(gt: &GroundTruth, points: &[SpacetimePoint], h: f64) -> Result<f64> {
    let field = |x: &SpacetimePoint| gt.eval(x);
    points
        .par_iter()
        .map(|p| {
            let r = fd_residual(&field, p, h)?;
            Ok(r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Second-order convergence check for one ground truth: halving h must
/// shrink the max FD residual by ≈ 4×.
pub fn fd_convergence_for(
    id: GroundTruthId,
    h_coarse: f64,
    n_points: usize,
    seed: u64,
) -> Result<ConvergenceRow> {
    let gt = GroundTruth::new(id);
    let points = convergence_points(n_points, seed);
    let h_fine = h_coarse / 2.0;
    let coarse = max_fd_residual(&gt, &points, h_coarse)?;
    let fine = max_fd_residual(&gt, &points, h_fine)?;
    let ratio = coarse / fine;
    Ok(ConvergenceRow {
        ground_truth: id,
        h_coarse,
        h_fine,
        max_residual_coarse: coarse,
        max_residual_fine: fine,
        ratio,
        pass: ratio >= FD_RATIO_RANGE.0 && ratio <= FD_RATIO_RANGE.1,
    })
}

/// Convergence tables for all four ground-truth families, plus the exactness
/// spot-check at the one removable singularity (the Hopf field's origin is a
/// closed-form limit, not a numerical one).
pub fn fd_convergence(seed: u64) -> Result<Vec<ConvergenceRow>> {
    let ids = [
        GroundTruthId::PlaneWaves,
        GroundTruthId::RadialWaves,
        GroundTruthId::HopfFibration,
        GroundTruthId::RandomSolution { seed: 42 },
    ];
    ids.iter()
        .map(|&id| {
            // The random superposition's residual at the standard step sits
            // near the FD roundoff floor (tiny third derivatives), so it is
            // probed at a larger step where truncation still dominates.
            let h = match id {
                GroundTruthId::RandomSolution { .. } => 4e-3,
                _ => 1e-3,
            };
            fd_convergence_for(id, h, 200, seed)
        })
        .collect()
}

pub fn assert_fd_convergence(rows: &[ConvergenceRow]) -> Result<()> {
    for r in rows {
        if !r.pass {
            return Err(Error::VerificationFailed(format!(
                "{}: FD residual ratio {:.3} outside [{}, {}] (coarse {:.3e}, fine {:.3e})",
                r.ground_truth, r.ratio, FD_RATIO_RANGE.0, FD_RATIO_RANGE.1,
                r.max_residual_coarse, r.max_residual_fine
            )));
        }
    }
    Ok(())
}

/// Checks the multiplier identities with an injectable multiplier so tests
/// can prove a corrupted implementation is caught:
/// (a) the Maxwell symbol annihilates both multipliers on the light cone;
/// (b) on the cone, p1's third component equals z1²+z2² and p2's second
///     equals −z1²−z3² (the equivalent on-variety forms).
pub fn multiplier_identity_check_with<F>(multiplier: F, seed: u64) -> Result<()>
where
    F: Fn(usize, FrequencyVector) -> [f64; 6],
{
    let mut rng = seeded_stream(seed, StreamId::Verify);
    for _ in 0..500 {
        let spatial = [
            uniform(&mut rng, -3.0, 3.0),
            uniform(&mut rng, -3.0, 3.0),
            uniform(&mut rng, -3.0, 3.0),
        ];
        for sign in [1.0, -1.0] {
            let z = lift_frequency(spatial, sign);
            let [z0, z1, z2, z3] = z.0;
            let scale = 1.0 + z0 * z0;
            let sq_tol = 64.0 * f64::EPSILON * scale;
            let sym_tol = 64.0 * f64::EPSILON * scale * (1.0 + z0.abs());
            for branch in [1usize, 2] {
                let p = multiplier(branch, z);
                let (got, want, comp) = if branch == 1 {
                    (p[2], z1 * z1 + z2 * z2, "p1[2] vs z1²+z2²")
                } else {
                    (p[1], -z1 * z1 - z3 * z3, "p2[1] vs −z1²−z3²")
                };
                if (got - want).abs() > sq_tol {
                    return Err(Error::VerificationFailed(format!(
                        "on-variety identity {comp} violated by {:.3e} at z={:?}",
                        (got - want).abs(),
                        z.0
                    )));
                }
                for (i, v) in maxwell_symbol_apply(z, p).iter().enumerate() {
                    if v.abs() > sym_tol {
                        return Err(Error::VerificationFailed(format!(
                            "symbol row {i} of branch {branch} multiplier is {:.3e} at z={:?}",
                            v.abs(),
                            z.0
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// The production multiplier under the identity checks.
pub fn multiplier_identity_check(seed: u64) -> Result<()> {
    multiplier_identity_check_with(noetherian_multiplier, seed)
}

/// One gradient-check case (a width/activation/seed triple).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradCheckCase {
    pub width_half: usize,
    pub activation: Activation,
    pub seed: u64,
    pub max_rel_error: f64,
}

/// Full gradient-check report; `pass` compares the worst case to the 1e-5
/// tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Deterministic fixture: 20 uniform points in [0,1]⁴, half fully observed
/// and half masked to rotating tangential pairs — exercising masked and
/// unmasked gradient paths together.
///
/// The parameter and target scales condition the finite-difference oracle,
/// not the gradient code (every chain-rule path is exercised at generic
/// nonzero values). A central difference at the fixed step carries an
/// absolute truncation error ≈ step²/6 · |∂³loss|, which must stay below
/// tolerance × the 1e-8 denominator guard (1e-13) or honest near-zero
/// gradient components become uncertifiable: at training-scale parameters
/// third derivatives are O(1) and the measured truncation is ~2.5e-11.
/// Frequencies ~N(0, 0.25²), output weights ~N(0, 0.01²), and residuals
/// ~1e-4 bring |∂³loss| under ~1e-3 and the loss under ~1e-8 (so FD
/// cancellation noise ε·|loss|/step is negligible too), leaving the oracle
/// an order sharper than the tolerance for every component.
fn gradcheck_fixture(
    width_half: usize,
    activation: Activation,
    seed: u64,
) -> (crate::model::ModelParams, ObservationSet) {
    use rand_distr::{Distribution, Normal};
    let mut rng = seeded_stream(seed, StreamId::GradCheck);
    let config = TrainConfig {
        width_half,
        activation,
        seed,
        ..TrainConfig::default()
    };
    let mut params = init_params_from(&config, &mut rng);
    let freq = Normal::new(0.0, 0.25).expect("freq scale");
    let weight = Normal::new(0.0, 0.01).expect("weight scale");
    let bias = Normal::new(0.0, 0.1).expect("bias scale");
    for branch in params.branches.iter_mut() {
        for row in branch.spatial_freqs.iter_mut() {
            for v in row.iter_mut() {
                *v = freq.sample(&mut rng);
            }
        }
        for w in branch.out_weights.iter_mut() {
            *w = weight.sample(&mut rng);
        }
        for b in branch.biases.iter_mut() {
            *b = bias.sample(&mut rng);
        }
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = 20usize;
    let mut points = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for i in 0..n {
        points.push(SpacetimePoint::new(
            uniform(&mut rng, 0.0, 1.0),
            uniform(&mut rng, 0.0, 1.0),
            uniform(&mut rng, 0.0, 1.0),
            uniform(&mut rng, 0.0, 1.0),
        ));
        masks.push(if i < n / 2 {
            ObservationSet::FULL_MASK
        } else {
            tangential_mask(1 + (i % 3))
        });
    }
    let targets = forward(&params, &points)
        .into_iter()
        .map(|f| {
            let mut comps = f.components();
            for c in comps.iter_mut() {
                *c += 1e-4 * normal.sample(&mut rng);
            }
            crate::model::FieldSample::from_components(comps)
        })
        .collect();
    let obs = ObservationSet::new(points, targets, masks).expect("fixture is valid");
    (params, obs)
}

/// Central-difference check of every parameter's analytic gradient.
pub fn gradient_check_case(
    width_half: usize,
    activation: Activation,
    seed: u64,
) -> Result<GradCheckCase> {
    let (params, obs) = gradcheck_fixture(width_half, activation, seed);
    let (_, grad) = loss_gradient(&params, &obs)?;
    let mut max_rel = 0.0f64;
    let mut probe = |analytic: f64, perturb: &mut dyn FnMut(&mut crate::model::ModelParams, f64)| -> Result<()> {
        let mut plus = params.clone();
        perturb(&mut plus, GRADCHECK_STEP);
        let mut minus = params.clone();
        perturb(&mut minus, -GRADCHECK_STEP);
        let fd = (masked_mse_loss(&plus, &obs)? - masked_mse_loss(&minus, &obs)?)
            / (2.0 * GRADCHECK_STEP);
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - fd).abs() / denom);
        Ok(())
    };
    for bi in 0..2 {
        let two_w = 2 * params.width_half;
        for k in 0..two_w {
            for m in 0..3 {
                probe(grad.branches[bi].spatial_freqs[k][m], &mut |p, h| {
                    p.branches[bi].spatial_freqs[k][m] += h;
                })?;
            }
            probe(grad.branches[bi].out_weights[k], &mut |p, h| {
                p.branches[bi].out_weights[k] += h;
            })?;
            probe(grad.branches[bi].biases[k], &mut |p, h| {
                p.branches[bi].biases[k] += h;
            })?;
        }
    }
    Ok(GradCheckCase {
        width_half,
        activation,
        seed,
        max_rel_error: max_rel,
    })
}

/// Sweeps widths × activations × seeds; the default sweep is
/// W ∈ {1,4,16} × {tanh, cos, silu} × 5 seeds.
pub fn gradient_check(
    widths: &[usize],
    activations: &[Activation],
    seeds: &[u64],
) -> Result<GradCheckReport> {
    let mut cases = Vec::new();
    for &w in widths {
        for &act in activations {
            for &seed in seeds {
                cases.push(gradient_check_case(w, act, seed)?);
            }
        }
    }
    let max_rel_error = cases.iter().fold(0.0f64, |m, c| m.max(c.max_rel_error));
    Ok(GradCheckReport {
        cases,
        max_rel_error,
        tol: GRADCHECK_TOL,
        pass: max_rel_error <= GRADCHECK_TOL,
    })
}

pub fn gradient_check_default() -> Result<GradCheckReport> {
    gradient_check(
        &[1, 4, 16],
        &[Activation::Tanh, Activation::Cos, Activation::Silu],
        &[0, 1, 2, 3, 4],
    )
}

pub fn assert_gradient_check(report: &GradCheckReport) -> Result<()> {
    if !report.pass {
        let worst = report
            .cases
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .expect("nonempty sweep");
        return Err(Error::VerificationFailed(format!(
            "gradient check: max relative error {:.3e} > {:.1e} (W={}, σ={}, seed {})",
            report.max_rel_error, report.tol, worst.width_half, worst.activation, worst.seed
        )));
    }
    Ok(())
}
