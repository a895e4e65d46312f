//! Network definition: parameters, light-cone frequency lifting, multiplier
//! polynomials, batched forward evaluation, and the analytic Maxwell residual
//! of the network itself.
//!
//! A neuron is `w · σ(xᵀz + b) · p(z)` with `x = (t,x,y,z)` and a frequency
//! `z = (±‖ξ‖, ξ)` lifted from its trainable spatial part `ξ`. Because `z`
//! lies on the light cone and `p` is a Maxwell multiplier, each neuron — and
//! hence the whole network — solves the homogeneous system exactly; the
//! residual routines below exist to *verify* that cancellation down to
//! roundoff, not to enforce it.
//!
//! Batch evaluation processes points in fixed-size chunks. Chunks may be
//! farmed out to worker threads, but each chunk writes a disjoint output
//! slice and scalar reductions fold chunk results in index order, so results
//! are bit-identical for any worker count. Within a point, accumulation
//! order is canonical: branch 1 then branch 2, neurons in row order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Points per evaluation chunk; also the parallel work unit.
pub(crate) const CHUNK: usize = 64;

/// A point (t, x, y, z) of normalized spacetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self { t, x, y, z }
    }

    #[inline]
    pub fn coords(&self) -> [f64; 4] {
        [self.t, self.x, self.y, self.z]
    }

    /// The point shifted by `h` along coordinate axis `axis` (0 = t, 1 = x,
    /// 2 = y, 3 = z).
    pub fn shifted(&self, axis: usize, h: f64) -> Self {
        let mut c = self.coords();
        c[axis] += h;
        Self::new(c[0], c[1], c[2], c[3])
    }
}

/// Electric and magnetic field values at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSample {
    pub e: [f64; 3],
    pub b: [f64; 3],
}

impl FieldSample {
    pub fn new(e: [f64; 3], b: [f64; 3]) -> Self {
        Self { e, b }
    }

    /// The six components in canonical order (E1, E2, E3, B1, B2, B3).
    #[inline]
    pub fn components(&self) -> [f64; 6] {
        [
            self.e[0], self.e[1], self.e[2], self.b[0], self.b[1], self.b[2],
        ]
    }

    #[inline]
    pub fn from_components(c: [f64; 6]) -> Self {
        Self {
            e: [c[0], c[1], c[2]],
            b: [c[3], c[4], c[5]],
        }
    }
}

/// A frequency 4-vector (z0, z1, z2, z3) on the light cone
/// z0² = z1² + z2² + z3².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyVector(pub [f64; 4]);

impl FrequencyVector {
    /// |z0² − (z1²+z2²+z3²)| in ulps of the larger side. The light-cone
    /// invariant requires this to be at most 4.
    pub fn cone_gap_ulps(&self) -> f64 {
        let [z0, z1, z2, z3] = self.0;
        let lhs = z0 * z0;
        let rhs = z1 * z1 + z2 * z2 + z3 * z3;
        ulp_gap(lhs, rhs)
    }
}

/// ‖ξ‖₂ with a fixed left-to-right summation order; every light-cone
/// recomputation in the crate goes through here so the invariant is checked
/// against the exact same floating-point expression.
#[inline]
pub(crate) fn spatial_norm(s: [f64; 3]) -> f64 {
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

/// Lifts a spatial frequency onto the light cone: (sign·‖ξ‖, ξ).
///
/// The zero vector lifts to the origin (a degenerate neuron whose multiplier
/// vanishes); its norm gradient is handled by the training module.
pub fn lift_frequency(spatial: [f64; 3], sign: f64) -> FrequencyVector {
    debug_assert!(sign == 1.0 || sign == -1.0, "sign must be ±1");
    let n = spatial_norm(spatial);
    FrequencyVector([sign * n, spatial[0], spatial[1], spatial[2]])
}

/// The two Maxwell multiplier polynomials, evaluated literally:
///
/// ```text
///   p1(z) = (−z1·z3, −z2·z3, z0²−z3², −z0·z2, z0·z1, 0)
///   p2(z) = ( z1·z2, −z0²+z2², z2·z3, −z0·z3, 0, z0·z1)
/// ```
///
/// The first three components multiply E, the last three B. On the light
/// cone, p1's third component equals z1²+z2² (an equivalence the
/// verification harness cross-checks); the z0²−z3² form is canonical here.
///
/// Panics if `branch` is not 1 or 2 (caller bug, not a data error).
pub fn noetherian_multiplier(branch: usize, z: FrequencyVector) -> [f64; 6] {
    let [z0, z1, z2, z3] = z.0;
    match branch {
        1 => [
            -z1 * z3,
            -z2 * z3,
            z0 * z0 - z3 * z3,
            -z0 * z2,
            z0 * z1,
            0.0,
        ],
        2 => [
            z1 * z2,
            -z0 * z0 + z2 * z2,
            z2 * z3,
            -z0 * z3,
            0.0,
            z0 * z1,
        ],
        _ => panic!("multiplier branch must be 1 or 2, got {branch}"),
    }
}

/// Rows m = 0..4 hold ∂p/∂z_m for the given branch; used by the gradient
/// and checked against finite differences of `noetherian_multiplier`.
pub(crate) fn multiplier_jacobian(branch: usize, z: FrequencyVector) -> [[f64; 6]; 4] {
    let [z0, z1, z2, z3] = z.0;
    match branch {
        1 => [
            [0.0, 0.0, 2.0 * z0, -z2, z1, 0.0],
            [-z3, 0.0, 0.0, 0.0, z0, 0.0],
            [0.0, -z3, 0.0, -z0, 0.0, 0.0],
            [-z1, -z2, -2.0 * z3, 0.0, 0.0, 0.0],
        ],
        2 => [
            [0.0, -2.0 * z0, 0.0, -z3, 0.0, z1],
            [z2, 0.0, 0.0, 0.0, 0.0, z0],
            [z1, 2.0 * z2, z3, 0.0, 0.0, 0.0],
            [0.0, 0.0, z2, -z0, 0.0, 0.0],
        ],
        _ => panic!("multiplier branch must be 1 or 2, got {branch}"),
    }
}

/// Applies the Maxwell symbol to an amplitude (aE, aB):
/// (z0·aE − ξ×aB, z0·aB + ξ×aE, ξ·aE, ξ·aB).
///
/// A neuron's residual contribution is w·σ'(u)·symbol(z, p); for light-cone
/// z and matching multiplier p this is identically zero, so the result
/// measures roundoff only.
pub(crate) fn maxwell_symbol_apply(z: FrequencyVector, a: [f64; 6]) -> [f64; 8] {
    let [z0, z1, z2, z3] = z.0;
    let (ae, ab) = ([a[0], a[1], a[2]], [a[3], a[4], a[5]]);
    [
        z0 * ae[0] - (z2 * ab[2] - z3 * ab[1]),
        z0 * ae[1] - (z3 * ab[0] - z1 * ab[2]),
        z0 * ae[2] - (z1 * ab[1] - z2 * ab[0]),
        z0 * ab[0] + (z2 * ae[2] - z3 * ae[1]),
        z0 * ab[1] + (z3 * ae[0] - z1 * ae[2]),
        z0 * ab[2] + (z1 * ae[1] - z2 * ae[0]),
        z1 * ae[0] + z2 * ae[1] + z3 * ae[2],
        z1 * ab[0] + z2 * ab[1] + z3 * ab[2],
    ]
}

/// Trainable state of one multiplier branch: 2W neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    /// Spatial frequencies ξ, one row per neuron (2W × 3).
    pub spatial_freqs: Vec<[f64; 3]>,
    /// Light-cone lift signs, ±1, exactly W of each.
    pub signs: Vec<f64>,
    /// Output weights w (2W).
    pub out_weights: Vec<f64>,
    /// Pre-activation biases b (2W).
    pub biases: Vec<f64>,
}

impl BranchParams {
    pub fn zeros(two_w: usize) -> Self {
        let half = two_w / 2;
        let mut signs = vec![1.0; two_w];
        for s in signs.iter_mut().skip(half) {
            *s = -1.0;
        }
        Self {
            spatial_freqs: vec![[0.0; 3]; two_w],
            signs,
            out_weights: vec![0.0; two_w],
            biases: vec![0.0; two_w],
        }
    }

    pub fn len(&self) -> usize {
        self.spatial_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spatial_freqs.is_empty()
    }
}

/// All trainable parameters of the network.
///
/// The time components z0 of the frequencies are never stored; they are
/// recomputed from `spatial_freqs` and `signs` at every evaluation, so the
/// light-cone constraint survives arbitrary parameter updates by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// W: per-sign neuron count per branch (each branch holds 2W neurons).
    pub width_half: usize,
    pub activation: Activation,
    /// Branch 1 and branch 2 parameters.
    pub branches: [BranchParams; 2],
}

impl ModelParams {
    /// A network of the given width with all trainable values zero and
    /// balanced signs; useful as a construction base.
    pub fn zeros(width_half: usize, activation: Activation) -> Self {
        Self {
            width_half,
            activation,
            branches: [
                BranchParams::zeros(2 * width_half),
                BranchParams::zeros(2 * width_half),
            ],
        }
    }

    /// Shape, sign-balance and finiteness check.
    pub fn validate(&self) -> Result<()> {
        let two_w = 2 * self.width_half;
        for (i, br) in self.branches.iter().enumerate() {
            let branch = i + 1;
            if br.spatial_freqs.len() != two_w
                || br.signs.len() != two_w
                || br.out_weights.len() != two_w
                || br.biases.len() != two_w
            {
                return Err(Error::InvalidParams(format!(
                    "branch {branch} arrays must all have length {two_w}"
                )));
            }
            let mut plus = 0usize;
            for &s in &br.signs {
                if s == 1.0 {
                    plus += 1;
                } else if s != -1.0 {
                    return Err(Error::InvalidParams(format!(
                        "branch {branch} contains sign {s}; signs must be ±1"
                    )));
                }
            }
            if plus != self.width_half {
                return Err(Error::InvalidParams(format!(
                    "branch {branch} has {plus} positive signs; expected exactly {}",
                    self.width_half
                )));
            }
            let finite = br
                .spatial_freqs
                .iter()
                .flatten()
                .chain(br.out_weights.iter())
                .chain(br.biases.iter())
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidParams(format!(
                    "branch {branch} contains non-finite entries"
                )));
            }
        }
        Ok(())
    }
}

/// Per-neuron constants derived from the trainable state; rebuilt at every
/// batched call (z0 recomputation is the constraint mechanism, and the cost
/// is negligible next to activation evaluation).
pub(crate) struct Neuron {
    pub z: [f64; 4],
    pub w: f64,
    pub b: f64,
    /// Multiplier p(z).
    pub p: [f64; 6],
    /// Maxwell symbol applied to p — the neuron's residual direction,
    /// roundoff-scale by construction.
    pub ap: [f64; 8],
}

pub(crate) fn build_neurons(branch: &BranchParams, branch_no: usize) -> Vec<Neuron> {
    branch
        .spatial_freqs
        .iter()
        .zip(&branch.signs)
        .zip(&branch.out_weights)
        .zip(&branch.biases)
        .map(|(((&sf, &sign), &w), &b)| {
            let z = lift_frequency(sf, sign);
            let p = noetherian_multiplier(branch_no, z);
            let ap = maxwell_symbol_apply(z, p);
            Neuron { z: z.0, w, b, p, ap }
        })
        .collect()
}

#[inline]
pub(crate) fn pre_activation(n: &Neuron, pt: &SpacetimePoint) -> f64 {
    n.z[0] * pt.t + n.z[1] * pt.x + n.z[2] * pt.y + n.z[3] * pt.z + n.b
}

/// Evaluates the network on a batch of points.
pub fn forward(params: &ModelParams, points: &[SpacetimePoint]) -> Vec<FieldSample> {
    let neurons = [
        build_neurons(&params.branches[0], 1),
        build_neurons(&params.branches[1], 2),
    ];
    let act = params.activation;
    let mut out = vec![FieldSample::default(); points.len()];
    out.par_chunks_mut(CHUNK)
        .zip(points.par_chunks(CHUNK))
        .for_each(|(out_chunk, pts)| forward_chunk(&neurons, act, pts, out_chunk));
    out
}

pub(crate) fn forward_chunk(
    neurons: &[Vec<Neuron>; 2],
    act: Activation,
    pts: &[SpacetimePoint],
    out: &mut [FieldSample],
) {
    #[cfg(target_arch = "x86_64")]
    if act == Activation::Tanh && crate::simd::tanh_fast_path() {
        let soa = crate::simd::ChunkSoA::from_points(pts);
        let mut y_soa = [[0.0f64; CHUNK]; 6];
        crate::simd::fwd_tanh(neurons, &soa, &mut y_soa);
        for (i, o) in out.iter_mut().enumerate() {
            o.e[0] += y_soa[0][i];
            o.e[1] += y_soa[1][i];
            o.e[2] += y_soa[2][i];
            o.b[0] += y_soa[3][i];
            o.b[1] += y_soa[4][i];
            o.b[2] += y_soa[5][i];
        }
        return;
    }
    for branch in neurons {
        for n in branch {
            for (pt, o) in pts.iter().zip(out.iter_mut()) {
                let a = act.value(pre_activation(n, pt)) * n.w;
                o.e[0] += a * n.p[0];
                o.e[1] += a * n.p[1];
                o.e[2] += a * n.p[2];
                o.b[0] += a * n.p[3];
                o.b[1] += a * n.p[4];
                o.b[2] += a * n.p[5];
            }
        }
    }
}

/// The eight analytic Maxwell residual components
/// (∂tE−∇×B, ∂tB+∇×E, ∇·E, ∇·B) of the network at one point, computed by
/// exact differentiation through the activation. Zero up to roundoff for any
/// parameters.
pub fn model_residual(params: &ModelParams, x: &SpacetimePoint) -> [f64; 8] {
    model_residual_batch(params, std::slice::from_ref(x))[0]
}

/// Batched residual evaluation; same chunking scheme as `forward`.
pub fn model_residual_batch(params: &ModelParams, points: &[SpacetimePoint]) -> Vec<[f64; 8]> {
    let neurons = [
        build_neurons(&params.branches[0], 1),
        build_neurons(&params.branches[1], 2),
    ];
    let act = params.activation;
    let mut out = vec![[0.0f64; 8]; points.len()];
    out.par_chunks_mut(CHUNK)
        .zip(points.par_chunks(CHUNK))
        .for_each(|(out_chunk, pts)| {
            for branch in &neurons {
                for n in branch {
                    for (pt, o) in pts.iter().zip(out_chunk.iter_mut()) {
                        let wd = act.deriv(pre_activation(n, pt)) * n.w;
                        for (oc, apc) in o.iter_mut().zip(n.ap) {
                            *oc += wd * apc;
                        }
                    }
                }
            }
        });
    out
}

/// Distance between two finite numbers in units in the last place of the
/// larger magnitude; 0.0 when equal (including both zero).
pub fn ulp_gap(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let l = a.abs().max(b.abs());
    let ulp = l.next_up() - l;
    (a - b).abs() / ulp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_stream, uniform, StreamId};

    fn single_neuron_params(
        branch_no: usize,
        spatial: [f64; 3],
        sign: f64,
        w: f64,
        bias: f64,
        act: Activation,
    ) -> ModelParams {
        // Width 1 (two neurons per branch); all weights zero except the
        // requested neuron, so the sign balance stays intact. A +1 neuron
        // occupies row 0, a −1 neuron row 1.
        let mut params = ModelParams::zeros(1, act);
        let row = if sign == 1.0 { 0 } else { 1 };
        let br = &mut params.branches[branch_no - 1];
        br.spatial_freqs[row] = spatial;
        br.out_weights[row] = w;
        br.biases[row] = bias;
        params
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_frequency([1.0, 0.0, 0.0], 1.0).0, [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            lift_frequency([1.0, 2.0, 2.0], -1.0).0,
            [-3.0, 1.0, 2.0, 2.0]
        );
        assert_eq!(lift_frequency([0.0, 0.0, 0.0], 1.0).0, [0.0; 4]);
    }

    #[test]
    fn lift_satisfies_cone_invariant() {
        let mut rng = seeded_stream(11, StreamId::Verify);
        for _ in 0..1000 {
            let sf = [
                uniform(&mut rng, -30.0, 30.0),
                uniform(&mut rng, -30.0, 30.0),
                uniform(&mut rng, -30.0, 30.0),
            ];
            for sign in [1.0, -1.0] {
                let z = lift_frequency(sf, sign);
                assert!(
                    z.cone_gap_ulps() <= 4.0,
                    "cone gap {} ulps at {sf:?}",
                    z.cone_gap_ulps()
                );
            }
        }
    }

    #[test]
    fn multiplier_examples() {
        let p1 = noetherian_multiplier(1, FrequencyVector([1.0, 1.0, 0.0, 0.0]));
        assert_eq!(p1, [0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        // Degenerate at z1=0: branch 2 vanishes entirely.
        let p2 = noetherian_multiplier(2, FrequencyVector([1.0, 0.0, 1.0, 0.0]));
        assert_eq!(p2, [0.0; 6]);
        for branch in [1, 2] {
            assert_eq!(
                noetherian_multiplier(branch, FrequencyVector([0.0; 4])),
                [0.0; 6]
            );
        }
    }

    /// The symbol applied to each multiplier must vanish identically on the
    /// light cone — the exactness mechanism itself.
    #[test]
    fn symbol_annihilates_multipliers_on_cone() {
        let mut rng = seeded_stream(3, StreamId::Verify);
        for _ in 0..500 {
            let sf = [
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
            ];
            for sign in [1.0, -1.0] {
                let z = lift_frequency(sf, sign);
                let scale = spatial_norm(sf).powi(3).max(1e-30);
                for branch in [1, 2] {
                    let ap = maxwell_symbol_apply(z, noetherian_multiplier(branch, z));
                    for (c, v) in ap.iter().enumerate() {
                        assert!(
                            v.abs() <= 16.0 * f64::EPSILON * scale,
                            "branch {branch} residual direction component {c} = {v:e} at {z:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn multiplier_jacobian_matches_finite_differences() {
        let mut rng = seeded_stream(5, StreamId::Verify);
        let h = 1e-6;
        for _ in 0..200 {
            let z = FrequencyVector([
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
                uniform(&mut rng, -2.0, 2.0),
            ]);
            for branch in [1, 2] {
                let jac = multiplier_jacobian(branch, z);
                for m in 0..4 {
                    let mut zp = z;
                    let mut zm = z;
                    zp.0[m] += h;
                    zm.0[m] -= h;
                    let pp = noetherian_multiplier(branch, zp);
                    let pm = noetherian_multiplier(branch, zm);
                    for c in 0..6 {
                        let fd = (pp[c] - pm[c]) / (2.0 * h);
                        assert!(
                            (fd - jac[m][c]).abs() <= 1e-6,
                            "branch {branch} d p[{c}]/d z[{m}]: fd {fd} vs {}",
                            jac[m][c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn forward_single_neuron_example() {
        let params = single_neuron_params(1, [1.0, 0.0, 0.0], 1.0, 1.0, 0.0, Activation::Tanh);
        let out = forward(&params, &[SpacetimePoint::new(0.0, 0.5, 0.0, 0.0)]);
        let th = 0.5f64.tanh();
        assert_eq!(out[0].e, [0.0, 0.0, th]);
        assert_eq!(out[0].b, [0.0, th, 0.0]);
    }

    #[test]
    fn forward_zero_cases() {
        let empty = ModelParams::zeros(0, Activation::Tanh);
        let pts = [SpacetimePoint::new(0.3, 0.1, 0.7, 0.9)];
        assert_eq!(forward(&empty, &pts)[0], FieldSample::default());
        assert_eq!(model_residual(&empty, &pts[0]), [0.0; 8]);

        let zero_w = ModelParams::zeros(4, Activation::Silu);
        assert_eq!(forward(&zero_w, &pts)[0], FieldSample::default());
    }

    #[test]
    fn forward_is_linear_in_out_weights() {
        let mut params = single_neuron_params(2, [0.4, -1.2, 0.9], -1.0, 0.7, 0.3, Activation::Cos);
        let pts = [
            SpacetimePoint::new(0.1, 0.2, 0.3, 0.4),
            SpacetimePoint::new(0.9, -0.5, 0.0, 1.4),
        ];
        let base = forward(&params, &pts);
        for br in &mut params.branches {
            for w in &mut br.out_weights {
                *w *= 3.0;
            }
        }
        let scaled = forward(&params, &pts);
        for (b, s) in base.iter().zip(&scaled) {
            for (bc, sc) in b.components().iter().zip(s.components()) {
                assert!((3.0 * bc - sc).abs() <= 1e-12 * (1.0 + sc.abs()));
            }
        }
    }

    /// A single cos-activation plane-wave neuron has residual components
    /// below 1e-12 for |coordinates| ≤ 2: the hand-checkable core of the
    /// exactness lemma.
    #[test]
    fn residual_single_cos_neuron() {
        for branch in [1, 2] {
            let params =
                single_neuron_params(branch, [1.2, 0.4, -0.3], 1.0, 1.0, 0.2, Activation::Cos);
            let mut rng = seeded_stream(8, StreamId::Verify);
            for _ in 0..200 {
                let pt = SpacetimePoint::new(
                    uniform(&mut rng, -2.0, 2.0),
                    uniform(&mut rng, -2.0, 2.0),
                    uniform(&mut rng, -2.0, 2.0),
                    uniform(&mut rng, -2.0, 2.0),
                );
                for (c, v) in model_residual(&params, &pt).iter().enumerate() {
                    assert!(v.abs() <= 1e-12, "component {c} = {v:e} at {pt:?}");
                }
            }
        }
    }

    #[test]
    fn validate_catches_shape_and_sign_errors() {
        let mut p = ModelParams::zeros(2, Activation::Tanh);
        assert!(p.validate().is_ok());
        p.branches[0].signs[3] = 1.0; // now 3 positive / 1 negative
        assert!(p.validate().is_err());
        let mut q = ModelParams::zeros(2, Activation::Tanh);
        q.branches[1].biases.pop();
        assert!(q.validate().is_err());
        let mut r = ModelParams::zeros(2, Activation::Tanh);
        r.branches[0].spatial_freqs[0][1] = f64::NAN;
        assert!(r.validate().is_err());
    }

    #[test]
    fn ulp_gap_basics() {
        assert_eq!(ulp_gap(1.0, 1.0), 0.0);
        assert_eq!(ulp_gap(0.0, 0.0), 0.0);
        let one_ulp = 1.0f64.next_up();
        assert!((ulp_gap(1.0, one_ulp) - 1.0).abs() < 1e-12);
        assert!(ulp_gap(1.0, 1.0 + 8.0 * f64::EPSILON) > 4.0);
    }
}
