//! Training: masked data loss, exact analytic gradients through the
//! light-cone weight sharing, AdamW with a cosine schedule, and the epoch
//! loop with validation-based early stopping.
//!
//! # Gradient structure
//!
//! Each neuron contributes w·σ(u)·p(z) with u = xᵀz + b, z = (s‖ξ‖, ξ),
//! s = ±1. The loss gradient therefore flows into ξ along two routes: the
//! phase u (whose z0 component depends on ξ through the norm) and the
//! multiplier polynomial p(z). Both are differentiated exactly; nothing is
//! approximated, so a central-difference oracle must agree to ~1e-5
//! relative error bounded only by the difference scheme itself.
//!
//! # Determinism
//!
//! Evaluation folds fixed-size point chunks in index order after parallel
//! map, so losses, gradients, and trained parameters are bit-identical for
//! any worker count. All randomness (initialization, then per-epoch batch
//! shuffles, in that order) comes from one seeded stream dedicated to the
//! training loop; sampling modules use their own streams.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::metrics::relative_l2;
use crate::model::{
    build_neurons, forward, multiplier_jacobian, pre_activation, spatial_norm, FieldSample,
    ModelParams, Neuron, SpacetimePoint, CHUNK,
};
use crate::rng::{seeded_stream, StreamId};

const ADAM_EPS: f64 = 1e-8;
/// Norm floor for the ∂z0/∂ξ direction at the cone tip (measure-zero
/// during training; this choice is the subgradient there).
const NORM_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

/// Supervised observations: points, exact field targets, and per-component
/// participation masks (bit i = component i in E1,E2,E3,B1,B2,B3 order).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub points: Vec<SpacetimePoint>,
    pub targets: Vec<FieldSample>,
    pub masks: Vec<u8>,
}

impl ObservationSet {
    /// All six components observed.
    pub const FULL_MASK: u8 = 0b11_1111;

    /// The mask bit for component `c` (0 = E1 … 5 = B3).
    pub fn mask_bit(c: usize) -> u8 {
        debug_assert!(c < 6);
        1 << c
    }

    pub fn new(
        points: Vec<SpacetimePoint>,
        targets: Vec<FieldSample>,
        masks: Vec<u8>,
    ) -> Result<Self> {
        let set = Self {
            points,
            targets,
            masks,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total count of observed (point, component) pairs — the divisor of
    /// the masked mean-square loss.
    pub fn unmasked_count(&self) -> usize {
        self.masks.iter().map(|m| m.count_ones() as usize).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.points.len() || self.masks.len() != self.points.len() {
            return Err(Error::InvalidObservations(format!(
                "lengths differ: {} points, {} targets, {} masks",
                self.points.len(),
                self.targets.len(),
                self.masks.len()
            )));
        }
        for (i, &m) in self.masks.iter().enumerate() {
            if m == 0 || m > Self::FULL_MASK {
                return Err(Error::InvalidObservations(format!(
                    "observation {i} has invalid mask {m:#08b}"
                )));
            }
        }
        let finite = self
            .points
            .iter()
            .flat_map(|p| p.coords())
            .chain(self.targets.iter().flat_map(|t| t.components()))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidObservations(
                "non-finite point or target entries".into(),
            ));
        }
        Ok(())
    }

    /// Gathers the observations at `indices` (used for mini-batches).
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            masks: indices.iter().map(|&i| self.masks[i]).collect(),
        }
    }

    fn mask_string(mask: u8) -> String {
        (0..6)
            .map(|c| if mask & (1 << c) != 0 { '1' } else { '0' })
            .collect()
    }

    fn parse_mask(s: &str) -> Result<u8> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 || !bytes.iter().all(|b| *b == b'0' || *b == b'1') {
            return Err(Error::InvalidObservations(format!(
                "mask field {s:?} must be six 0/1 characters"
            )));
        }
        Ok(bytes
            .iter()
            .enumerate()
            .fold(0u8, |m, (c, b)| m | (((b - b'0') as u8) << c)))
    }

    /// Dumps as CSV (t,x,y,z,E1..B3,mask) for reproducibility audits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "t", "x", "y", "z", "E1", "E2", "E3", "B1", "B2", "B3", "mask",
        ])?;
        for ((p, t), &m) in self.points.iter().zip(&self.targets).zip(&self.masks) {
            let mut rec: Vec<String> = p
                .coords()
                .iter()
                .chain(t.components().iter())
                .map(|v| v.to_string())
                .collect();
            rec.push(Self::mask_string(m));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        let mut targets = Vec::new();
        let mut masks = Vec::new();
        for row in r.records() {
            let row = row?;
            if row.len() != 11 {
                return Err(Error::MalformedFile {
                    path: path.display().to_string(),
                    reason: format!("expected 11 columns, found {}", row.len()),
                });
            }
            let num = |i: usize| -> Result<f64> {
                row[i].parse::<f64>().map_err(|e| Error::MalformedFile {
                    path: path.display().to_string(),
                    reason: format!("bad number {:?}: {e}", &row[i]),
                })
            };
            points.push(SpacetimePoint::new(num(0)?, num(1)?, num(2)?, num(3)?));
            targets.push(FieldSample::from_components([
                num(4)?,
                num(5)?,
                num(6)?,
                num(7)?,
                num(8)?,
                num(9)?,
            ]));
            masks.push(Self::parse_mask(&row[10])?);
        }
        Self::new(points, targets, masks)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Hyperparameters of a training run. Defaults are the reference recipe:
/// AdamW(lr 5e-2, weight decay 5e-5, betas 0.9/0.95), batches of 1000, a
/// cosine schedule over the first 10 000 epochs decaying to 0, tanh
/// activation, width_half 5000.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub width_half: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: u64,
    pub cosine_epochs: u64,
    pub eta_min: f64,
    pub seed: u64,
    /// Stop as soon as a validation error reaches this level.
    pub target_rel_error: Option<f64>,
    pub val_every_steps: u64,
    /// Stop before the first batch that would start past this many seconds.
    pub wall_clock_budget_s: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            width_half: 5000,
            activation: Activation::Tanh,
            learning_rate: 5e-2,
            weight_decay: 5e-5,
            beta1: 0.9,
            beta2: 0.95,
            batch_size: 1000,
            max_epochs: 10_000,
            cosine_epochs: 10_000,
            eta_min: 0.0,
            seed: 0,
            target_rel_error: None,
            val_every_steps: 100,
            wall_clock_budget_s: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width_half == 0 {
            return bad("width_half must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be ≥ 0", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return bad(format!("{name} {b} must lie in [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_epochs == 0 || self.cosine_epochs == 0 {
            return bad("max_epochs and cosine_epochs must be positive".into());
        }
        if !(self.eta_min.is_finite() && self.eta_min >= 0.0) {
            return bad(format!("eta_min {} must be ≥ 0", self.eta_min));
        }
        if let Some(t) = self.target_rel_error {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("target_rel_error {t} must be positive"));
            }
        }
        if self.val_every_steps == 0 {
            return bad("val_every_steps must be positive".into());
        }
        if let Some(b) = self.wall_clock_budget_s {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("wall_clock_budget_s {b} must be ≥ 0"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gradient and optimizer state containers
// ---------------------------------------------------------------------------

/// Per-branch arrays matching the trainable parameter shapes; used both for
/// gradients and for optimizer moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchMoments {
    pub spatial_freqs: Vec<[f64; 3]>,
    pub out_weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl BranchMoments {
    fn zeros(two_w: usize) -> Self {
        Self {
            spatial_freqs: vec![[0.0; 3]; two_w],
            out_weights: vec![0.0; two_w],
            biases: vec![0.0; two_w],
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.spatial_freqs.iter_mut().zip(&other.spatial_freqs) {
            for m in 0..3 {
                a[m] += b[m];
            }
        }
        for (a, b) in self.out_weights.iter_mut().zip(&other.out_weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    fn is_finite(&self) -> bool {
        self.spatial_freqs
            .iter()
            .flatten()
            .chain(self.out_weights.iter())
            .chain(self.biases.iter())
            .all(|v| v.is_finite())
    }
}

/// Exact gradient of the masked loss with respect to all trainable arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub branches: [BranchMoments; 2],
}

impl GradientBundle {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let two_w = 2 * params.width_half;
        Self {
            branches: [BranchMoments::zeros(two_w), BranchMoments::zeros(two_w)],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.branches.iter().all(BranchMoments::is_finite)
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.branches.iter_mut().zip(&other.branches) {
            a.add_assign(b);
        }
    }
}

/// AdamW first/second moment estimates and the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: [BranchMoments; 2],
    pub v: [BranchMoments; 2],
}

impl AdamState {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let two_w = 2 * params.width_half;
        Self {
            step: 0,
            m: [BranchMoments::zeros(two_w), BranchMoments::zeros(two_w)],
            v: [BranchMoments::zeros(two_w), BranchMoments::zeros(two_w)],
        }
    }

    pub fn check_shapes(&self, params: &ModelParams) -> Result<()> {
        let two_w = 2 * params.width_half;
        for arrs in [&self.m, &self.v] {
            for a in arrs {
                if a.spatial_freqs.len() != two_w
                    || a.out_weights.len() != two_w
                    || a.biases.len() != two_w
                {
                    return Err(Error::InvalidParams(format!(
                        "optimizer moment arrays do not match width_half {}",
                        params.width_half
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

/// Mean squared prediction error over all unmasked (observation, component)
/// pairs.
pub fn masked_mse_loss(params: &ModelParams, obs: &ObservationSet) -> Result<f64> {
    Ok(loss_and_grad(params, obs, false)?.0)
}

/// Loss together with its exact gradient; one fused pass over the data.
pub fn loss_gradient(params: &ModelParams, obs: &ObservationSet) -> Result<(f64, GradientBundle)> {
    let (loss, grad) = loss_and_grad(params, obs, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

struct ChunkOut {
    sq_sum: f64,
    grad: Option<GradientBundle>,
}

fn loss_and_grad(
    params: &ModelParams,
    obs: &ObservationSet,
    with_grad: bool,
) -> Result<(f64, Option<GradientBundle>)> {
    params.validate()?;
    obs.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let m_count = obs.unmasked_count() as f64;
    let neurons = [
        build_neurons(&params.branches[0], 1),
        build_neurons(&params.branches[1], 2),
    ];
    let signs = [
        params.branches[0].signs.as_slice(),
        params.branches[1].signs.as_slice(),
    ];
    let act = params.activation;
    let two_over_m = 2.0 / m_count;

    // Parallel map over chunks, then a sequential fold in chunk order: the
    // result is independent of the worker count, bit for bit.
    let outs: Vec<ChunkOut> = obs
        .points
        .par_chunks(CHUNK)
        .zip(obs.targets.par_chunks(CHUNK))
        .zip(obs.masks.par_chunks(CHUNK))
        .map(|((pts, tgts), masks)| {
            if with_grad {
                chunk_loss_grad(&neurons, signs, act, pts, tgts, masks, two_over_m, params)
            } else {
                ChunkOut {
                    sq_sum: chunk_sq_sum(&neurons, act, pts, tgts, masks),
                    grad: None,
                }
            }
        })
        .collect();

    let mut sq_total = 0.0f64;
    let mut grad = with_grad.then(|| GradientBundle::zeros_like(params));
    for out in &outs {
        sq_total += out.sq_sum;
        if let (Some(acc), Some(g)) = (grad.as_mut(), out.grad.as_ref()) {
            acc.add_assign(g);
        }
    }
    Ok((sq_total / m_count, grad))
}

/// Forward pass of one chunk with no stored intermediates; shares the
/// accumulation order with the gradient path so both entry points produce
/// bit-identical losses.
fn chunk_sq_sum(
    neurons: &[Vec<Neuron>; 2],
    act: Activation,
    pts: &[SpacetimePoint],
    tgts: &[FieldSample],
    masks: &[u8],
) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if act == Activation::Tanh && crate::simd::tanh_fast_path() {
        let soa = crate::simd::ChunkSoA::from_points(pts);
        let mut y_soa = [[0.0f64; CHUNK]; 6];
        crate::simd::fwd_tanh(neurons, &soa, &mut y_soa);
        return masked_sq_soa(&y_soa, tgts, masks);
    }
    chunk_sq_sum_scalar(neurons, act, pts, tgts, masks)
}

fn chunk_sq_sum_scalar(
    neurons: &[Vec<Neuron>; 2],
    act: Activation,
    pts: &[SpacetimePoint],
    tgts: &[FieldSample],
    masks: &[u8],
) -> f64 {
    let mut y = [[0.0f64; 6]; CHUNK];
    for branch in neurons {
        for n in branch {
            for (pt, yrow) in pts.iter().zip(y.iter_mut()) {
                let wa = act.value(pre_activation(n, pt)) * n.w;
                for (yc, pc) in yrow.iter_mut().zip(n.p) {
                    *yc += wa * pc;
                }
            }
        }
    }
    masked_sq(&y, tgts, masks)
}

fn masked_sq(y: &[[f64; 6]; CHUNK], tgts: &[FieldSample], masks: &[u8]) -> f64 {
    let mut sq = 0.0f64;
    for (i, (tgt, &mask)) in tgts.iter().zip(masks).enumerate() {
        let t = tgt.components();
        for c in 0..6 {
            if mask & (1 << c) != 0 {
                let d = y[i][c] - t[c];
                sq += d * d;
            }
        }
    }
    sq
}

/// [`masked_sq`] over the vector path's transposed field layout; identical
/// accumulation order.
#[cfg(target_arch = "x86_64")]
fn masked_sq_soa(y: &[[f64; CHUNK]; 6], tgts: &[FieldSample], masks: &[u8]) -> f64 {
    let mut sq = 0.0f64;
    for (i, (tgt, &mask)) in tgts.iter().zip(masks).enumerate() {
        let t = tgt.components();
        for c in 0..6 {
            if mask & (1 << c) != 0 {
                let d = y[c][i] - t[c];
                sq += d * d;
            }
        }
    }
    sq
}

/// Per-neuron backward reduction sums, shared by the scalar and vector
/// paths.
pub(crate) struct NeuronSums {
    pub alpha: f64,      // Σ a·q        → ∂L/∂w
    pub beta: f64,       // Σ σ'·q       → ∂L/∂b / w
    pub tau: f64,        // Σ σ'·q·t     → phase route via z0
    pub gamma: [f64; 3], // Σ σ'·q·x̄_m  → phase route via ξ_m
    pub gbar: [f64; 6],  // Σ a·r_c      → multiplier route
}

/// Chain-rule tail turning one neuron's reduction sums into its gradient
/// entries (∂ξ, ∂w, ∂b); shared by the scalar and vector backward passes.
fn neuron_grads(n: &Neuron, branch_no: usize, sign: f64, s: &NeuronSums) -> ([f64; 3], f64, f64) {
    let xi = [n.z[1], n.z[2], n.z[3]];
    let norm = spatial_norm(xi).max(NORM_FLOOR);
    let jac = multiplier_jacobian(branch_no, crate::model::FrequencyVector(n.z));
    let dot6 = |a: &[f64; 6], b: &[f64; 6]| {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + a[5] * b[5]
    };
    let g_pz0 = dot6(&s.gbar, &jac[0]);
    let mut sf = [0.0f64; 3];
    for (m, out) in sf.iter_mut().enumerate() {
        let lambda = sign * xi[m] / norm;
        let g_pzm = dot6(&s.gbar, &jac[m + 1]);
        *out = n.w * (s.tau * lambda + s.gamma[m] + g_pz0 * lambda + g_pzm);
    }
    (sf, s.alpha, n.w * s.beta)
}

#[allow(clippy::too_many_arguments)]
fn chunk_loss_grad(
    neurons: &[Vec<Neuron>; 2],
    signs: [&[f64]; 2],
    act: Activation,
    pts: &[SpacetimePoint],
    tgts: &[FieldSample],
    masks: &[u8],
    two_over_m: f64,
    params: &ModelParams,
) -> ChunkOut {
    #[cfg(target_arch = "x86_64")]
    if act == Activation::Tanh && crate::simd::tanh_fast_path() {
        return chunk_loss_grad_tanh_avx2(neurons, signs, pts, tgts, masks, two_over_m, params);
    }
    chunk_loss_grad_scalar(neurons, signs, act, pts, tgts, masks, two_over_m, params)
}

#[allow(clippy::too_many_arguments)]
fn chunk_loss_grad_scalar(
    neurons: &[Vec<Neuron>; 2],
    signs: [&[f64]; 2],
    act: Activation,
    pts: &[SpacetimePoint],
    tgts: &[FieldSample],
    masks: &[u8],
    two_over_m: f64,
    params: &ModelParams,
) -> ChunkOut {
    let c_len = pts.len();
    let two_w = 2 * params.width_half;

    // Forward pass, keeping σ(u) and σ'(u) per (neuron, point) so the
    // backward pass re-evaluates no activations.
    let mut y = [[0.0f64; 6]; CHUNK];
    let mut a_buf = [vec![0.0f64; two_w * c_len], vec![0.0f64; two_w * c_len]];
    let mut d_buf = [vec![0.0f64; two_w * c_len], vec![0.0f64; two_w * c_len]];
    for (bi, branch) in neurons.iter().enumerate() {
        for (k, n) in branch.iter().enumerate() {
            let off = k * c_len;
            for (i, pt) in pts.iter().enumerate() {
                let (a, d) = act.value_and_deriv(pre_activation(n, pt));
                a_buf[bi][off + i] = a;
                d_buf[bi][off + i] = d;
                let wa = n.w * a;
                for (yc, pc) in y[i].iter_mut().zip(n.p) {
                    *yc += wa * pc;
                }
            }
        }
    }

    let sq_sum = masked_sq(&y, tgts, masks);

    // Loss sensitivities r = ∂L/∂ŷ = (2/M)·mask·(ŷ − target).
    let mut r = [[0.0f64; 6]; CHUNK];
    for (i, (tgt, &mask)) in tgts.iter().zip(masks).enumerate() {
        let t = tgt.components();
        for c in 0..6 {
            if mask & (1 << c) != 0 {
                r[i][c] = two_over_m * (y[i][c] - t[c]);
            }
        }
    }

    // Backward pass: per neuron, reduce over the chunk's points.
    let mut grad = GradientBundle::zeros_like(params);
    for (bi, branch) in neurons.iter().enumerate() {
        let branch_no = bi + 1;
        let g = &mut grad.branches[bi];
        for (k, n) in branch.iter().enumerate() {
            let off = k * c_len;
            let mut s = NeuronSums {
                alpha: 0.0,
                beta: 0.0,
                tau: 0.0,
                gamma: [0.0; 3],
                gbar: [0.0; 6],
            };
            for (i, pt) in pts.iter().enumerate() {
                let ri = &r[i];
                let q = ri[0] * n.p[0]
                    + ri[1] * n.p[1]
                    + ri[2] * n.p[2]
                    + ri[3] * n.p[3]
                    + ri[4] * n.p[4]
                    + ri[5] * n.p[5];
                let a = a_buf[bi][off + i];
                let d = d_buf[bi][off + i] * q;
                s.alpha += a * q;
                s.beta += d;
                s.tau += d * pt.t;
                s.gamma[0] += d * pt.x;
                s.gamma[1] += d * pt.y;
                s.gamma[2] += d * pt.z;
                for c in 0..6 {
                    s.gbar[c] += a * ri[c];
                }
            }
            let (sf, gw, gb) = neuron_grads(n, branch_no, signs[bi][k], &s);
            g.spatial_freqs[k] = sf;
            g.out_weights[k] = gw;
            g.biases[k] = gb;
        }
    }
    ChunkOut {
        sq_sum,
        grad: Some(grad),
    }
}

/// Vector-path variant of [`chunk_loss_grad`] for σ = tanh on AVX2 + FMA
/// hosts: same forward/backward structure, four points per instruction,
/// with σ/σ' rows padded to whole lane groups.
#[cfg(target_arch = "x86_64")]
fn chunk_loss_grad_tanh_avx2(
    neurons: &[Vec<Neuron>; 2],
    signs: [&[f64]; 2],
    pts: &[SpacetimePoint],
    tgts: &[FieldSample],
    masks: &[u8],
    two_over_m: f64,
    params: &ModelParams,
) -> ChunkOut {
    use crate::simd::{bwd_row_tanh, fwd_tanh_store, ChunkSoA};
    let soa = ChunkSoA::from_points(pts);
    let stride = soa.stride();
    let two_w = 2 * params.width_half;

    let mut y_soa = [[0.0f64; CHUNK]; 6];
    let mut a_buf = [vec![0.0f64; two_w * stride], vec![0.0f64; two_w * stride]];
    let mut d_buf = [vec![0.0f64; two_w * stride], vec![0.0f64; two_w * stride]];
    fwd_tanh_store(neurons, &soa, &mut a_buf, &mut d_buf, &mut y_soa);

    let sq_sum = masked_sq_soa(&y_soa, tgts, masks);

    // Loss sensitivities r = ∂L/∂ŷ in the transposed layout; padded lanes
    // stay zero, so they add exactly nothing to the reductions.
    let mut r_soa = [[0.0f64; CHUNK]; 6];
    for (i, (tgt, &mask)) in tgts.iter().zip(masks).enumerate() {
        let t = tgt.components();
        for c in 0..6 {
            if mask & (1 << c) != 0 {
                r_soa[c][i] = two_over_m * (y_soa[c][i] - t[c]);
            }
        }
    }

    let mut grad = GradientBundle::zeros_like(params);
    for (bi, branch) in neurons.iter().enumerate() {
        let branch_no = bi + 1;
        let g = &mut grad.branches[bi];
        for (k, n) in branch.iter().enumerate() {
            let off = k * stride;
            let sums = bwd_row_tanh(
                &a_buf[bi][off..off + stride],
                &d_buf[bi][off..off + stride],
                &n.p,
                &soa,
                &r_soa,
            );
            let (sf, gw, gb) = neuron_grads(n, branch_no, signs[bi][k], &sums);
            g.spatial_freqs[k] = sf;
            g.out_weights[k] = gw;
            g.biases[k] = gb;
        }
    }
    ChunkOut {
        sq_sum,
        grad: Some(grad),
    }
}

// ---------------------------------------------------------------------------
// Initialization, schedule, optimizer
// ---------------------------------------------------------------------------

/// Xavier-normal initialization with gain 5/3: frequency entries with
/// fan (4, 2W), output weights with fan (2W, 6), biases exactly zero, signs
/// split half +1 / half −1 per branch.
pub fn init_params(config: &TrainConfig) -> ModelParams {
    let mut rng = seeded_stream(config.seed, StreamId::TrainLoop);
    init_params_from(config, &mut rng)
}

/// Initialization continuing an existing stream (the training loop draws
/// its epoch shuffles from the same stream afterwards).
pub(crate) fn init_params_from(config: &TrainConfig, rng: &mut ChaCha8Rng) -> ModelParams {
    let w = config.width_half;
    let two_w = 2 * w;
    let gain = 5.0 / 3.0;
    let sf_std = gain * (2.0 / (4 + two_w) as f64).sqrt();
    let ow_std = gain * (2.0 / (two_w + 6) as f64).sqrt();
    let sf_dist = Normal::new(0.0, sf_std).expect("positive std");
    let ow_dist = Normal::new(0.0, ow_std).expect("positive std");
    let mut params = ModelParams::zeros(w, config.activation);
    for br in &mut params.branches {
        for row in &mut br.spatial_freqs {
            for v in row.iter_mut() {
                *v = sf_dist.sample(rng);
            }
        }
        for v in &mut br.out_weights {
            *v = ow_dist.sample(rng);
        }
    }
    params
}

/// Cosine-annealed learning rate by epoch: from `learning_rate` at epoch 0
/// down to `eta_min` at `cosine_epochs`, constant afterwards.
pub fn cosine_lr(epoch: u64, config: &TrainConfig) -> f64 {
    if epoch >= config.cosine_epochs {
        return config.eta_min;
    }
    let frac = epoch as f64 / config.cosine_epochs as f64;
    config.eta_min
        + (config.learning_rate - config.eta_min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// One AdamW update: decoupled weight decay on frequencies and output
/// weights (biases start at zero and are not decayed), then bias-corrected
/// moment step with ε = 1e-8.
pub fn adamw_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    grads: &GradientBundle,
    lr: f64,
    config: &TrainConfig,
) {
    state.step += 1;
    let bc1 = 1.0 - config.beta1.powi(state.step as i32);
    let bc2 = 1.0 - config.beta2.powi(state.step as i32);
    let (b1, b2) = (config.beta1, config.beta2);
    let decay = lr * config.weight_decay;

    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64, decayed: bool| {
        if decayed {
            *p -= decay * *p;
        }
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
    };

    for bi in 0..2 {
        let br = &mut params.branches[bi];
        let (m, v, g) = (&mut state.m[bi], &mut state.v[bi], &grads.branches[bi]);
        for k in 0..br.spatial_freqs.len() {
            for c in 0..3 {
                update(
                    &mut br.spatial_freqs[k][c],
                    &mut m.spatial_freqs[k][c],
                    &mut v.spatial_freqs[k][c],
                    g.spatial_freqs[k][c],
                    true,
                );
            }
        }
        for k in 0..br.out_weights.len() {
            update(
                &mut br.out_weights[k],
                &mut m.out_weights[k],
                &mut v.out_weights[k],
                g.out_weights[k],
                true,
            );
        }
        for k in 0..br.biases.len() {
            update(
                &mut br.biases[k],
                &mut m.biases[k],
                &mut v.biases[k],
                g.biases[k],
                false,
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxEpochs,
    WallClock,
    NonFiniteLoss,
}

/// One logged step (or validation-only event at step 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub epoch: u64,
    /// Cumulative optimizer time (forward + gradient + update), seconds.
    pub wall_seconds_train: f64,
    /// Wall time since the run started, including validation.
    pub wall_seconds_total: f64,
    pub loss: f64,
    pub lr: f64,
    pub val_rel_error: Option<f64>,
}

/// Complete step-by-step history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    pub stop_reason: StopReason,
    pub best_val_error: Option<f64>,
    pub best_step: u64,
}

impl TrainLog {
    /// Smallest validation error seen, if any validation ran.
    pub fn min_val_error(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.val_rel_error)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    pub fn final_total_seconds(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_seconds_total)
    }

    /// CSV columns: step, epoch, wall_seconds_train, wall_seconds_total,
    /// loss, lr, val_rel_error (empty when no validation ran that step).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "step",
            "epoch",
            "wall_seconds_train",
            "wall_seconds_total",
            "loss",
            "lr",
            "val_rel_error",
        ])?;
        for r in &self.records {
            w.write_record(&[
                r.step.to_string(),
                r.epoch.to_string(),
                r.wall_seconds_train.to_string(),
                r.wall_seconds_total.to_string(),
                r.loss.to_string(),
                r.lr.to_string(),
                r.val_rel_error.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A finished run: the best-validation parameter snapshot (final parameters
/// when no validation ran), the optimizer state at that snapshot, and the
/// full log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub log: TrainLog,
}

/// Fixed fallback points for the once-per-run residual gate when no
/// validation cloud is supplied.
fn residual_gate_points() -> Vec<SpacetimePoint> {
    let mut pts = Vec::with_capacity(16);
    for i in 0..16 {
        let f = |k: u32| ((i >> k) & 1) as f64 * 0.8 + 0.1;
        pts.push(SpacetimePoint::new(f(0), f(1), f(2), f(3)));
    }
    pts
}

/// Asserted once per run: the network is an exact solution, so its analytic
/// residual must sit at roundoff no matter the parameters.
fn residual_gate(params: &ModelParams, val_points: &[SpacetimePoint]) -> Result<()> {
    let fallback;
    let pts = if val_points.is_empty() {
        fallback = residual_gate_points();
        &fallback[..]
    } else {
        &val_points[..val_points.len().min(100)]
    };
    let fields = forward(params, pts);
    let max_field = fields
        .iter()
        .flat_map(|f| f.components())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = crate::model::model_residual_batch(params, pts);
    let max_res = residual
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 1e-8 * (1.0 + max_field);
    if max_res > bound {
        return Err(Error::VerificationFailed(format!(
            "model residual {max_res:e} exceeds {bound:e}; the exact-solution \
             construction is broken"
        )));
    }
    Ok(())
}

/// Runs the full training recipe and returns the best snapshot.
///
/// Epoch loop: reshuffle, mini-batches (the final short batch is kept; a
/// batch_size above the observation count degrades to full-batch), one
/// AdamW step per batch at the epoch's cosine rate. Validation every
/// `val_every_steps` steps plus once at step 0 and once at the end; the
/// best-validation snapshot (parameters and optimizer state) is returned.
/// Stops on target error, epoch count, or wall-clock budget — checked
/// before each batch so a budget of zero performs only the initial
/// validation.
pub fn train(
    config: &TrainConfig,
    train_obs: &ObservationSet,
    val_points: &[SpacetimePoint],
    val_targets: &[FieldSample],
) -> Result<TrainOutcome> {
    config.validate()?;
    train_obs.validate()?;
    if train_obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if val_points.len() != val_targets.len() {
        return Err(Error::MetricShape(format!(
            "validation points ({}) and targets ({}) differ",
            val_points.len(),
            val_targets.len()
        )));
    }

    let start = Instant::now();
    let mut train_seconds = 0.0f64;

    let mut rng = seeded_stream(config.seed, StreamId::TrainLoop);
    let mut params = init_params_from(config, &mut rng);
    let mut state = AdamState::zeros_like(&params);

    residual_gate(&params, val_points)?;

    let n = train_obs.len();
    let batch = config.batch_size.min(n);
    let mut indices: Vec<usize> = (0..n).collect();

    let mut records: Vec<TrainRecord> = Vec::new();
    let mut best_val: Option<f64> = None;
    let mut best_step = 0u64;
    let mut best_params = params.clone();
    let mut best_state = state.clone();
    let mut step = 0u64;
    let mut last_validated_step = u64::MAX;

    let validate_now = |params: &ModelParams,
                            state: &AdamState,
                            step: u64,
                            epoch: u64,
                            loss: f64,
                            lr: f64,
                            train_seconds: f64,
                            records: &mut Vec<TrainRecord>,
                            best_val: &mut Option<f64>,
                            best_step: &mut u64,
                            best_params: &mut ModelParams,
                            best_state: &mut AdamState,
                            last_validated_step: &mut u64|
     -> Option<f64> {
        let val = if val_points.is_empty() {
            None
        } else {
            let pred = forward(params, val_points);
            Some(relative_l2(&pred, val_targets).expect("validation cloud is nonempty"))
        };
        if let Some(v) = val {
            if best_val.map_or(true, |b| v < b) {
                *best_val = Some(v);
                *best_step = step;
                *best_params = params.clone();
                *best_state = state.clone();
            }
        }
        *last_validated_step = step;
        records.push(TrainRecord {
            step,
            epoch,
            wall_seconds_train: train_seconds,
            wall_seconds_total: start.elapsed().as_secs_f64(),
            loss,
            lr,
            val_rel_error: val,
        });
        val
    };

    // Step-0 record: initial loss and validation before any update.
    let loss0 = masked_mse_loss(&params, train_obs)?;
    let val0 = validate_now(
        &params,
        &state,
        0,
        0,
        loss0,
        cosine_lr(0, config),
        train_seconds,
        &mut records,
        &mut best_val,
        &mut best_step,
        &mut best_params,
        &mut best_state,
        &mut last_validated_step,
    );

    let target_hit =
        |v: Option<f64>| matches!((v, config.target_rel_error), (Some(v), Some(t)) if v <= t);

    let mut stop_reason = if target_hit(val0) {
        Some(StopReason::TargetReached)
    } else {
        None
    };

    'outer: for epoch in 0..config.max_epochs {
        if stop_reason.is_some() {
            break;
        }
        let lr = cosine_lr(epoch, config);
        indices.shuffle(&mut rng);
        for batch_idx in indices.chunks(batch) {
            if let Some(budget) = config.wall_clock_budget_s {
                if start.elapsed().as_secs_f64() >= budget {
                    stop_reason = Some(StopReason::WallClock);
                    break 'outer;
                }
            }
            let step_start = Instant::now();
            let batch_obs = train_obs.select(batch_idx);
            let (loss, grads) = loss_gradient(&params, &batch_obs)?;
            if !loss.is_finite() {
                let log = TrainLog {
                    records,
                    stop_reason: StopReason::NonFiniteLoss,
                    best_val_error: best_val,
                    best_step,
                };
                return Err(Error::NonFiniteLoss {
                    step,
                    epoch,
                    loss,
                    log: Box::new(log),
                });
            }
            adamw_step(&mut params, &mut state, &grads, lr, config);
            step += 1;
            train_seconds += step_start.elapsed().as_secs_f64();

            let val = if step % config.val_every_steps == 0 {
                validate_now(
                    &params,
                    &state,
                    step,
                    epoch,
                    loss,
                    lr,
                    train_seconds,
                    &mut records,
                    &mut best_val,
                    &mut best_step,
                    &mut best_params,
                    &mut best_state,
                    &mut last_validated_step,
                )
            } else {
                records.push(TrainRecord {
                    step,
                    epoch,
                    wall_seconds_train: train_seconds,
                    wall_seconds_total: start.elapsed().as_secs_f64(),
                    loss,
                    lr,
                    val_rel_error: None,
                });
                None
            };
            if target_hit(val) {
                stop_reason = Some(StopReason::TargetReached);
                break 'outer;
            }
        }
    }

    let stop_reason = stop_reason.unwrap_or(StopReason::MaxEpochs);

    // Final validation so the best snapshot reflects the last state too.
    if step > 0 && last_validated_step != step && !val_points.is_empty() {
        let loss = records.last().map_or(loss0, |r| r.loss);
        let epoch = records.last().map_or(0, |r| r.epoch);
        let lr = records.last().map_or(cosine_lr(0, config), |r| r.lr);
        validate_now(
            &params,
            &state,
            step,
            epoch,
            loss,
            lr,
            train_seconds,
            &mut records,
            &mut best_val,
            &mut best_step,
            &mut best_params,
            &mut best_state,
            &mut last_validated_step,
        );
    }

    let (params, state) = if best_val.is_some() {
        (best_params, best_state)
    } else {
        // No validation cloud: the final state is the result.
        (params, state)
    };

    Ok(TrainOutcome {
        params,
        optimizer: state,
        log: TrainLog {
            records,
            stop_reason,
            best_val_error: best_val,
            best_step,
        },
    })
}
