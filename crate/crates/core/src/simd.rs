//! Four-wide (AVX2 + FMA) fast path for the batched tanh kernels.
//!
//! The scalar chunk loops in `train` and `model` remain the portable
//! reference implementation; this module re-implements the two hot loops —
//! forward accumulation and the per-neuron backward reduction — four points
//! at a time for σ = tanh, the default activation, whose scalar step time is
//! dominated by one libm `tanh` call per (neuron, point) pair. Callers
//! consult [`tanh_fast_path`] and keep the scalar loops for every other
//! activation and host.
//!
//! [`vtanh`] tracks `f64::tanh` to a few ulp (asserted in tests), so this
//! path's outputs differ from the scalar path at roundoff scale. Dispatch is
//! consistent per entry point — a loss and any finite difference of that
//! loss always come from the same path — and lane order is fixed, so
//! results are deterministic for a fixed binary at any worker count.

use core::arch::x86_64::*;
use std::sync::OnceLock;

use crate::model::{Neuron, SpacetimePoint, CHUNK};
use crate::train::NeuronSums;

/// Points per vector group.
pub(crate) const LANES: usize = 4;

/// True when the host supports the AVX2 + FMA kernels.
pub(crate) fn tanh_fast_path() -> bool {
    static AVAILABLE: OnceLock<bool> = OnceLock::new();
    *AVAILABLE.get_or_init(|| {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    })
}

/// One chunk's coordinates transposed to structure-of-arrays, zero-padded to
/// a whole number of lane groups. Padded lanes are harmless downstream:
/// every reduction term carries a loss-sensitivity factor that is zero
/// there.
pub(crate) struct ChunkSoA {
    pub t: [f64; CHUNK],
    pub x: [f64; CHUNK],
    pub y: [f64; CHUNK],
    pub z: [f64; CHUNK],
    pub groups: usize,
}

impl ChunkSoA {
    pub fn from_points(pts: &[SpacetimePoint]) -> Self {
        let mut soa = ChunkSoA {
            t: [0.0; CHUNK],
            x: [0.0; CHUNK],
            y: [0.0; CHUNK],
            z: [0.0; CHUNK],
            groups: pts.len().div_ceil(LANES),
        };
        for (i, p) in pts.iter().enumerate() {
            soa.t[i] = p.t;
            soa.x[i] = p.x;
            soa.y[i] = p.y;
            soa.z[i] = p.z;
        }
        soa
    }

    pub fn stride(&self) -> usize {
        self.groups * LANES
    }
}

/// Taylor coefficients 1/k! for e^r on |r| ≤ ln2/2; degree 13 truncates at
/// ~4e-18 relative.
const EXP_COEFFS: [f64; 14] = [
    1.0,
    1.0,
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
    1.0 / 39916800.0,
    1.0 / 479001600.0,
    1.0 / 6227020800.0,
];

/// Coefficients of (tanh(a) − a)/a³ in powers of s = a²; with |a| < 0.125
/// the degree-7 tail truncates below one ulp.
const TANH_SMALL: [f64; 8] = [
    -1.0 / 3.0,
    2.0 / 15.0,
    -17.0 / 315.0,
    62.0 / 2835.0,
    -1382.0 / 155925.0,
    21844.0 / 6081075.0,
    -929569.0 / 638512875.0,
    6404582.0 / 10854718875.0,
];

/// Argument cap for e^{2|u|}: past it the quotient rounds to ±1, matching
/// libm tanh saturation.
const TANH_SAT: f64 = 38.125;

/// Cody–Waite split of ln 2 (high part exact in 33 bits).
const LN2_HI: f64 = 6.931_471_803_691_238_16e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_2e-10;

/// tanh on four lanes, for finite inputs (callers validate parameters and
/// points). |u| ≥ 0.125 evaluates (e^{2|u|} − 1)/(e^{2|u|} + 1) with a
/// Cody–Waite-reduced Taylor exponential; |u| < 0.125 uses the odd series
/// with the leading term kept exact. Both are computed and blended. Worst
/// case sits just above the blend threshold, where the quotient's
/// subtraction amplifies roundoff to ~1e-15 relative; elsewhere it stays
/// within a couple of ulp.
#[inline(always)]
unsafe fn vtanh(u: __m256d) -> __m256d {
    let neg_zero = _mm256_set1_pd(-0.0);
    let sign = _mm256_and_pd(u, neg_zero);
    let ax = _mm256_andnot_pd(neg_zero, u);

    // Large branch: t = e^{2|u|}, saturated.
    let x2 = _mm256_min_pd(_mm256_add_pd(ax, ax), _mm256_set1_pd(TANH_SAT));
    let k = _mm256_round_pd::<{ _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC }>(_mm256_mul_pd(
        x2,
        _mm256_set1_pd(std::f64::consts::LOG2_E),
    ));
    let r = _mm256_fnmadd_pd(k, _mm256_set1_pd(LN2_HI), x2);
    let r = _mm256_fnmadd_pd(k, _mm256_set1_pd(LN2_LO), r);
    let mut p = _mm256_set1_pd(EXP_COEFFS[13]);
    for c in EXP_COEFFS[..13].iter().rev() {
        p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(*c));
    }
    // 2^k through the exponent field; x2 ≥ 0 keeps k in [0, 55].
    let pow2 = _mm256_castsi256_pd(_mm256_slli_epi64::<52>(_mm256_add_epi64(
        _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(k)),
        _mm256_set1_epi64x(1023),
    )));
    let t = _mm256_mul_pd(p, pow2);
    let one = _mm256_set1_pd(1.0);
    let big = _mm256_div_pd(_mm256_sub_pd(t, one), _mm256_add_pd(t, one));

    // Small branch: a + a·s·Q(s), s = a².
    let s = _mm256_mul_pd(ax, ax);
    let mut q = _mm256_set1_pd(TANH_SMALL[7]);
    for c in TANH_SMALL[..7].iter().rev() {
        q = _mm256_fmadd_pd(q, s, _mm256_set1_pd(*c));
    }
    let small = _mm256_fmadd_pd(_mm256_mul_pd(ax, s), q, ax);

    let use_small = _mm256_cmp_pd::<_CMP_LT_OQ>(ax, _mm256_set1_pd(0.125));
    _mm256_or_pd(_mm256_blendv_pd(big, small, use_small), sign)
}

/// Scalar probe of [`vtanh`], for accuracy tests.
#[cfg(test)]
pub(crate) fn vtanh_scalar(u: f64) -> f64 {
    assert!(tanh_fast_path(), "host lacks AVX2+FMA");
    // SAFETY: availability checked above.
    unsafe {
        let v = vtanh(_mm256_set1_pd(u));
        let mut out = [0.0f64; LANES];
        _mm256_storeu_pd(out.as_mut_ptr(), v);
        out[0]
    }
}

/// Forward accumulation for one chunk: fields per point in SoA layout, and
/// (when `STORE`) σ and σ' per (neuron, point) in `stride`-pitched rows for
/// the backward pass. Group-outer so the six field accumulators live in
/// registers across all neurons.
#[inline(always)]
unsafe fn fwd_tanh_impl<const STORE: bool>(
    neurons: &[Vec<Neuron>; 2],
    soa: &ChunkSoA,
    bufs: Option<(&mut [Vec<f64>; 2], &mut [Vec<f64>; 2])>,
    y_soa: &mut [[f64; CHUNK]; 6],
) {
    let one = _mm256_set1_pd(1.0);
    let stride = soa.stride();
    let (mut a_ptrs, mut d_ptrs) = ([std::ptr::null_mut(); 2], [std::ptr::null_mut(); 2]);
    if STORE {
        let (a_buf, d_buf) = bufs.expect("store variant passes buffers");
        for bi in 0..2 {
            debug_assert!(a_buf[bi].len() >= neurons[bi].len() * stride);
            debug_assert!(d_buf[bi].len() >= neurons[bi].len() * stride);
            a_ptrs[bi] = a_buf[bi].as_mut_ptr();
            d_ptrs[bi] = d_buf[bi].as_mut_ptr();
        }
    }
    for g in 0..soa.groups {
        let o = g * LANES;
        let t4 = _mm256_loadu_pd(soa.t.as_ptr().add(o));
        let x4 = _mm256_loadu_pd(soa.x.as_ptr().add(o));
        let y4 = _mm256_loadu_pd(soa.y.as_ptr().add(o));
        let z4 = _mm256_loadu_pd(soa.z.as_ptr().add(o));
        let mut acc = [_mm256_setzero_pd(); 6];
        for (bi, branch) in neurons.iter().enumerate() {
            for (k, n) in branch.iter().enumerate() {
                let u = _mm256_fmadd_pd(
                    _mm256_set1_pd(n.z[3]),
                    z4,
                    _mm256_fmadd_pd(
                        _mm256_set1_pd(n.z[2]),
                        y4,
                        _mm256_fmadd_pd(
                            _mm256_set1_pd(n.z[1]),
                            x4,
                            _mm256_fmadd_pd(_mm256_set1_pd(n.z[0]), t4, _mm256_set1_pd(n.b)),
                        ),
                    ),
                );
                let a = vtanh(u);
                if STORE {
                    let d = _mm256_fnmadd_pd(a, a, one);
                    _mm256_storeu_pd(a_ptrs[bi].add(k * stride + o), a);
                    _mm256_storeu_pd(d_ptrs[bi].add(k * stride + o), d);
                }
                let wa = _mm256_mul_pd(a, _mm256_set1_pd(n.w));
                for c in 0..6 {
                    acc[c] = _mm256_fmadd_pd(wa, _mm256_set1_pd(n.p[c]), acc[c]);
                }
            }
        }
        for c in 0..6 {
            _mm256_storeu_pd(y_soa[c].as_mut_ptr().add(o), acc[c]);
        }
    }
}

#[target_feature(enable = "avx2,fma")]
unsafe fn fwd_tanh_store_inner(
    neurons: &[Vec<Neuron>; 2],
    soa: &ChunkSoA,
    a_buf: &mut [Vec<f64>; 2],
    d_buf: &mut [Vec<f64>; 2],
    y_soa: &mut [[f64; CHUNK]; 6],
) {
    fwd_tanh_impl::<true>(neurons, soa, Some((a_buf, d_buf)), y_soa);
}

#[target_feature(enable = "avx2,fma")]
unsafe fn fwd_tanh_inner(
    neurons: &[Vec<Neuron>; 2],
    soa: &ChunkSoA,
    y_soa: &mut [[f64; CHUNK]; 6],
) {
    fwd_tanh_impl::<false>(neurons, soa, None, y_soa);
}

/// Forward pass that also records σ and σ' rows for the backward pass.
/// Buffer rows are `soa.stride()`-pitched per neuron.
pub(crate) fn fwd_tanh_store(
    neurons: &[Vec<Neuron>; 2],
    soa: &ChunkSoA,
    a_buf: &mut [Vec<f64>; 2],
    d_buf: &mut [Vec<f64>; 2],
    y_soa: &mut [[f64; CHUNK]; 6],
) {
    assert!(tanh_fast_path(), "host lacks AVX2+FMA");
    // SAFETY: availability checked above; buffer sizes asserted inside.
    unsafe { fwd_tanh_store_inner(neurons, soa, a_buf, d_buf, y_soa) }
}

/// Forward pass alone; accumulates exactly like [`fwd_tanh_store`] so both
/// loss entry points produce bit-identical values.
pub(crate) fn fwd_tanh(neurons: &[Vec<Neuron>; 2], soa: &ChunkSoA, y_soa: &mut [[f64; CHUNK]; 6]) {
    assert!(tanh_fast_path(), "host lacks AVX2+FMA");
    // SAFETY: availability checked above.
    unsafe { fwd_tanh_inner(neurons, soa, y_soa) }
}

/// Fixed-order horizontal sum: (lane0 + lane2) + (lane1 + lane3).
#[inline(always)]
unsafe fn hsum(v: __m256d) -> f64 {
    let lo = _mm256_castpd256_pd128(v);
    let hi = _mm256_extractf128_pd::<1>(v);
    let pair = _mm_add_pd(lo, hi);
    _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)))
}

#[target_feature(enable = "avx2,fma")]
unsafe fn bwd_row_tanh_inner(
    a_row: &[f64],
    d_row: &[f64],
    p: &[f64; 6],
    soa: &ChunkSoA,
    r_soa: &[[f64; CHUNK]; 6],
) -> NeuronSums {
    let p4: [__m256d; 6] = std::array::from_fn(|c| _mm256_set1_pd(p[c]));
    let mut va = _mm256_setzero_pd();
    let mut vb = _mm256_setzero_pd();
    let mut vt = _mm256_setzero_pd();
    let mut vg = [_mm256_setzero_pd(); 3];
    let mut vgb = [_mm256_setzero_pd(); 6];
    for g in 0..soa.groups {
        let o = g * LANES;
        let r: [__m256d; 6] = std::array::from_fn(|c| _mm256_loadu_pd(r_soa[c].as_ptr().add(o)));
        let mut q = _mm256_mul_pd(r[0], p4[0]);
        for c in 1..6 {
            q = _mm256_fmadd_pd(r[c], p4[c], q);
        }
        let a = _mm256_loadu_pd(a_row.as_ptr().add(o));
        let dq = _mm256_mul_pd(_mm256_loadu_pd(d_row.as_ptr().add(o)), q);
        va = _mm256_fmadd_pd(a, q, va);
        vb = _mm256_add_pd(vb, dq);
        vt = _mm256_fmadd_pd(dq, _mm256_loadu_pd(soa.t.as_ptr().add(o)), vt);
        vg[0] = _mm256_fmadd_pd(dq, _mm256_loadu_pd(soa.x.as_ptr().add(o)), vg[0]);
        vg[1] = _mm256_fmadd_pd(dq, _mm256_loadu_pd(soa.y.as_ptr().add(o)), vg[1]);
        vg[2] = _mm256_fmadd_pd(dq, _mm256_loadu_pd(soa.z.as_ptr().add(o)), vg[2]);
        for c in 0..6 {
            vgb[c] = _mm256_fmadd_pd(a, r[c], vgb[c]);
        }
    }
    NeuronSums {
        alpha: hsum(va),
        beta: hsum(vb),
        tau: hsum(vt),
        gamma: [hsum(vg[0]), hsum(vg[1]), hsum(vg[2])],
        gbar: std::array::from_fn(|c| hsum(vgb[c])),
    }
}

/// Backward reduction over one neuron's stored σ/σ' row: the same five sums
/// the scalar loop accumulates, with a fixed lane-fold order.
pub(crate) fn bwd_row_tanh(
    a_row: &[f64],
    d_row: &[f64],
    p: &[f64; 6],
    soa: &ChunkSoA,
    r_soa: &[[f64; CHUNK]; 6],
) -> NeuronSums {
    assert!(tanh_fast_path(), "host lacks AVX2+FMA");
    assert!(a_row.len() >= soa.stride() && d_row.len() >= soa.stride());
    // SAFETY: availability and row lengths checked above.
    unsafe { bwd_row_tanh_inner(a_row, d_row, p, soa, r_soa) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_tanh_tracks_libm() {
        if !tanh_fast_path() {
            return;
        }
        let mut max_rel = 0.0f64;
        let mut worst = 0.0f64;
        let mut check = |u: f64| {
            let got = vtanh_scalar(u);
            let want = u.tanh();
            let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            if rel > max_rel {
                max_rel = rel;
                worst = u;
            }
        };
        // Dense linear sweep through both branches and the blend boundary,
        // then a logarithmic sweep into the tiny range.
        for i in -400_000..=400_000 {
            check(i as f64 * 5e-5);
        }
        for e in -300..0 {
            check(10f64.powf(e as f64 * 0.1));
            check(-(10f64.powf(e as f64 * 0.1)));
        }
        assert!(
            max_rel <= 5e-15,
            "max rel error {max_rel:.3e} at u = {worst:.6e}"
        );
        assert_eq!(vtanh_scalar(0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(vtanh_scalar(25.0), 1.0);
        assert_eq!(vtanh_scalar(-25.0), -1.0);
        assert_eq!(vtanh_scalar(f64::INFINITY), 1.0);
    }
}
