//! Exact network construction for divergence-free trigonometric fields.
//!
//! For a spatial frequency ξ with ξ1 ≠ 0, the four multiplier vectors
//! p1(±‖ξ‖, ξ), p2(±‖ξ‖, ξ) span the 4-dimensional kernel of the divergence
//! symbol R(ξ) = [ξᵀ 0; 0 ξᵀ]. Stacked as the 6×4 matrix P(ξ), any
//! divergence-free amplitude a solves P(ξ)·c = a for a unique coefficient
//! vector c, and the cosine network with those coefficients reproduces
//! a·cos(ξ·x̄) at t = 0 — then evolves it **exactly** in time, because each
//! neuron is a light-cone plane wave. Sine terms ride along as cosines with
//! bias −π/2.
//!
//! Frequencies with ξ1 = 0 genuinely lose rank (the second multiplier
//! degenerates), so they are rejected outright rather than perturbed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    lift_frequency, noetherian_multiplier, spatial_norm, FieldSample, ModelParams,
};
use crate::activation::Activation;

/// Frequencies with |ξ1| below this are rejected as rank-deficient.
pub const XI1_MIN: f64 = 1e-8;
/// Kernel-membership gate for amplitudes entering the solver.
const KERNEL_TOL: f64 = 1e-10;
/// Stricter gate enforced by the TrigTerm constructor.
const TERM_KERNEL_TOL: f64 = 1e-12;
/// Relative residual allowed for the reconstructed amplitude P·c ≈ a.
const SOLVE_TOL: f64 = 1e-9;

/// One trigonometric mode of an initial field:
/// amp_cos·cos(ξ·x̄) + amp_sin·sin(ξ·x̄), both amplitudes divergence-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub xi: [f64; 3],
    pub amp_cos: [f64; 6],
    pub amp_sin: [f64; 6],
}

impl TrigTerm {
    pub fn new(xi: [f64; 3], amp_cos: [f64; 6], amp_sin: [f64; 6]) -> Result<Self> {
        let term = Self {
            xi,
            amp_cos,
            amp_sin,
        };
        term.validate()?;
        Ok(term)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi[0].abs() < XI1_MIN {
            return Err(Error::DegenerateFrequency {
                xi1: self.xi[0],
                min: XI1_MIN,
            });
        }
        for amp in [&self.amp_cos, &self.amp_sin] {
            let [div_e, div_b] = divergence_symbol(self.xi, amp);
            let scale = (spatial_norm(self.xi) * amp_norm(amp)).max(1.0);
            let worst = div_e.abs().max(div_b.abs());
            if worst > TERM_KERNEL_TOL * scale {
                return Err(Error::AmplitudeNotInKernel {
                    residual: worst,
                    tol: TERM_KERNEL_TOL * scale,
                });
            }
        }
        Ok(())
    }

    /// The term's field at spatial position x̄ (its t = 0 snapshot).
    pub fn eval(&self, spatial: [f64; 3]) -> FieldSample {
        let u = self.xi[0] * spatial[0] + self.xi[1] * spatial[1] + self.xi[2] * spatial[2];
        let (c, s) = (u.cos(), u.sin());
        let mut comps = [0.0f64; 6];
        for i in 0..6 {
            comps[i] = self.amp_cos[i] * c + self.amp_sin[i] * s;
        }
        FieldSample::from_components(comps)
    }
}

fn amp_norm(a: &[f64; 6]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Applies the divergence symbol R(ξ): (ξ·aE, ξ·aB). Zero exactly when the
/// amplitude is divergence-free.
pub fn divergence_symbol(xi: [f64; 3], amp: &[f64; 6]) -> [f64; 2] {
    [
        xi[0] * amp[0] + xi[1] * amp[1] + xi[2] * amp[2],
        xi[0] * amp[3] + xi[1] * amp[4] + xi[2] * amp[5],
    ]
}

/// Projects an arbitrary amplitude onto ker R(ξ) by removing the components
/// of aE and aB parallel to ξ.
pub fn project_divergence_free(xi: [f64; 3], amp: [f64; 6]) -> [f64; 6] {
    let nsq = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let mut out = amp;
    for (block, div) in [(0, 0), (3, 1)] {
        let d = divergence_symbol(xi, &amp)[div] / nsq;
        for m in 0..3 {
            out[block + m] -= d * xi[m];
        }
    }
    out
}

/// The 6×4 multiplier matrix whose columns are p1(+‖ξ‖,ξ), p2(+‖ξ‖,ξ),
/// p1(−‖ξ‖,ξ), p2(−‖ξ‖,ξ). Full rank exactly when ξ1 ≠ 0.
pub fn build_p(xi: [f64; 3]) -> Result<[[f64; 4]; 6]> {
    if xi == [0.0; 3] {
        return Err(Error::ZeroFrequency);
    }
    let zp = lift_frequency(xi, 1.0);
    let zm = lift_frequency(xi, -1.0);
    let cols = [
        noetherian_multiplier(1, zp),
        noetherian_multiplier(2, zp),
        noetherian_multiplier(1, zm),
        noetherian_multiplier(2, zm),
    ];
    let mut p = [[0.0f64; 4]; 6];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..6 {
            p[i][j] = col[i];
        }
    }
    Ok(p)
}

/// Solves P(ξ)·c = amplitude by Householder QR.
///
/// The amplitude must be divergence-free (within 1e-10 relative); the
/// reconstructed P·c is verified against the input to relative 1e-9.
pub fn solve_coefficients(xi: [f64; 3], amplitude: &[f64; 6]) -> Result<[f64; 4]> {
    if xi[0].abs() < XI1_MIN {
        return Err(Error::DegenerateFrequency {
            xi1: xi[0],
            min: XI1_MIN,
        });
    }
    let a_norm = amp_norm(amplitude);
    if a_norm == 0.0 {
        return Ok([0.0; 4]);
    }
    let scale = (spatial_norm(xi) * a_norm).max(1.0);
    let [div_e, div_b] = divergence_symbol(xi, amplitude);
    let worst = div_e.abs().max(div_b.abs());
    if worst > KERNEL_TOL * scale {
        return Err(Error::AmplitudeNotInKernel {
            residual: worst,
            tol: KERNEL_TOL * scale,
        });
    }

    let p = build_p(xi)?;
    let c = qr_solve_6x4(p, *amplitude).ok_or(Error::RankDeficient { xi })?;

    // Consistency: the residual measures distance from im P = ker R(ξ).
    let mut res = 0.0f64;
    for i in 0..6 {
        let mut v = -amplitude[i];
        for j in 0..4 {
            v += p[i][j] * c[j];
        }
        res += v * v;
    }
    let res = res.sqrt();
    if res > SOLVE_TOL * a_norm {
        return Err(Error::AmplitudeNotInKernel {
            residual: res,
            tol: SOLVE_TOL * a_norm,
        });
    }
    Ok(c)
}

/// Least-squares solve of the 6×4 system via Householder reflections;
/// `None` when a pivot collapses (rank < 4).
fn qr_solve_6x4(mut a: [[f64; 4]; 6], mut b: [f64; 6]) -> Option<[f64; 4]> {
    // Rank threshold relative to the largest column norm.
    let col_scale = (0..4)
        .map(|j| (0..6).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    if col_scale == 0.0 {
        return None;
    }
    for k in 0..4 {
        let mut nrm = 0.0f64;
        for row in a.iter().skip(k) {
            nrm += row[k] * row[k];
        }
        let nrm = nrm.sqrt();
        if nrm <= 1e-10 * col_scale {
            return None;
        }
        let alpha = if a[k][k] >= 0.0 { -nrm } else { nrm };
        let mut v = [0.0f64; 6];
        v[k] = a[k][k] - alpha;
        for i in (k + 1)..6 {
            v[i] = a[i][k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            for j in k..4 {
                let s: f64 = (k..6).map(|i| v[i] * a[i][j]).sum();
                let f = 2.0 * s / vtv;
                for i in k..6 {
                    a[i][j] -= f * v[i];
                }
            }
            let s: f64 = (k..6).map(|i| v[i] * b[i]).sum();
            let f = 2.0 * s / vtv;
            for i in k..6 {
                b[i] -= f * v[i];
            }
        }
        a[k][k] = alpha;
    }
    let mut c = [0.0f64; 4];
    for k in (0..4).rev() {
        let mut s = b[k];
        for j in (k + 1)..4 {
            s -= a[k][j] * c[j];
        }
        c[k] = s / a[k][k];
    }
    Some(c)
}

/// Assembles the cosine network that reproduces Σ terms at t = 0 and
/// evolves it exactly: 8 neurons per term (4 per branch: ± lift × cos/sin),
/// so width_half = 2 × term count.
pub fn assemble_cos_network(terms: &[TrigTerm]) -> Result<ModelParams> {
    let mut solved = Vec::with_capacity(terms.len());
    for term in terms {
        term.validate()?;
        let c_cos = solve_coefficients(term.xi, &term.amp_cos)?;
        let c_sin = solve_coefficients(term.xi, &term.amp_sin)?;
        solved.push((c_cos, c_sin));
    }
    let mut params = ModelParams::zeros(2 * terms.len(), Activation::Cos);
    for (bi, branch) in params.branches.iter_mut().enumerate() {
        branch.spatial_freqs.clear();
        branch.signs.clear();
        branch.out_weights.clear();
        branch.biases.clear();
        for (term, (c_cos, c_sin)) in terms.iter().zip(&solved) {
            // Column layout of P: (branch1,+), (branch2,+), (branch1,−),
            // (branch2,−) → this branch owns columns bi and bi+2. Sine terms
            // ride on cos(u − π/2) = sin(u).
            for (sign, weight, bias) in [
                (1.0, c_cos[bi], 0.0),
                (-1.0, c_cos[bi + 2], 0.0),
                (1.0, c_sin[bi], -std::f64::consts::FRAC_PI_2),
                (-1.0, c_sin[bi + 2], -std::f64::consts::FRAC_PI_2),
            ] {
                branch.spatial_freqs.push(term.xi);
                branch.signs.push(sign);
                branch.out_weights.push(weight);
                branch.biases.push(bias);
            }
        }
    }
    params.validate()?;
    Ok(params)
}

/// Evaluates the target trig field Σ [amp_cos·cos(ξ·x̄) + amp_sin·sin(ξ·x̄)]
/// at a spatial point — the t = 0 reference for the assembled network.
pub fn eval_trig_field(terms: &[TrigTerm], spatial: [f64; 3]) -> FieldSample {
    let mut out = FieldSample::default();
    for term in terms {
        let f = term.eval(spatial);
        for c in 0..3 {
            out.e[c] += f.e[c];
            out.b[c] += f.b[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, model_residual, SpacetimePoint};
    use crate::rng::{seeded_stream, uniform, StreamId};

    fn random_xi(rng: &mut rand_chacha::ChaCha8Rng) -> [f64; 3] {
        loop {
            let xi = [
                uniform(rng, -2.0, 2.0),
                uniform(rng, -2.0, 2.0),
                uniform(rng, -2.0, 2.0),
            ];
            if xi[0].abs() >= 0.1 {
                return xi;
            }
        }
    }

    fn random_kernel_amp(rng: &mut rand_chacha::ChaCha8Rng, xi: [f64; 3]) -> [f64; 6] {
        let raw = [
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        ];
        project_divergence_free(xi, raw)
    }

    #[test]
    fn build_p_example_column() {
        let p = build_p([1.0, 0.0, 0.0]).unwrap();
        let col1: Vec<f64> = (0..6).map(|i| p[i][0]).collect();
        assert_eq!(col1, vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            build_p([0.0, 0.0, 0.0]).unwrap_err(),
            Error::ZeroFrequency
        ));
    }

    #[test]
    fn xi1_zero_collapses_rank() {
        // At ξ=(0,1,0) both branch-2 columns vanish, so P has rank < 4 and
        // the factorization reports it; this is why |ξ1| is gated.
        let p = build_p([0.0, 1.0, 0.0]).unwrap();
        assert!(qr_solve_6x4(p, [0.0; 6]).is_none());
        let ok = build_p([1.0, 1.0, 0.0]).unwrap();
        assert!(qr_solve_6x4(ok, [0.0; 6]).is_some());
    }

    #[test]
    fn p_columns_live_in_divergence_kernel() {
        let mut rng = seeded_stream(1, StreamId::Verify);
        for _ in 0..100 {
            let xi = random_xi(&mut rng);
            let p = build_p(xi).unwrap();
            for j in 0..4 {
                let col = [p[0][j], p[1][j], p[2][j], p[3][j], p[4][j], p[5][j]];
                let scale = (spatial_norm(xi) * amp_norm(&col)).max(1.0);
                for d in divergence_symbol(xi, &col) {
                    assert!(d.abs() <= 1e-12 * scale, "R·P column {j} = {d:e}");
                }
            }
        }
    }

    #[test]
    fn solve_trivial_cases() {
        let xi = [0.8, -0.4, 1.1];
        let p = build_p(xi).unwrap();
        let col1 = [p[0][0], p[1][0], p[2][0], p[3][0], p[4][0], p[5][0]];
        let c = solve_coefficients(xi, &col1).unwrap();
        assert!((c[0] - 1.0).abs() <= 1e-10);
        for j in 1..4 {
            assert!(c[j].abs() <= 1e-10, "c[{j}] = {}", c[j]);
        }
        assert_eq!(solve_coefficients(xi, &[0.0; 6]).unwrap(), [0.0; 4]);
    }

    #[test]
    fn solve_reproduces_random_kernel_amplitudes() {
        let mut rng = seeded_stream(2, StreamId::Verify);
        for _ in 0..100 {
            let xi = random_xi(&mut rng);
            let amp = random_kernel_amp(&mut rng, xi);
            let c = solve_coefficients(xi, &amp).unwrap();
            let p = build_p(xi).unwrap();
            let mut err = 0.0f64;
            for i in 0..6 {
                let mut v = -amp[i];
                for j in 0..4 {
                    v += p[i][j] * c[j];
                }
                err += v * v;
            }
            assert!(
                err.sqrt() <= 1e-10 * amp_norm(&amp).max(1e-16),
                "residual {} at ξ={xi:?}",
                err.sqrt()
            );
        }
    }

    #[test]
    fn degenerate_and_infeasible_inputs_error() {
        assert!(matches!(
            solve_coefficients([0.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap_err(),
            Error::DegenerateFrequency { .. }
        ));
        // ξ-parallel electric amplitude has divergence ‖ξ‖² ≠ 0.
        let xi = [1.0, 0.5, -0.3];
        let bad = [xi[0], xi[1], xi[2], 0.0, 0.0, 0.0];
        assert!(matches!(
            solve_coefficients(xi, &bad).unwrap_err(),
            Error::AmplitudeNotInKernel { .. }
        ));
        assert!(TrigTerm::new(xi, bad, [0.0; 6]).is_err());
        assert!(TrigTerm::new([0.0, 1.0, 1.0], [0.0; 6], [0.0; 6]).is_err());
    }

    #[test]
    fn projection_lands_in_kernel() {
        let mut rng = seeded_stream(3, StreamId::Verify);
        for _ in 0..50 {
            let xi = random_xi(&mut rng);
            let amp = random_kernel_amp(&mut rng, xi);
            let scale = (spatial_norm(xi) * amp_norm(&amp)).max(1.0);
            for d in divergence_symbol(xi, &amp) {
                assert!(d.abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn assemble_empty_is_zero_network() {
        let params = assemble_cos_network(&[]).unwrap();
        assert_eq!(params.width_half, 0);
        let f = forward(&params, &[SpacetimePoint::new(0.3, 0.1, 0.2, 0.9)]);
        assert_eq!(f[0], FieldSample::default());
    }

    #[test]
    fn assemble_axis_cosine_example() {
        let term = TrigTerm::new(
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            [0.0; 6],
        )
        .unwrap();
        let params = assemble_cos_network(&[term]).unwrap();
        assert_eq!(params.width_half, 2);
        let mut rng = seeded_stream(4, StreamId::Verify);
        for _ in 0..50 {
            let (x, y, z) = (
                uniform(&mut rng, 0.0, std::f64::consts::TAU),
                uniform(&mut rng, 0.0, std::f64::consts::TAU),
                uniform(&mut rng, 0.0, std::f64::consts::TAU),
            );
            let out = forward(&params, &[SpacetimePoint::new(0.0, x, y, z)])[0];
            let expect = [0.0, x.cos(), 0.0, 0.0, 0.0, x.cos()];
            for (got, want) in out.components().iter().zip(expect) {
                assert!(
                    (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                    "{got} vs {want} at x={x}"
                );
            }
        }
    }

    #[test]
    fn assembled_network_matches_field_and_stays_exact() {
        let mut rng = seeded_stream(5, StreamId::Verify);
        let terms: Vec<TrigTerm> = (0..4)
            .map(|_| {
                let xi = random_xi(&mut rng);
                TrigTerm::new(
                    xi,
                    random_kernel_amp(&mut rng, xi),
                    random_kernel_amp(&mut rng, xi),
                )
                .unwrap()
            })
            .collect();
        let params = assemble_cos_network(&terms).unwrap();
        assert_eq!(params.width_half, 8);

        // t = 0 reproduction against the closed-form trig field.
        let mut max_field = 0.0f64;
        for _ in 0..100 {
            let sp = [
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
                uniform(&mut rng, 0.0, 1.0),
            ];
            let want = eval_trig_field(&terms, sp);
            let got = forward(&params, &[SpacetimePoint::new(0.0, sp[0], sp[1], sp[2])])[0];
            for (g, w) in got.components().iter().zip(want.components()) {
                max_field = max_field.max(w.abs());
                assert!(
                    (g - w).abs() <= 1e-9 * (1.0 + w.abs()),
                    "reproduction error {g} vs {w}"
                );
            }
        }

        // Exact in time: analytic residual at roundoff for t ∈ {0, 0.5}.
        for t in [0.0, 0.5] {
            for _ in 0..20 {
                let pt = SpacetimePoint::new(
                    t,
                    uniform(&mut rng, 0.0, 1.0),
                    uniform(&mut rng, 0.0, 1.0),
                    uniform(&mut rng, 0.0, 1.0),
                );
                for v in model_residual(&params, &pt) {
                    assert!(
                        v.abs() <= 1e-10 * (1.0 + max_field),
                        "residual {v:e} at t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn assembled_signs_are_balanced_and_on_cone() {
        let term = TrigTerm::new([0.7, 0.3, -0.5], [0.0; 6], [0.0; 6]).unwrap();
        let params = assemble_cos_network(&[term, term]).unwrap();
        params.validate().unwrap();
        for br in &params.branches {
            for (sf, &s) in br.spatial_freqs.iter().zip(&br.signs) {
                assert!(lift_frequency(*sf, s).cone_gap_ulps() <= 4.0);
            }
        }
    }
}
