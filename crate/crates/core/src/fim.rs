//! Closed-form predicted conditional Fisher information and position PC-CRLB.
//!
//! At the prediction `d = d_{n|n-1}` with prior information `M^-1`, the Fisher
//! information is `J = Re(sum_m G_m^H Q_m^-1 G_m) + M^-1`, partitioned into
//! position/velocity blocks. Only `J_pp` depends on the beams, and it does so
//! through three real quadratic functionals
//!
//! ```text
//! f^i(w) = sum_{m,k,l} sigma_theta^-2 w_{m,k}^H At^i_m w_{m,k} + upsilon^i,   i = 1, 2, 3,
//! ```
//!
//! giving the `xx`, `xy` and `yy` entries. `At^1 = Ay^H Ay`, `At^2 = Ay^H Ax`,
//! `At^3 = Ax^H Ax` with `Ay = alpha omega (d theta / d p_x) A'(theta)` and
//! `Ax = alpha omega (d theta / d p_y) A'(theta)`; `upsilon^i` collects the delay
//! and Doppler terms and the prior.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, sym2_eigenvalues, CMatrix, C64};
use crate::scenario::{ScenarioConfig, TargetState};
use crate::tracker::{angle_gradient, steering_product_derivative};
use crate::waveform::{bs_view, BeamformerSet};

/// Prior information `M^-1` of a predicted covariance.
pub fn prior_fim(m_pred: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let sym = (m_pred + m_pred.transpose()) * 0.5;
    let chol = sym.cholesky().ok_or_else(|| {
        Error::SingularCovariance("predicted covariance not positive definite".into())
    })?;
    let inv = chol.inverse();
    Ok((inv + inv.transpose()) * 0.5)
}

/// Beam-dependent and beam-independent Fisher terms contributed by one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct BsCoefficients {
    /// `[At^1, At^2, At^3]` for a single `(k, l)`; identical for every `(k, l)`
    /// because the matched-filter gain is constant.
    pub a_tilde: [CMatrix; 3],
    /// Delay and Doppler contributions `[abar^1, abar^2, abar^3]` to `J_pp`.
    pub a_bar: [f64; 3],
    /// Doppler contribution to `J_pv` (rows `p`, columns `v`).
    pub j_pv: Matrix2<f64>,
    /// Doppler contribution to `J_vv`.
    pub j_vv: Matrix2<f64>,
    pub sigma_theta2: f64,
    /// `(l_x, l_y, psi)` at the prediction.
    pub geometry: [f64; 3],
}

/// Everything needed to evaluate the Fisher blocks as functions of the beams.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoefficients {
    pub bs: Vec<BsCoefficients>,
    /// Prior information entries `varsigma_ij` (the matrix `M^-1`).
    pub prior: Matrix4<f64>,
    /// `[upsilon^1, upsilon^2, upsilon^3]`.
    pub upsilon: [f64; 3],
    /// Beam-independent `J_pv` and `J_vv`.
    pub j_pv: Matrix2<f64>,
    pub j_vv: Matrix2<f64>,
    pub subcarriers: usize,
    pub symbols: usize,
}

impl QuadraticCoefficients {
    /// `At^i` of BS `m` at subcarrier `k` and symbol `l` (`i` in `0..3`).
    pub fn a_tilde(&self, m: usize, _k: usize, _l: usize, i: usize) -> &CMatrix {
        &self.bs[m].a_tilde[i]
    }

    /// Per-subcarrier weight `B^i_m = sum_l sigma_theta^-2 At^i_m`, so that
    /// `f^i(w) = sum_{m,k} w_{m,k}^H B^i_m w_{m,k} + upsilon^i`.
    pub fn weight(&self, m: usize, i: usize) -> CMatrix {
        let b = &self.bs[m];
        b.a_tilde[i].scale(self.symbols as f64 / b.sigma_theta2)
    }

    /// The three functionals `f^i(w)`.
    pub fn f_values(&self, beams: &BeamformerSet) -> [f64; 3] {
        let mut f = self.upsilon;
        for (m, b) in self.bs.iter().enumerate() {
            let scale = self.symbols as f64 / b.sigma_theta2;
            for w in &beams.weights[m] {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += scale * quad_form(&b.a_tilde[i], w);
                }
            }
        }
        f
    }

    /// Typical magnitude of the beam-independent position information.
    pub fn typical_upsilon(&self) -> f64 {
        0.5 * (self.upsilon[0].abs() + self.upsilon[2].abs())
    }

    pub fn num_bs(&self) -> usize {
        self.bs.len()
    }
}

/// Build the quadratic representation at prediction `d_pred` with covariance `m_pred`.
pub fn coefficients(
    d_pred: &Vector4<f64>,
    m_pred: &Matrix4<f64>,
    config: &ScenarioConfig,
) -> Result<QuadraticCoefficients> {
    let prior = prior_fim(m_pred)?;
    let state = TargetState::from_vector(d_pred);
    let c2 = config.c * config.c;
    let mut bs = Vec::with_capacity(config.num_bs());
    let mut upsilon = [prior[(0, 0)], prior[(0, 1)], prior[(1, 1)]];
    let mut j_pv = Matrix2::new(prior[(0, 2)], prior[(0, 3)], prior[(1, 2)], prior[(1, 3)]);
    let mut j_vv = Matrix2::new(prior[(2, 2)], prior[(2, 3)], prior[(3, 2)], prior[(3, 3)]);
    for m in 0..config.num_bs() {
        let view = bs_view(&state, config, m)?;
        let noise = &config.meas_noise[m];
        let (lx, ly, psi) = (view.offset.x, view.offset.y, view.psi);
        let d2 = view.range * view.range;
        let f = config.carrier_freqs[m];
        let st = 1.0 / (noise.sigma_tau * noise.sigma_tau);
        let sm = 1.0 / (noise.sigma_mu * noise.sigma_mu);
        let tau_k = 4.0 * st / (c2 * d2);
        let dop_pp = 4.0 * f * f * sm * psi * psi / (c2 * d2.powi(3));
        let a_bar = [
            tau_k * lx * lx + dop_pp * ly * ly,
            tau_k * lx * ly - dop_pp * lx * ly,
            tau_k * ly * ly + dop_pp * lx * lx,
        ];
        let dop_pv = 4.0 * f * f * sm * psi / (c2 * d2 * d2);
        let bs_pv = Matrix2::new(lx * ly, ly * ly, -lx * lx, -lx * ly) * dop_pv;
        let dop_vv = 4.0 * f * f * sm / (c2 * d2);
        let bs_vv = Matrix2::new(lx * lx, lx * ly, lx * ly, ly * ly) * dop_vv;
        let [gx, gy] = angle_gradient(&view);
        let adot = steering_product_derivative(view.angle, config.n_tx, config.n_rx);
        let amp = view.reflect_coef * config.mf_gain;
        let ay = &adot * (amp * gx);
        let ax = &adot * (amp * gy);
        let a_tilde = [ay.adjoint() * &ay, ay.adjoint() * &ax, ax.adjoint() * &ax];
        for i in 0..3 {
            upsilon[i] += a_bar[i];
        }
        j_pv += bs_pv;
        j_vv += bs_vv;
        bs.push(BsCoefficients {
            a_tilde,
            a_bar,
            j_pv: bs_pv,
            j_vv: bs_vv,
            sigma_theta2: noise.sigma_theta2,
            geometry: [lx, ly, psi],
        });
    }
    Ok(QuadraticCoefficients {
        bs,
        prior,
        upsilon,
        j_pv,
        j_vv,
        subcarriers: config.subcarriers,
        symbols: config.symbols_per_block,
    })
}

/// Fisher information blocks for a particular beam set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimBlocks {
    pub j_pp: Matrix2<f64>,
    pub j_pv: Matrix2<f64>,
    pub j_vv: Matrix2<f64>,
    pub full: Matrix4<f64>,
}

impl FimBlocks {
    pub fn from_parts(j_pp: Matrix2<f64>, j_pv: Matrix2<f64>, j_vv: Matrix2<f64>) -> Self {
        let mut full = Matrix4::zeros();
        full.fixed_view_mut::<2, 2>(0, 0).copy_from(&j_pp);
        full.fixed_view_mut::<2, 2>(0, 2).copy_from(&j_pv);
        full.fixed_view_mut::<2, 2>(2, 0)
            .copy_from(&j_pv.transpose());
        full.fixed_view_mut::<2, 2>(2, 2).copy_from(&j_vv);
        Self {
            j_pp,
            j_pv,
            j_vv,
            full,
        }
    }
}

/// Assemble `J` for `beams` from the closed-form coefficients.
pub fn fim_blocks(coeffs: &QuadraticCoefficients, beams: &BeamformerSet) -> FimBlocks {
    let f = coeffs.f_values(beams);
    blocks_from_f(coeffs, f)
}

/// Assemble `J` with `J_pp = [[f1, f2], [f2, f3]]`.
pub fn blocks_from_f(coeffs: &QuadraticCoefficients, f: [f64; 3]) -> FimBlocks {
    let j_pp = Matrix2::new(f[0], f[1], f[1], f[2]);
    FimBlocks::from_parts(j_pp, coeffs.j_pv, coeffs.j_vv)
}

/// Schur complement `S = J_pp - J_pv J_vv^-1 J_pv^T`.
pub fn schur_complement(blocks: &FimBlocks) -> Result<Matrix2<f64>> {
    let vv_inv = blocks
        .j_vv
        .try_inverse()
        .ok_or(Error::Unidentifiable { min_eig: 0.0 })?;
    let s = blocks.j_pp - blocks.j_pv * vv_inv * blocks.j_pv.transpose();
    Ok((s + s.transpose()) * 0.5)
}

/// Position PC-CRLB `C = S^-1` and its trace (m^2).
///
/// The Schur complement must satisfy `lambda_min(S) > 1e-12 tr(S)`.
pub fn pc_crlb_position(blocks: &FimBlocks) -> Result<(Matrix2<f64>, f64)> {
    let s = schur_complement(blocks)?;
    let [lo, _] = sym2_eigenvalues(&s);
    if !(lo > 1e-12 * s.trace()) || !s.iter().all(|x| x.is_finite()) {
        return Err(Error::Unidentifiable { min_eig: lo });
    }
    let c = s
        .try_inverse()
        .ok_or(Error::Unidentifiable { min_eig: lo })?;
    let c = (c + c.transpose()) * 0.5;
    Ok((c, c.trace()))
}

/// Convenience: `tr(C)` for `beams`.
pub fn crlb_trace(coeffs: &QuadraticCoefficients, beams: &BeamformerSet) -> Result<f64> {
    pc_crlb_position(&fim_blocks(coeffs, beams)).map(|(_, t)| t)
}

/// Rank-one direction structure: every `At^i_m` equals a real scalar times the
/// common Gram matrix `A'^H A'` of that BS. Returns `(gram, [c1, c2, c3])`.
pub fn gram_structure(
    config: &ScenarioConfig,
    d_pred: &Vector4<f64>,
    m: usize,
) -> Result<(CMatrix, [f64; 3])> {
    let view = bs_view(&TargetState::from_vector(d_pred), config, m)?;
    let adot = steering_product_derivative(view.angle, config.n_tx, config.n_rx);
    let gram = adot.adjoint() * &adot;
    let [gx, gy] = angle_gradient(&view);
    let amp2 = (view.reflect_coef * config.mf_gain).norm_sqr();
    Ok((gram, [amp2 * gx * gx, amp2 * gx * gy, amp2 * gy * gy]))
}

/// Hermitian check helper used by tests: `max |A - A^H|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint())
        .iter()
        .map(|z: &C64| z.norm())
        .fold(0.0, f64::max)
}
