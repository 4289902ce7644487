//! Predictive beamforming for one TTS.
//!
//! The design problem maximizes the serving BS's sum rate
//! `sum_k log2(1 + |h_k^H w_{u,k}|^2 / sigma_c^2)` over the per-subcarrier weights of
//! every BS, subject to per-BS power budgets and the position PC-CRLB bound
//! `tr(C) <= eta` evaluated at the predicted state.
//!
//! Two solvers are provided: [`solve_sdr`] lifts each `w w^H` to a PSD matrix and
//! solves the relaxation as a mixed exponential/PSD cone program, and
//! [`solve_penalty`] runs the penalty/SCA alternation directly on the vectors.
//! [`nonopt_beams`] is the non-optimized benchmark.

pub mod conic;
mod penalty;
mod sdr;

use std::time::Duration;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{coefficients, crlb_trace, QuadraticCoefficients};
use crate::linalg::{hermitian_eig, outer, CMatrix, CVector};
use crate::scenario::{ScenarioConfig, TargetState};
use crate::waveform::{achievable_rate, comm_channel, snapshot, steer, BeamformerSet};

pub use conic::{ClarabelSolver, ConicProgram, ConicSolution, ConicSolver, LinExpr, SolveStatus};
pub use penalty::{
    penalty_objective, penalty_terms, sca_surrogates, solve_penalty, solve_penalty_traced,
    OuterRecord, PenaltyTrace, SurrogateModel,
};
pub use sdr::solve_sdr;

/// Relative slack allowed on the power budget by the feasibility check.
pub const POWER_TOL: f64 = 1e-8;
/// Relative slack allowed on `tr(C) <= eta` by the feasibility check.
pub const CRLB_TOL: f64 = 1e-6;

/// One instance of the rate-maximization problem at a predicted state.
#[derive(Debug, Clone)]
pub struct BeamProblem {
    /// Serving-link channel `h_{u,k}` per subcarrier.
    pub channels: Vec<CVector>,
    pub coeffs: QuadraticCoefficients,
    pub sigma_c2: f64,
    /// `sigma_theta^2` per BS.
    pub sigma_theta2: Vec<f64>,
    pub power: Vec<f64>,
    pub eta: f64,
    pub serving: usize,
    pub n_tx: usize,
    pub subcarriers: usize,
    /// Predicted transmit angle of every BS.
    pub angles: Vec<f64>,
    pub sdr: crate::scenario::SdrParams,
    pub penalty: crate::scenario::PenaltyParams,
    /// Seed of the Gaussian-randomization stream used in rank recovery.
    pub seed: u64,
}

impl BeamProblem {
    pub fn num_bs(&self) -> usize {
        self.power.len()
    }

    /// Rank-one rate matrix `H_{u,k} = h h^H`.
    pub fn rate_matrix(&self, k: usize) -> CMatrix {
        outer(&self.channels[k], &self.channels[k])
    }

    /// Serving BS sum rate of `beams` (bits/s/Hz).
    pub fn sum_rate(&self, beams: &BeamformerSet) -> f64 {
        self.subcarrier_rates(beams).iter().sum()
    }

    pub fn subcarrier_rates(&self, beams: &BeamformerSet) -> Vec<f64> {
        self.channels
            .iter()
            .zip(&beams.weights[self.serving])
            .map(|(h, w)| achievable_rate(h, w, self.sigma_c2))
            .collect()
    }

    /// `tr(C)` of `beams`, recomputed from the closed-form Fisher information.
    pub fn crlb_trace(&self, beams: &BeamformerSet) -> Result<f64> {
        crlb_trace(&self.coeffs, beams)
    }

    /// Independent feasibility check of a candidate beam set.
    pub fn check(&self, beams: &BeamformerSet) -> Feasibility {
        let power_ok = beams.within_budget(&self.power, POWER_TOL);
        let crlb = self.crlb_trace(beams).unwrap_or(f64::INFINITY);
        Feasibility {
            power_ok,
            crlb,
            crlb_ok: crlb <= self.eta * (1.0 + CRLB_TOL),
        }
    }

    /// Beams maximizing every BS's position information: full power along the
    /// principal eigenvector of its information Gram matrix on every subcarrier.
    ///
    /// Each BS adds a PSD rank-one term scaled by `sum_k w^H G_m w` to `J_pp`, so this
    /// set minimizes `tr(C)` over the power-feasible set.
    pub fn max_information_beams(&self) -> BeamformerSet {
        let k = self.subcarriers;
        let weights = (0..self.num_bs())
            .map(|m| {
                let g = self.coeffs.weight(m, 0) + self.coeffs.weight(m, 2);
                let (_, vecs) = hermitian_eig(&g);
                let v = vecs.column(0).into_owned();
                let w = v * crate::linalg::C64::from((self.power[m] / k as f64).sqrt());
                vec![w; k]
            })
            .collect();
        BeamformerSet { weights }
    }

    /// Typical magnitude of the achievable position information, used to scale
    /// the Fisher LMIs: half the trace of `J_pp` at the maximum-information beams.
    pub(crate) fn information_scale(&self) -> f64 {
        let f = self.coeffs.f_values(&self.max_information_beams());
        (0.5 * (f[0] + f[2])).max(f64::MIN_POSITIVE)
    }

    /// Whether the PC-CRLB bound can bind: false when the prior and the
    /// beam-independent terms alone already meet `eta`.
    pub fn crlb_constrained(&self) -> bool {
        let zero = BeamformerSet::zeros(self.num_bs(), self.subcarriers, self.n_tx);
        self.crlb_trace(&zero).map_or(true, |t| t > self.eta)
    }

    /// Fail with [`Error::Infeasible`] if no power-feasible beams meet `eta`.
    pub fn ensure_feasible(&self) -> Result<f64> {
        let best = self
            .crlb_trace(&self.max_information_beams())
            .unwrap_or(f64::INFINITY);
        if best <= self.eta {
            Ok(best)
        } else {
            Err(Error::Infeasible { eta: self.eta })
        }
    }

    /// Default penalty initialization: maximum-ratio beams on the serving BS,
    /// broadside beams elsewhere, uniform power.
    pub fn default_init(&self) -> BeamformerSet {
        let k = self.subcarriers;
        let weights = (0..self.num_bs())
            .map(|m| {
                let p = (self.power[m] / k as f64).sqrt();
                if m == self.serving {
                    self.channels
                        .iter()
                        .map(|h| h.normalize() * crate::linalg::C64::from(p))
                        .collect()
                } else {
                    vec![
                        steer(std::f64::consts::FRAC_PI_2, self.n_tx) * crate::linalg::C64::from(p);
                        k
                    ]
                }
            })
            .collect();
        BeamformerSet { weights }
    }

    /// Scale every BS with nonzero power up to exactly its budget. Both the rate and
    /// the Fisher information are nondecreasing under this scaling.
    pub fn fill_power(&self, beams: &BeamformerSet) -> BeamformerSet {
        let weights = beams
            .weights
            .iter()
            .zip(&self.power)
            .map(|(ws, &p)| {
                let used: f64 = ws.iter().map(|w| w.norm_squared()).sum();
                if used > 0.0 {
                    let s = crate::linalg::C64::from((p / used).sqrt());
                    ws.iter().map(|w| w * s).collect()
                } else {
                    ws.clone()
                }
            })
            .collect();
        BeamformerSet { weights }
    }
}

/// Result of [`BeamProblem::check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub power_ok: bool,
    pub crlb: f64,
    pub crlb_ok: bool,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.power_ok && self.crlb_ok
    }
}

/// Assemble the problem at the predicted state `d_pred` with covariance `m_pred`.
pub fn build_problem(
    d_pred: &Vector4<f64>,
    m_pred: &Matrix4<f64>,
    config: &ScenarioConfig,
) -> Result<BeamProblem> {
    let state = TargetState::from_vector(d_pred);
    let snap = snapshot(&state, config)?;
    let channels = (0..config.subcarriers)
        .map(|k| comm_channel(config, &snap, k))
        .collect();
    let coeffs = coefficients(d_pred, m_pred, config)?;
    Ok(BeamProblem {
        channels,
        coeffs,
        sigma_c2: config.comm_noise_power,
        sigma_theta2: config.meas_noise.iter().map(|n| n.sigma_theta2).collect(),
        power: config.power_budget.clone(),
        eta: config.crlb_threshold,
        serving: config.serving_bs,
        n_tx: config.n_tx,
        subcarriers: config.subcarriers,
        angles: snap.bs.iter().map(|v| v.angle).collect(),
        sdr: config.sdr,
        penalty: config.penalty,
        seed: config.rng_seed,
    })
}

/// Non-optimized benchmark: `w_{m,k} = sqrt(P_m / K) a_t(theta_m)` on every subcarrier.
pub fn nonopt_beams(angles: &[f64], config: &ScenarioConfig) -> BeamformerSet {
    let dirs: Vec<CVector> = angles.iter().map(|&t| steer(t, config.n_tx)).collect();
    BeamformerSet::uniform(&dirs, &config.power_budget, config.subcarriers)
}

/// Final status of a beam design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignStatus {
    /// Principal-eigenvector extraction (SDR) or converged iterations (penalty).
    Optimal,
    /// SDR beams recovered by Gaussian randomization.
    Randomized,
    /// Penalty iterations hit `max_outer` with `kappa >= kappa_tol`.
    NonConverged,
}

/// Per-solve report. `crlb_trace` and `sum_rate` are recomputed from the returned
/// beams, never read back from a solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub sum_rate: f64,
    pub crlb_trace: f64,
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub status: DesignStatus,
    /// Largest `lambda_2 / lambda_1` over the lifted blocks (SDR).
    pub rank_ratio: Option<f64>,
    /// Final termination indicator (penalty).
    pub kappa: Option<f64>,
    /// Optimal value of the relaxation before extraction (SDR).
    pub relaxation_rate: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveDiagnostics {
    pub(crate) fn measure(
        problem: &BeamProblem,
        beams: &BeamformerSet,
        status: DesignStatus,
    ) -> Self {
        Self {
            sum_rate: problem.sum_rate(beams),
            crlb_trace: problem.crlb_trace(beams).unwrap_or(f64::INFINITY),
            powers: beams.powers(),
            iterations: 0,
            status,
            rank_ratio: None,
            kappa: None,
            relaxation_rate: None,
            wall_time: Duration::ZERO,
        }
    }
}
