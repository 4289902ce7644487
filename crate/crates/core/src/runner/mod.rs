//! Two-stage predictive beam tracking loop, benchmark schemes, sweeps, CDFs and export.
//!
//! Per TTS `n` the loop runs stage I (sense the target under the beams designed
//! at TTS `n - 1`, fuse the measurements, update, predict) and stage II (design
//! the beams for TTS `n + 1` at the prediction `d_{n+1|n}`). The beams for TTS 0
//! are designed at the initializer's estimate, which stands in for beam training.
//!
//! Every random draw comes from a `(seed, purpose, BS, TTS)` stream, so two
//! schemes run on the same seed see the same trajectory and noise samples.

mod bench;
mod compare;
mod export;
mod sweep;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beamformer::{
    build_problem, nonopt_beams, solve_penalty, solve_sdr, ClarabelSolver, DesignStatus,
    SolveDiagnostics,
};
use crate::error::{Error, Result};
use crate::estimator::{process_frame, simulate_measurement, MeasurementBundle};
use crate::fim::{coefficients, crlb_trace};
use crate::linalg::symmetrize4;
use crate::scenario::{rng_for, MeasurementMode, ScenarioConfig, Stream, TargetState};
use crate::tracker::{angle_gradient, initialize, predict, unwrap_to, update, TrackState};
use crate::waveform::{
    bs_view, snapshot, subcarrier_rates, synthesize_echo, BeamDigest, BeamformerSet, SymbolGrid,
};

pub use bench::{random_instance, run_bench, BenchInstance, BenchRow};
pub use compare::{compare_schemes, Cdf, CdfTable, Metric, SchemeComparison, Variant};
pub use export::{
    export_bench, export_cdfs, export_log, export_sweep, read_json_envelope, ExportFormat,
    BENCH_CSV_HEADER, CDF_CSV_HEADER, SCHEMA_VERSION, SWEEP_CSV_HEADER, TRACKING_CSV_HEADER,
};
pub use sweep::{apply_axis, run_sweep, SweepAxis, SweepRow, SweepTable};

/// Beam design scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// Rate maximization under the PC-CRLB bound, solved by SDR.
    Sdr,
    /// The same problem solved by the penalty/SCA algorithm.
    Penalty,
    /// Echo-based EKF with beams steered at the predicted angles.
    NonoptEkf,
    /// Angle feedback from the vehicle, angle-only EKF, beams at predicted angles.
    FeedbackEkf,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [Self::Sdr, Self::Penalty, Self::NonoptEkf, Self::FeedbackEkf];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sdr => "sdr",
            Self::Penalty => "penalty",
            Self::NonoptEkf => "nonopt_ekf",
            Self::FeedbackEkf => "feedback_ekf",
        }
    }

    /// Parse `sdr`, `penalty`, `nonopt_ekf`/`nonopt-ekf` or `feedback_ekf`/`feedback-ekf`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|id| id.name() == s)
    }
}

/// Problems recorded for one TTS. A record with any of these set is "flagged".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    /// The bound was infeasible at the prediction; non-optimized beams were used.
    pub infeasible_fallback: bool,
    /// Penalty iterations stopped at `max_outer` with `kappa >= kappa_tol`.
    pub non_converged: bool,
    /// Beam design failed for another reason; non-optimized beams were used.
    pub design_error: Option<String>,
    /// Per-BS measurement failures (that BS was left out of the update).
    pub measurement_errors: Vec<String>,
    /// The EKF update failed; the prediction was kept as the estimate.
    pub update_error: Option<String>,
}

impl Flags {
    pub fn any(&self) -> bool {
        self.infeasible_fallback
            || self.non_converged
            || self.design_error.is_some()
            || !self.measurement_errors.is_empty()
            || self.update_error.is_some()
    }
}

/// Local estimates of one BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub bs: usize,
    pub tau_hat: Option<f64>,
    pub mu_hat: Option<f64>,
    pub theta_hat: Option<f64>,
}

/// Wall-clock timings of one TTS (not serialized, so logs stay deterministic).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub sensing: Duration,
    pub design: Duration,
}

/// Everything logged for one TTS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsRecord {
    pub n: usize,
    pub truth: TargetState,
    /// `d_{n|n-1}`: the prediction the beams of this TTS were designed from.
    pub predicted: TargetState,
    /// TTS whose stage II designed this TTS's beams (`None` for the initializer).
    pub designed_at: Option<usize>,
    /// `d_n` after the measurement update.
    pub estimate: TargetState,
    pub local: Vec<LocalEstimate>,
    /// Serving-BS sum rate on the true channel (bits/s/Hz).
    pub sum_rate: f64,
    pub subcarrier_rates: Vec<f64>,
    /// `tr(C)` of this TTS's beams at `(d_{n|n-1}, M_{n|n-1})`, recomputed by the
    /// Fisher information module.
    pub crlb_trace: Option<f64>,
    /// `|p_hat_n - p_n|` (m).
    pub position_error: f64,
    pub beams: BeamDigest,
    /// Solver report of the design that produced these beams.
    pub design: Option<SolveDiagnostics>,
    /// Feedback scheme only: true angle at TTS `n` minus the true angle of the
    /// state the fed-back observation was taken from, per BS.
    pub angle_lag: Option<Vec<f64>>,
    pub flags: Flags,
    #[serde(skip)]
    pub timings: Timings,
}

/// One tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingLog {
    pub scheme: SchemeId,
    pub seed: u64,
    pub records: Vec<TtsRecord>,
}

impl TrackingLog {
    pub fn flagged(&self) -> usize {
        self.records.iter().filter(|r| r.flags.any()).count()
    }

    pub fn position_rmse(&self) -> f64 {
        let n = self.records.len().max(1) as f64;
        (self
            .records
            .iter()
            .map(|r| r.position_error.powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }

    pub fn max_position_error(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.position_error)
            .fold(0.0, f64::max)
    }

    pub fn peak_rate(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.sum_rate)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn average_rate(&self) -> f64 {
        self.records.iter().map(|r| r.sum_rate).sum::<f64>() / self.records.len().max(1) as f64
    }

    /// Finite `tr(C)` values of all records.
    pub fn crlb_values(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.crlb_trace)
            .filter(|t| t.is_finite())
            .collect()
    }
}

/// True trajectory `d_n = F d_{n-1} + u_n`, `n = 0..num_tts`, starting at the
/// configured initial state.
pub fn truth_trajectory(config: &ScenarioConfig, seed: u64) -> Vec<TargetState> {
    let mm = config.motion_model();
    let mut rng = rng_for(seed, Stream::Truth);
    let mut d = config.initial_state.to_vector();
    let mut out = Vec::with_capacity(config.num_tts());
    for n in 0..config.num_tts() {
        if n > 0 {
            d = mm.transition * d;
            for (i, &s) in config.process_noise.iter().enumerate() {
                if s > 0.0 {
                    d[i] += Normal::new(0.0, s).expect("finite std").sample(&mut rng);
                }
            }
        }
        out.push(TargetState::from_vector(&d));
    }
    out
}

/// Result of stage II.
struct Design {
    beams: BeamformerSet,
    diag: Option<SolveDiagnostics>,
    flags: Flags,
}

fn predicted_angles(config: &ScenarioConfig, pred: &TrackState) -> Result<Vec<f64>> {
    let state = pred.state();
    (0..config.num_bs())
        .map(|m| Ok(bs_view(&state, config, m)?.angle))
        .collect()
}

/// Non-optimized beams at the predicted angles, or broadside beams if the
/// prediction sits on a BS.
fn fallback_beams(config: &ScenarioConfig, pred: &TrackState) -> BeamformerSet {
    let angles = predicted_angles(config, pred)
        .unwrap_or_else(|_| vec![std::f64::consts::FRAC_PI_2; config.num_bs()]);
    nonopt_beams(&angles, config)
}

fn design_beams(
    config: &ScenarioConfig,
    scheme: SchemeId,
    pred: &TrackState,
    seed: u64,
    n: usize,
) -> Design {
    let mut flags = Flags::default();
    let optimized = match scheme {
        SchemeId::NonoptEkf | SchemeId::FeedbackEkf => {
            return match predicted_angles(config, pred) {
                Ok(angles) => Design {
                    beams: nonopt_beams(&angles, config),
                    diag: None,
                    flags,
                },
                Err(e) => {
                    flags.design_error = Some(e.to_string());
                    Design {
                        beams: fallback_beams(config, pred),
                        diag: None,
                        flags,
                    }
                }
            }
        }
        SchemeId::Sdr | SchemeId::Penalty => {
            build_problem(&pred.estimate, &pred.covariance, config).and_then(|mut p| {
                p.seed = rng_for(seed, Stream::Randomization { tts: n }).gen();
                let solver = ClarabelSolver::default();
                if scheme == SchemeId::Sdr {
                    solve_sdr(&p, &solver)
                } else {
                    // Warm start from the benchmark beams at the predicted angles.
                    solve_penalty(&p, &nonopt_beams(&p.angles, config), &solver)
                }
            })
        }
    };
    match optimized {
        Ok((beams, diag)) => {
            flags.non_converged = diag.status == DesignStatus::NonConverged;
            Design {
                beams,
                diag: Some(diag),
                flags,
            }
        }
        Err(Error::Infeasible { .. }) => {
            flags.infeasible_fallback = true;
            Design {
                beams: fallback_beams(config, pred),
                diag: None,
                flags,
            }
        }
        Err(e) => {
            flags.design_error = Some(e.to_string());
            Design {
                beams: fallback_beams(config, pred),
                diag: None,
                flags,
            }
        }
    }
}

/// Echo-based measurements of every BS at TTS `n`.
fn sense(
    config: &ScenarioConfig,
    truth: &TargetState,
    beams: &BeamformerSet,
    seed: u64,
    n: usize,
    flags: &mut Flags,
) -> Vec<MeasurementBundle> {
    let snap = match snapshot(truth, config) {
        Ok(s) => s,
        Err(e) => {
            flags.measurement_errors.push(e.to_string());
            return Vec::new();
        }
    };
    let mut out = Vec::with_capacity(config.num_bs());
    for m in 0..config.num_bs() {
        let mut rng = rng_for(seed, Stream::Measurement { bs: m, tts: n });
        match config.measurement_mode {
            MeasurementMode::Statistical => {
                out.push(simulate_measurement(
                    config,
                    &snap,
                    &beams.weights[m],
                    m,
                    &mut rng,
                ));
            }
            MeasurementMode::FullSignal => {
                let mut sym_rng = rng_for(seed, Stream::Symbols { bs: m, tts: n });
                let symbols =
                    SymbolGrid::qpsk(config.subcarriers, config.symbols_per_block, &mut sym_rng);
                let frame = synthesize_echo(config, &snap, beams, &symbols, m, &mut rng);
                match process_frame(&frame, config) {
                    Ok(b) => out.push(b),
                    Err(e) => flags.measurement_errors.push(format!("BS {m}: {e}")),
                }
            }
        }
    }
    out
}

/// `tr(C)` of `beams` at the prediction, or `None` when it cannot be evaluated.
fn achieved_crlb(config: &ScenarioConfig, pred: &TrackState, beams: &BeamformerSet) -> Option<f64> {
    coefficients(&pred.estimate, &pred.covariance, config)
        .and_then(|c| crlb_trace(&c, beams))
        .ok()
        .filter(|t| t.is_finite())
}

fn record(
    config: &ScenarioConfig,
    n: usize,
    truth: &TargetState,
    pred: &TrackState,
    estimate: &TrackState,
    design: &Design,
) -> TtsRecord {
    let rates = snapshot(truth, config)
        .map(|s| subcarrier_rates(config, &s, &design.beams))
        .unwrap_or_default();
    TtsRecord {
        n,
        truth: *truth,
        predicted: pred.state(),
        designed_at: n.checked_sub(1),
        estimate: estimate.state(),
        local: Vec::new(),
        sum_rate: rates.iter().sum(),
        subcarrier_rates: rates,
        crlb_trace: achieved_crlb(config, pred, &design.beams),
        position_error: (estimate.state().position - truth.position).norm(),
        beams: design.beams.digest(),
        design: design.diag.clone(),
        angle_lag: None,
        flags: design.flags.clone(),
        timings: Timings::default(),
    }
}

/// Run one tracking experiment. The feedback scheme is delegated to
/// [`run_feedback_scheme`].
pub fn run_tracking(config: &ScenarioConfig, scheme: SchemeId, seed: u64) -> Result<TrackingLog> {
    if scheme == SchemeId::FeedbackEkf {
        return run_feedback_scheme(config, seed);
    }
    let config = config.clone().validate()?;
    let truth = truth_trajectory(&config, seed);
    let mm = config.motion_model();
    let mut pred = initialize(&config, &truth[0], &mut rng_for(seed, Stream::Init));
    let start = Instant::now();
    let mut design = design_beams(&config, scheme, &pred, seed, 0);
    let mut design_time = start.elapsed();
    let mut records = Vec::with_capacity(truth.len());
    for (n, x) in truth.iter().enumerate() {
        let t0 = Instant::now();
        let mut flags = Flags::default();
        let bundles = sense(&config, x, &design.beams, seed, n, &mut flags);
        let estimate = match update(&pred, &bundles, &config, &design.beams) {
            Ok(t) => t,
            Err(e) => {
                flags.update_error = Some(e.to_string());
                pred
            }
        };
        let sensing = t0.elapsed();
        let local = bundles
            .iter()
            .map(|b| LocalEstimate {
                bs: b.bs,
                tau_hat: Some(b.tau_hat),
                mu_hat: Some(b.mu_hat),
                theta_hat: b.theta_hat,
            })
            .collect();
        let mut rec = record(&config, n, x, &pred, &estimate, &design);
        rec.scheme_fields(local, None, flags, sensing);
        rec.timings.design = design_time;
        records.push(rec);

        pred = predict(&estimate, &mm);
        if n + 1 < truth.len() {
            let t1 = Instant::now();
            design = design_beams(&config, scheme, &pred, seed, n + 1);
            design_time = t1.elapsed();
        }
    }
    Ok(TrackingLog {
        scheme,
        seed,
        records,
    })
}

/// Gain-form EKF update with scalar angle observations `(bs, theta)` of variance `var`.
/// `var = 0` is allowed.
pub fn angle_update(
    config: &ScenarioConfig,
    pred: &TrackState,
    obs: &[(usize, f64)],
    var: f64,
) -> Result<TrackState> {
    if obs.is_empty() {
        return Ok(*pred);
    }
    let state = pred.state();
    let rows = obs.len();
    let mut h = DMatrix::<f64>::zeros(rows, 4);
    let mut innov = DVector::<f64>::zeros(rows);
    for (r, &(m, z)) in obs.iter().enumerate() {
        let view = bs_view(&state, config, m)?;
        let [gx, gy] = angle_gradient(&view);
        h[(r, 0)] = gx;
        h[(r, 1)] = gy;
        innov[r] = unwrap_to(view.angle, z, 2.0 * std::f64::consts::PI) - view.angle;
    }
    let m = DMatrix::from_iterator(4, 4, pred.covariance.iter().copied());
    let s = &h * &m * h.transpose() + DMatrix::identity(rows, rows) * var;
    // Exact observations of more angles than position coordinates make `s` singular;
    // the pseudo-inverse then gives the exact least-squares fit.
    let tol = 1e-12 * s.norm();
    let s_inv = s
        .pseudo_inverse(tol)
        .map_err(|e| Error::SingularCovariance(format!("angle innovation covariance: {e}")))?;
    let k = &m * h.transpose() * s_inv;
    let dx = &k * innov;
    let i_kh = DMatrix::identity(4, 4) - &k * &h;
    // Joseph form keeps the covariance symmetric PSD.
    let post = &i_kh * &m * i_kh.transpose() + &k * k.transpose() * var;
    let post = Matrix4::from_iterator(post.iter().copied());
    Ok(TrackState {
        estimate: pred.estimate + Vector4::from_iterator(dx.iter().copied()),
        covariance: symmetrize4(&post),
    })
}

/// Angle-feedback benchmark: the vehicle reports `theta_m + N(0, sigma_fb^2)` for
/// every BS, received `delay_tts` TTSs late; an angle-only EKF tracks the target
/// and every BS steers at its predicted angle. No echo processing takes place.
/// A stale observation is used as a measurement of the current state.
pub fn run_feedback_scheme(config: &ScenarioConfig, seed: u64) -> Result<TrackingLog> {
    let config = config.clone().validate()?;
    let truth = truth_trajectory(&config, seed);
    let mm = config.motion_model();
    let sd = config.feedback.angle_std;
    let delay = config.feedback.delay_tts;
    let mut pred = initialize(&config, &truth[0], &mut rng_for(seed, Stream::Init));
    let mut design = design_beams(&config, SchemeId::FeedbackEkf, &pred, seed, 0);
    let mut records = Vec::with_capacity(truth.len());
    for (n, x) in truth.iter().enumerate() {
        let t0 = Instant::now();
        let mut flags = Flags::default();
        let mut local = Vec::new();
        let mut lag = None;
        let mut obs = Vec::new();
        if let Some(src) = n.checked_sub(delay) {
            let observed = &truth[src];
            let mut lags = Vec::with_capacity(config.num_bs());
            for m in 0..config.num_bs() {
                let now = bs_view(x, &config, m);
                let then = bs_view(observed, &config, m);
                match (now, then) {
                    (Ok(now), Ok(then)) => {
                        let mut rng = rng_for(seed, Stream::Feedback { bs: m, tts: src });
                        let noise = if sd > 0.0 {
                            Normal::new(0.0, sd).expect("finite std").sample(&mut rng)
                        } else {
                            0.0
                        };
                        let z = then.angle + noise;
                        obs.push((m, z));
                        lags.push(now.angle - then.angle);
                        local.push(LocalEstimate {
                            bs: m,
                            tau_hat: None,
                            mu_hat: None,
                            theta_hat: Some(z),
                        });
                    }
                    (Err(e), _) | (_, Err(e)) => flags.measurement_errors.push(e.to_string()),
                }
            }
            lag = Some(lags);
        }
        let estimate = match angle_update(&config, &pred, &obs, sd * sd) {
            Ok(t) => t,
            Err(e) => {
                flags.update_error = Some(e.to_string());
                pred
            }
        };
        let sensing = t0.elapsed();
        let mut rec = record(&config, n, x, &pred, &estimate, &design);
        rec.scheme_fields(local, lag, flags, sensing);
        records.push(rec);
        pred = predict(&estimate, &mm);
        if n + 1 < truth.len() {
            design = design_beams(&config, SchemeId::FeedbackEkf, &pred, seed, n + 1);
        }
    }
    Ok(TrackingLog {
        scheme: SchemeId::FeedbackEkf,
        seed,
        records,
    })
}

impl TtsRecord {
    fn scheme_fields(
        &mut self,
        local: Vec<LocalEstimate>,
        lag: Option<Vec<f64>>,
        flags: Flags,
        sensing: Duration,
    ) {
        self.local = local;
        self.angle_lag = lag;
        self.flags.measurement_errors = flags.measurement_errors;
        self.flags.update_error = flags.update_error;
        self.timings.sensing = sensing;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::CRLB_TOL;

    fn short(mut cfg: ScenarioConfig, tts: usize) -> ScenarioConfig {
        cfg.horizon = tts as f64 * cfg.tts_duration;
        cfg
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(SchemeId::parse(id.name()), Some(id));
        }
        assert_eq!(SchemeId::parse("nonopt-ekf"), Some(SchemeId::NonoptEkf));
        assert_eq!(SchemeId::parse("mp"), None);
    }

    #[test]
    fn truth_follows_motion_model_without_noise() {
        let mut cfg = short(ScenarioConfig::desk(), 10);
        cfg.process_noise = [0.0; 4];
        let tr = truth_trajectory(&cfg, 1);
        assert_eq!(tr.len(), 10);
        for (n, s) in tr.iter().enumerate() {
            let expect = cfg.initial_state.position
                + cfg.initial_state.velocity * (n as f64 * cfg.tts_duration);
            assert!((s.position - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn one_record_per_tts_and_deterministic() {
        let cfg = short(ScenarioConfig::desk(), 6);
        let a = run_tracking(&cfg, SchemeId::NonoptEkf, 11).unwrap();
        let b = run_tracking(&cfg, SchemeId::NonoptEkf, 11).unwrap();
        assert_eq!(a.records.len(), 6);
        assert_eq!(
            a.records.iter().map(|r| r.n).collect::<Vec<_>>(),
            (0..6).collect::<Vec<_>>()
        );
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.records[0].designed_at, None);
        assert_eq!(a.records[3].designed_at, Some(2));
    }

    #[test]
    fn noiseless_nonopt_error_decreases() {
        let mut cfg = short(ScenarioConfig::desk(), 10);
        cfg.measurement_mode = MeasurementMode::Statistical;
        cfg.process_noise = [0.0; 4];
        for n in &mut cfg.meas_noise {
            n.sigma_tau = 1e-12;
            n.sigma_mu = 1e-6;
            n.sigma_theta2 = 1e-30;
        }
        // Zero-variance draws still need a positive model variance in the filter.
        let mut noiseless = cfg.clone();
        for n in &mut noiseless.meas_noise {
            n.sigma_tau = 0.0;
            n.sigma_mu = 0.0;
            n.sigma_theta2 = 0.0;
        }
        let log = run_tracking_with(&cfg, &noiseless, SchemeId::NonoptEkf, 5);
        let errs: Vec<f64> = log.records.iter().map(|r| r.position_error).collect();
        for pair in errs.windows(2) {
            assert!(pair[1] < pair[0], "{errs:?}");
        }
    }

    /// Tracking run whose measurements are drawn with `truth_cfg`'s noise while
    /// the filter uses `cfg`.
    fn run_tracking_with(
        cfg: &ScenarioConfig,
        truth_cfg: &ScenarioConfig,
        scheme: SchemeId,
        seed: u64,
    ) -> TrackingLog {
        let truth = truth_trajectory(cfg, seed);
        let mm = cfg.motion_model();
        let mut pred = initialize(cfg, &truth[0], &mut rng_for(seed, Stream::Init));
        let mut design = design_beams(cfg, scheme, &pred, seed, 0);
        let mut records = Vec::new();
        for (n, x) in truth.iter().enumerate() {
            let mut flags = Flags::default();
            let mut bundles = sense(truth_cfg, x, &design.beams, seed, n, &mut flags);
            for b in &mut bundles {
                b.noise_var = MeasurementBundle::noise_from(&cfg.meas_noise[b.bs]);
            }
            let est = update(&pred, &bundles, cfg, &design.beams).unwrap();
            records.push(record(cfg, n, x, &pred, &est, &design));
            pred = predict(&est, &mm);
            design = design_beams(cfg, scheme, &pred, seed, n + 1);
        }
        TrackingLog {
            scheme,
            seed,
            records,
        }
    }

    #[test]
    fn sdr_respects_bound_on_unflagged_tts() {
        let cfg = short(ScenarioConfig::desk(), 8);
        let log = run_tracking(&cfg, SchemeId::Sdr, 3).unwrap();
        for r in &log.records {
            if !r.flags.any() {
                let t = r.crlb_trace.unwrap();
                assert!(
                    t <= cfg.crlb_threshold * (1.0 + CRLB_TOL),
                    "TTS {}: {t}",
                    r.n
                );
            }
        }
    }

    #[test]
    fn angle_gradient_rows_match_finite_differences() {
        let cfg = ScenarioConfig::desk();
        let h = 1e-4;
        for (px, py) in [(30.0, 7.0), (-12.0, 20.0), (5.0, -20.0), (-30.0, -4.0)] {
            let s = TargetState::new(px, py, 0.0, 0.0);
            for m in 0..cfg.num_bs() {
                let g = angle_gradient(&bs_view(&s, &cfg, m).unwrap());
                for (j, (dx, dy)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
                    let plus = TargetState::new(px + dx, py + dy, 0.0, 0.0);
                    let minus = TargetState::new(px - dx, py - dy, 0.0, 0.0);
                    let fd = (bs_view(&plus, &cfg, m).unwrap().angle
                        - bs_view(&minus, &cfg, m).unwrap().angle)
                        / (2.0 * h);
                    assert!(
                        (fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-3),
                        "{fd} {}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn exact_feedback_aligns_beams() {
        let mut cfg = short(ScenarioConfig::desk(), 6);
        cfg.initial_state = TargetState::new(20.0, 15.0, -20.0, 2.0);
        cfg.process_noise = [0.0; 4];
        cfg.feedback.angle_std = 0.0;
        cfg.feedback.delay_tts = 0;
        cfg.init_std.velocity = 0.0;
        let log = run_feedback_scheme(&cfg, 2).unwrap();
        for r in log.records.iter().skip(1) {
            let snap = snapshot(&r.truth, &cfg).unwrap();
            let exact = nonopt_beams(&snap.bs.iter().map(|v| v.angle).collect::<Vec<_>>(), &cfg);
            let rates = subcarrier_rates(&cfg, &snap, &exact);
            for (a, b) in r.subcarrier_rates.iter().zip(&rates) {
                assert!((a - b).abs() <= 1e-9 * b, "TTS {}: {a} {b}", r.n);
            }
        }
    }

    #[test]
    fn feedback_lag_is_angular_motion() {
        let mut cfg = short(ScenarioConfig::desk(), 5);
        cfg.initial_state = TargetState::new(20.0, 15.0, -20.0, 2.0);
        let log = run_feedback_scheme(&cfg, 4).unwrap();
        assert!(log.records[0].angle_lag.is_none());
        for r in log.records.iter().skip(1) {
            let prev = &log.records[r.n - 1].truth;
            let lag = r.angle_lag.as_ref().unwrap();
            for m in 0..cfg.num_bs() {
                let d = bs_view(&r.truth, &cfg, m).unwrap().angle
                    - bs_view(prev, &cfg, m).unwrap().angle;
                assert!((lag[m] - d).abs() < 1e-15);
            }
        }
    }
}
