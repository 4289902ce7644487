//! Extended Kalman filter over the fused multi-BS measurements.
//!
//! Each BS contributes a delay, a Doppler and the matched-filter samples `y~`.
//! The update is computed in information form: every BS adds the 4x4 term
//! `Re(G^H Q^-1 G)` and the 4-vector `Re(G^H Q^-1 r~)`, so only 4x4 systems are
//! solved no matter how many samples a frame holds. Complex rows are paired with
//! their real parts, i.e. the real and imaginary parts of each `y~` sample are
//! treated as two measurements of variance `sigma_theta^2`.
//!
//! The carrier phase of the reflection coefficient varies by thousands of radians
//! per meter of range error, so the filter does not predict it. Before forming the
//! `y~` residual, one complex gain per BS is fitted by least squares at the
//! predicted angle, and the Jacobian uses that gain in place of `alpha_m`.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::MeasurementBundle;
use crate::linalg::{symmetrize4, CMatrix, CVector, C64};
use crate::scenario::{MotionModel, ScenarioConfig, TargetState};
use crate::waveform::{bs_view, mf_signature, steer, steer_derivative, BeamformerSet, BsView};

/// Filtered (or predicted) state estimate with its error covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub estimate: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl TrackState {
    pub fn state(&self) -> TargetState {
        TargetState::from_vector(&self.estimate)
    }
}

/// Time update: `d = F d`, `M = F M F^T + Q_u`.
pub fn predict(track: &TrackState, model: &MotionModel) -> TrackState {
    let f = &model.transition;
    TrackState {
        estimate: f * track.estimate,
        covariance: symmetrize4(&(f * track.covariance * f.transpose() + model.process_cov)),
    }
}

/// Beam-training proxy: the true state perturbed by Gaussian errors with the
/// configured standard deviations, and a matching diagonal covariance.
pub fn initialize<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    truth: &TargetState,
    rng: &mut R,
) -> TrackState {
    let sd = [
        config.init_std.position,
        config.init_std.position,
        config.init_std.velocity,
        config.init_std.velocity,
    ];
    let mut estimate = truth.to_vector();
    for (x, &s) in estimate.iter_mut().zip(&sd) {
        if s > 0.0 {
            *x += Normal::new(0.0, s).expect("finite std").sample(rng);
        }
    }
    TrackState {
        estimate,
        covariance: Matrix4::from_diagonal(&Vector4::from(sd.map(|s| s * s))),
    }
}

/// Partial derivatives of `theta = arccos(l_x / d)` with respect to `(p_x, p_y)`.
///
/// `d theta / d p_x = -|l_y| / d^2` and `d theta / d p_y = l_x sgn(l_y) / d^2`,
/// taking `sgn(0) = 1`.
pub fn angle_gradient(view: &BsView) -> [f64; 2] {
    let (lx, ly) = (view.offset.x, view.offset.y);
    let d2 = view.range * view.range;
    let sgn = if ly < 0.0 { -1.0 } else { 1.0 };
    [-ly.abs() / d2, lx * sgn / d2]
}

/// `A'(theta) = a_r' a_t^H + a_r a_t'^H`.
pub fn steering_product_derivative(theta: f64, n_tx: usize, n_rx: usize) -> CMatrix {
    let (a_t, a_r) = (steer(theta, n_tx), steer(theta, n_rx));
    let (d_t, d_r) = (steer_derivative(theta, n_tx), steer_derivative(theta, n_rx));
    &d_r * a_t.adjoint() + &a_r * d_t.adjoint()
}

/// Measurement Jacobian of one BS. Rows are `d tau`, `d mu` and the derivatives
/// of every matched-filter sample. The sample derivatives do not depend on the
/// symbol index, so they are stored once per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlock {
    pub bs: usize,
    pub d_tau: Vector4<f64>,
    pub d_mu: Vector4<f64>,
    /// `d o_k / d p_x` for each subcarrier (length `N_r` each).
    pub d_o_px: Vec<CVector>,
    /// `d o_k / d p_y` for each subcarrier.
    pub d_o_py: Vec<CVector>,
    pub symbols: usize,
}

impl JacobianBlock {
    /// Dense `(2 + L K N_r) x 4` complex matrix with the sample rows ordered
    /// `k`-major, then `l`, antenna innermost.
    pub fn dense(&self) -> CMatrix {
        let nr = self.d_o_px.first().map_or(0, |v| v.len());
        let rows = 2 + self.d_o_px.len() * self.symbols * nr;
        let mut g = CMatrix::zeros(rows, 4);
        for j in 0..4 {
            g[(0, j)] = C64::from(self.d_tau[j]);
            g[(1, j)] = C64::from(self.d_mu[j]);
        }
        let mut r = 2;
        for (px, py) in self.d_o_px.iter().zip(&self.d_o_py) {
            for _ in 0..self.symbols {
                for i in 0..nr {
                    g[(r, 0)] = px[i];
                    g[(r, 1)] = py[i];
                    r += 1;
                }
            }
        }
        g
    }
}

/// Jacobian of BS `m` at state `d` for the given beams, with `gain` standing in
/// for the reflection coefficient in the sample rows.
pub fn jacobian_bs(
    d: &Vector4<f64>,
    config: &ScenarioConfig,
    beams_m: &[CVector],
    m: usize,
    gain: C64,
) -> Result<JacobianBlock> {
    let state = TargetState::from_vector(d);
    let view = bs_view(&state, config, m)?;
    let (lx, ly) = (view.offset.x, view.offset.y);
    let dist = view.range;
    let c = config.c;
    let f = config.carrier_freqs[m];
    let d_tau = Vector4::new(2.0 * lx / (c * dist), 2.0 * ly / (c * dist), 0.0, 0.0);
    let k_mu = 2.0 * f / (c * dist.powi(3));
    let d_mu = Vector4::new(
        k_mu * ly * view.psi,
        -k_mu * lx * view.psi,
        2.0 * f * lx / (c * dist),
        2.0 * f * ly / (c * dist),
    );
    let [gx, gy] = angle_gradient(&view);
    let adot = steering_product_derivative(view.angle, config.n_tx, config.n_rx);
    let scale = gain * config.mf_gain;
    let mut d_o_px = Vec::with_capacity(beams_m.len());
    let mut d_o_py = Vec::with_capacity(beams_m.len());
    for w in beams_m {
        let v = &adot * w * scale;
        d_o_px.push(&v * C64::from(gx));
        d_o_py.push(&v * C64::from(gy));
    }
    Ok(JacobianBlock {
        bs: m,
        d_tau,
        d_mu,
        d_o_px,
        d_o_py,
        symbols: config.symbols_per_block,
    })
}

/// Jacobians of every BS at `d`, using the modeled reflection coefficients.
pub fn jacobian(
    d: &Vector4<f64>,
    config: &ScenarioConfig,
    beams: &BeamformerSet,
) -> Result<Vec<JacobianBlock>> {
    let state = TargetState::from_vector(d);
    (0..config.num_bs())
        .map(|m| {
            let alpha = bs_view(&state, config, m)?.reflect_coef;
            jacobian_bs(d, config, &beams.weights[m], m, alpha)
        })
        .collect()
}

/// A BS's measurement linearized around the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized {
    pub jac: JacobianBlock,
    pub tau_residual: f64,
    pub mu_residual: f64,
    /// `y~ - o(d_pred)` in the same order as the bundle samples; empty when the
    /// BS transmitted nothing.
    pub y_residual: Vec<C64>,
    pub noise_var: [f64; 3],
}

/// Fold `value` into the branch `reference + [-period/2, period/2)`.
pub fn unwrap_to(reference: f64, value: f64, period: f64) -> f64 {
    reference + (value - reference + 0.5 * period).rem_euclid(period) - 0.5 * period
}

/// Linearize one bundle around the predicted state.
pub fn linearize(
    pred: &TrackState,
    bundle: &MeasurementBundle,
    config: &ScenarioConfig,
    beams: &BeamformerSet,
) -> Result<Linearized> {
    let m = bundle.bs;
    let view = bs_view(&pred.state(), config, m)?;
    let tau = unwrap_to(view.tau, bundle.tau_hat, 1.0 / config.delta_f);
    let mu = unwrap_to(view.doppler, bundle.mu_hat, 1.0 / config.t_sym());
    let unit = mf_signature(config, view.angle, C64::new(1.0, 0.0), &beams.weights[m]);
    let ll = config.symbols_per_block;
    let nr = config.n_rx;
    let energy: f64 = unit.iter().map(|v| v.norm_squared()).sum::<f64>() * ll as f64;
    let mut y_residual = Vec::new();
    let mut gain = C64::new(0.0, 0.0);
    if energy > 0.0 && !bundle.y_tilde.is_empty() {
        let mut corr = C64::new(0.0, 0.0);
        for (k, s) in unit.iter().enumerate() {
            for l in 0..ll {
                let base = (k * ll + l) * nr;
                for i in 0..nr {
                    corr += s[i].conj() * bundle.y_tilde[base + i];
                }
            }
        }
        gain = corr / energy;
        y_residual.reserve(bundle.y_tilde.len());
        for (k, s) in unit.iter().enumerate() {
            for l in 0..ll {
                let base = (k * ll + l) * nr;
                for i in 0..nr {
                    y_residual.push(bundle.y_tilde[base + i] - gain * s[i]);
                }
            }
        }
    }
    let jac = jacobian_bs(&pred.estimate, config, &beams.weights[m], m, gain)?;
    Ok(Linearized {
        jac,
        tau_residual: tau - view.tau,
        mu_residual: mu - view.doppler,
        y_residual,
        noise_var: bundle.noise_var,
    })
}

/// Information matrix `Re(G^H Q^-1 G)` and vector `Re(G^H Q^-1 r~)` of one BS.
pub fn information_terms(lin: &Linearized) -> (Matrix4<f64>, Vector4<f64>) {
    let [vt, vm, vy] = lin.noise_var;
    let j = &lin.jac;
    let mut info = j.d_tau * j.d_tau.transpose() / vt + j.d_mu * j.d_mu.transpose() / vm;
    let mut vec = j.d_tau * (lin.tau_residual / vt) + j.d_mu * (lin.mu_residual / vm);
    if !lin.y_residual.is_empty() {
        let nr = j.d_o_px.first().map_or(0, |v| v.len());
        let ll = j.symbols as f64;
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        let (mut rx, mut ry) = (0.0, 0.0);
        for (k, (px, py)) in j.d_o_px.iter().zip(&j.d_o_py).enumerate() {
            xx += px.norm_squared() * ll;
            yy += py.norm_squared() * ll;
            xy += px.dotc(py).re * ll;
            for l in 0..j.symbols {
                let base = (k * j.symbols + l) * nr;
                for i in 0..nr {
                    let r = lin.y_residual[base + i];
                    rx += (px[i].conj() * r).re;
                    ry += (py[i].conj() * r).re;
                }
            }
        }
        info[(0, 0)] += xx / vy;
        info[(0, 1)] += xy / vy;
        info[(1, 0)] += xy / vy;
        info[(1, 1)] += yy / vy;
        vec[0] += rx / vy;
        vec[1] += ry / vy;
    }
    (info, vec)
}

/// Measurement update in information form.
///
/// With `I = sum_m Re(G_m^H Q_m^-1 G_m)` and `b = sum_m Re(G_m^H Q_m^-1 r~_m)`,
/// the posterior is `M_n = (M_pred^-1 + I)^-1`, evaluated as
/// `(I_4 + M_pred I)^-1 M_pred` so that singular priors are allowed, and
/// `d_n = d_pred + M_n b`.
pub fn information_update(pred: &TrackState, lins: &[Linearized]) -> Result<TrackState> {
    let mut info = Matrix4::zeros();
    let mut vec = Vector4::zeros();
    for lin in lins {
        let (i, v) = information_terms(lin);
        info += i;
        vec += v;
    }
    let m = &pred.covariance;
    let lhs = Matrix4::identity() + m * info;
    let lu = lhs.lu();
    let post = lu.solve(m).ok_or(Error::DegenerateInformation)?;
    if !post.iter().all(|x| x.is_finite()) {
        return Err(Error::DegenerateInformation);
    }
    let post = symmetrize4(&post);
    Ok(TrackState {
        estimate: pred.estimate + post * vec,
        covariance: post,
    })
}

/// Measurement update from measurement bundles (one per observing BS).
pub fn update(
    pred: &TrackState,
    bundles: &[MeasurementBundle],
    config: &ScenarioConfig,
    beams: &BeamformerSet,
) -> Result<TrackState> {
    let lins = bundles
        .iter()
        .map(|b| linearize(pred, b, config, beams))
        .collect::<Result<Vec<_>>>()?;
    information_update(pred, &lins)
}

/// Reference gain-form update on the explicitly stacked real measurement vector:
/// `K = M G^T (G M G^T + R)^-1`, `d = d + K r~`, `M = (I - K G) M`.
///
/// Every complex sample becomes two real rows. The stacked dimension is
/// `sum_m (2 + 2 L K N_r)`, so this is only practical for small frames and
/// serves as an oracle for [`information_update`].
pub fn gain_form_update(pred: &TrackState, lins: &[Linearized]) -> Result<TrackState> {
    let mut rows: Vec<([f64; 4], f64, f64)> = Vec::new();
    for lin in lins {
        let g = lin.jac.dense();
        let [vt, vm, vy] = lin.noise_var;
        let row =
            |r: usize, f: fn(C64) -> f64| [f(g[(r, 0)]), f(g[(r, 1)]), f(g[(r, 2)]), f(g[(r, 3)])];
        rows.push((row(0, |z| z.re), lin.tau_residual, vt));
        rows.push((row(1, |z| z.re), lin.mu_residual, vm));
        for (r, res) in lin.y_residual.iter().enumerate() {
            rows.push((row(r + 2, |z| z.re), res.re, vy));
            rows.push((row(r + 2, |z| z.im), res.im, vy));
        }
    }
    let n = rows.len();
    let g = nalgebra::DMatrix::from_fn(n, 4, |r, c| rows[r].0[c]);
    let z = nalgebra::DVector::from_fn(n, |r, _| rows[r].1);
    let noise = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |r, _| rows[r].2));
    let m = nalgebra::DMatrix::from_fn(4, 4, |r, c| pred.covariance[(r, c)]);
    let s = &g * &m * g.transpose() + noise;
    let s_inv = s.try_inverse().ok_or(Error::DegenerateInformation)?;
    let k = &m * g.transpose() * s_inv;
    let dx = &k * z;
    let post = (nalgebra::DMatrix::identity(4, 4) - &k * &g) * &m;
    let post = Matrix4::from_fn(|r, c| post[(r, c)]);
    Ok(TrackState {
        estimate: pred.estimate + Vector4::from_fn(|r, _| dx[r]),
        covariance: symmetrize4(&post),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::simulate_measurement;
    use crate::scenario::{rng_for, MeasNoise, Stream};
    use crate::waveform::snapshot;

    fn beams_toward(cfg: &ScenarioConfig, state: &TargetState) -> BeamformerSet {
        let snap = snapshot(state, cfg).unwrap();
        let dirs: Vec<CVector> = snap
            .bs
            .iter()
            .map(|v| steer(v.angle + 0.1, cfg.n_tx))
            .collect();
        BeamformerSet::uniform(&dirs, &cfg.power_budget, cfg.subcarriers)
    }

    #[test]
    fn predict_examples() {
        let mut cfg = ScenarioConfig::paper();
        cfg.process_noise = [0.0; 4];
        let t = TrackState {
            estimate: Vector4::new(40.0, 0.0, 20.0, 0.0),
            covariance: Matrix4::zeros(),
        };
        let p = predict(&t, &cfg.motion_model());
        assert_eq!(p.estimate, Vector4::new(40.4, 0.0, 20.0, 0.0));
        let cfg = ScenarioConfig::paper();
        let p = predict(&t, &cfg.motion_model());
        assert_eq!(p.covariance, cfg.motion_model().process_cov);
    }

    #[test]
    fn angle_gradient_matches_finite_differences() {
        let cfg = ScenarioConfig::paper();
        for (px, py) in [(30.0, 12.0), (-20.0, -70.0), (60.0, -3.0), (-45.0, 5.0)] {
            let s = TargetState::new(px, py, 1.0, 1.0);
            for m in 0..3 {
                let v = bs_view(&s, &cfg, m).unwrap();
                let g = angle_gradient(&v);
                let h = 1e-4;
                let th = |dx: f64, dy: f64| {
                    bs_view(&TargetState::new(px + dx, py + dy, 1.0, 1.0), &cfg, m)
                        .unwrap()
                        .angle
                };
                let fx = (th(h, 0.0) - th(-h, 0.0)) / (2.0 * h);
                let fy = (th(0.0, h) - th(0.0, -h)) / (2.0 * h);
                assert!(
                    (g[0] - fx).abs() < 1e-7 * fx.abs().max(1e-3),
                    "m {m} ({px},{py})"
                );
                assert!(
                    (g[1] - fy).abs() < 1e-7 * fy.abs().max(1e-3),
                    "m {m} ({px},{py})"
                );
            }
        }
    }

    #[test]
    fn jacobian_special_cases() {
        let cfg = ScenarioConfig::desk();
        let d = Vector4::new(20.0, 15.0, 0.0, 0.0);
        let beams = beams_toward(&cfg, &TargetState::from_vector(&d));
        for b in jacobian(&d, &cfg, &beams).unwrap() {
            assert_eq!(b.d_mu[0], 0.0);
            assert_eq!(b.d_mu[1], 0.0);
            assert_eq!(b.d_tau[2], 0.0);
            assert_eq!(b.d_tau[3], 0.0);
        }
        let zero = BeamformerSet::zeros(3, cfg.subcarriers, cfg.n_tx);
        for b in jacobian(&d, &cfg, &zero).unwrap() {
            assert!(b.d_o_px.iter().chain(&b.d_o_py).all(|v| v.norm() == 0.0));
        }
    }

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::desk();
        cfg.subcarriers = 2;
        cfg.symbols_per_block = 2;
        cfg.n_rx = 2;
        cfg.delta_f = 120e6;
        cfg
    }

    #[test]
    fn information_form_matches_gain_form() {
        let cfg = small_config();
        let truth = TargetState::new(25.0, 8.0, -14.0, 3.0);
        let pred = TrackState {
            estimate: truth.to_vector() + Vector4::new(0.2, -0.15, 0.3, -0.2),
            covariance: Matrix4::from_diagonal(&Vector4::new(0.04, 0.05, 0.2, 0.3)),
        };
        let beams = beams_toward(&cfg, &truth);
        let snap = snapshot(&truth, &cfg).unwrap();
        let lins: Vec<_> = (0..3)
            .map(|m| {
                let mut rng = rng_for(3, Stream::Measurement { bs: m, tts: 0 });
                let b = simulate_measurement(&cfg, &snap, &beams.weights[m], m, &mut rng);
                linearize(&pred, &b, &cfg, &beams).unwrap()
            })
            .collect();
        let a = information_update(&pred, &lins).unwrap();
        let b = gain_form_update(&pred, &lins).unwrap();
        assert!((a.estimate - b.estimate).norm() <= 1e-8 * b.estimate.norm());
        assert!((a.covariance - b.covariance).norm() <= 1e-8 * b.covariance.norm());
    }

    #[test]
    fn uninformative_measurements_leave_prediction() {
        let cfg = small_config();
        let truth = TargetState::new(25.0, 8.0, -14.0, 3.0);
        let pred = TrackState {
            estimate: truth.to_vector() + Vector4::new(0.2, -0.1, 0.0, 0.1),
            covariance: Matrix4::from_diagonal(&Vector4::new(0.04, 0.05, 0.2, 0.3)),
        };
        let beams = beams_toward(&cfg, &truth);
        let snap = snapshot(&truth, &cfg).unwrap();
        let mut b = simulate_measurement(
            &cfg,
            &snap,
            &beams.weights[0],
            0,
            &mut rng_for(0, Stream::Init),
        );
        b.noise_var = [1e300; 3];
        let post = update(&pred, &[b], &cfg, &beams).unwrap();
        assert!((post.estimate - pred.estimate).norm() < 1e-12);
        assert!((post.covariance - pred.covariance).norm() < 1e-12);
    }

    #[test]
    fn repeated_noiseless_updates_contract_on_static_target() {
        let mut cfg = ScenarioConfig::desk();
        for n in &mut cfg.meas_noise {
            *n = MeasNoise {
                sigma_tau: 0.0,
                sigma_mu: 0.0,
                sigma_theta2: 0.0,
            };
        }
        let model_noise = ScenarioConfig::desk().meas_noise;
        let truth = TargetState::new(20.0, 10.0, 0.0, 0.0);
        let snap = snapshot(&truth, &cfg).unwrap();
        let beams = beams_toward(&cfg, &truth);
        let mut track = TrackState {
            estimate: truth.to_vector() + Vector4::new(0.3, -0.25, 0.2, 0.1),
            covariance: Matrix4::from_diagonal(&Vector4::new(0.25, 0.25, 0.25, 0.25)),
        };
        let mut prev = (track.estimate - truth.to_vector()).norm();
        for step in 0..5 {
            let bundles: Vec<_> = (0..3)
                .map(|m| {
                    let mut b = simulate_measurement(
                        &cfg,
                        &snap,
                        &beams.weights[m],
                        m,
                        &mut rng_for(0, Stream::Init),
                    );
                    b.noise_var = MeasurementBundle::noise_from(&model_noise[m]);
                    b
                })
                .collect();
            track = update(&track, &bundles, &cfg, &beams).unwrap();
            let err = (track.estimate - truth.to_vector()).norm();
            assert!(err < prev, "step {step}: {err} >= {prev}");
            prev = err;
        }
    }

    #[test]
    fn more_bs_never_increase_trace() {
        let cfg = ScenarioConfig::desk();
        let truth = TargetState::new(15.0, 5.0, -20.0, 1.0);
        let pred = TrackState {
            estimate: truth.to_vector() + Vector4::new(0.1, 0.1, -0.1, 0.2),
            covariance: Matrix4::from_diagonal(&Vector4::new(0.1, 0.1, 0.5, 0.5)),
        };
        let beams = beams_toward(&cfg, &truth);
        let snap = snapshot(&truth, &cfg).unwrap();
        let bundles: Vec<_> = (0..3)
            .map(|m| {
                simulate_measurement(
                    &cfg,
                    &snap,
                    &beams.weights[m],
                    m,
                    &mut rng_for(1, Stream::Measurement { bs: m, tts: 0 }),
                )
            })
            .collect();
        let one = update(&pred, &bundles[2..], &cfg, &beams).unwrap();
        let all = update(&pred, &bundles, &cfg, &beams).unwrap();
        assert!(all.covariance.trace() <= one.covariance.trace());
    }

    #[test]
    fn initialize_contract() {
        let mut cfg = ScenarioConfig::desk();
        let truth = cfg.initial_state;
        let a = initialize(&cfg, &truth, &mut rng_for(5, Stream::Init));
        let b = initialize(&cfg, &truth, &mut rng_for(5, Stream::Init));
        assert_eq!(a, b);
        assert_eq!(a.covariance[(0, 0)], 0.25);
        assert_eq!(a.covariance[(3, 3)], 0.25);
        cfg.init_std.position = 0.0;
        cfg.init_std.velocity = 0.0;
        let z = initialize(&cfg, &truth, &mut rng_for(5, Stream::Init));
        assert_eq!(z.estimate, truth.to_vector());
    }

    #[test]
    fn unwrap_branch() {
        assert!((unwrap_to(10.0, 1.0, 4.0) - 9.0).abs() < 1e-12);
        assert!((unwrap_to(10.0, 3.5, 4.0) - 11.5).abs() < 1e-12);
    }
}
