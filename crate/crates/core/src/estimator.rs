//! Local per-BS estimation from one echo frame.
//!
//! The full-signal chain is: spatial-DFT angle estimate, element-wise symbol
//! division, 2D-DFT delay/Doppler estimate, then matched filtering to obtain
//! the angle-bearing samples `y~`. The statistical shortcut draws the same
//! three measurements directly from their measurement equations.
//!
//! Wrap-around conventions: `tau_hat` lies in `[0, 1/df)` and `mu_hat` in
//! `[-1/(2 T_s), 1/(2 T_s))`. Delays longer than `1/df` alias modulo `1/df`;
//! the tracker resolves the ambiguity against its prediction.
//! Peak ties are broken in favor of the lowest linear index.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::scenario::{MeasNoise, ScenarioConfig};
use crate::waveform::{complex_gaussian, mf_signature, steer, ChannelSnapshot, EchoFrame};

/// Measurements of one BS for one TTS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub bs: usize,
    /// Delay estimate (s).
    pub tau_hat: f64,
    /// Doppler estimate (Hz).
    pub mu_hat: f64,
    /// Angle estimate (rad), when the frame had a spatial peak.
    pub theta_hat: Option<f64>,
    /// Matched-filter samples, `k`-major, then `l`, antenna innermost.
    pub y_tilde: Vec<C64>,
    /// Noise variances `(sigma_tau^2, sigma_mu^2, sigma_theta^2)`.
    pub noise_var: [f64; 3],
}

impl MeasurementBundle {
    pub fn noise_from(model: &MeasNoise) -> [f64; 3] {
        [
            model.sigma_tau * model.sigma_tau,
            model.sigma_mu * model.sigma_mu,
            model.sigma_theta2,
        ]
    }
}

/// A `K x L x N_r` complex grid with the same layout as [`EchoFrame`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub subcarriers: usize,
    pub symbols: usize,
    pub n_rx: usize,
    pub data: Vec<C64>,
}

impl Grid3 {
    pub fn get(&self, k: usize, l: usize, i: usize) -> C64 {
        self.data[(k * self.symbols + l) * self.n_rx + i]
    }
}

/// Three-point quadratic peak offset in `(-0.5, 0.5)` bins.
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Index of the maximum, lowest index winning ties. `None` if all entries are zero.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v > 0.0 && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Spatial-DFT angle estimate from a grid of `N_r`-antenna snapshots.
///
/// Each `(k, l)` snapshot is zero-padded to `pad * N_r` points and transformed
/// with `X_q = sum_i y_i e^{+j 2 pi i q / N_pad}`; magnitudes are accumulated over
/// `(k, l)`, the peak is refined by quadratic interpolation and mapped through
/// `cos(theta) = 2 q / N_pad` with `q` taken in `[-N_pad/2, N_pad/2)`.
pub fn estimate_angle_grid(data: &[C64], n_rx: usize, pad: usize) -> Result<f64> {
    let n_pad = pad * n_rx;
    let fft = FftPlanner::new().plan_fft_inverse(n_pad);
    let mut acc = vec![0.0; n_pad];
    let mut buf = vec![C64::new(0.0, 0.0); n_pad];
    for snap in data.chunks_exact(n_rx) {
        buf.fill(C64::new(0.0, 0.0));
        buf[..n_rx].copy_from_slice(snap);
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm();
        }
    }
    let q = argmax(&acc).ok_or(Error::NoPeak)?;
    let left = acc[(q + n_pad - 1) % n_pad];
    let right = acc[(q + 1) % n_pad];
    let delta = parabolic_offset(left, acc[q], right);
    let half = 0.5 * n_pad as f64;
    let signed = (q as f64 + delta + half).rem_euclid(n_pad as f64) - half;
    let cos = (2.0 * signed / n_pad as f64).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// Angle estimate of an echo frame (see [`estimate_angle_grid`]).
pub fn estimate_angle(frame: &EchoFrame, pad: usize) -> Result<f64> {
    estimate_angle_grid(&frame.data, frame.n_rx, pad)
}

/// Divide every entry by `a_t^H(theta_hat) w_k s_k[l]`.
///
/// Fails with a beam-null error if any divisor magnitude is below `floor`.
pub fn remove_symbols(frame: &EchoFrame, theta_hat: f64, floor: f64) -> Result<Grid3> {
    let n_tx = frame.beams.first().map_or(0, |w| w.len());
    let a_t = steer(theta_hat, n_tx);
    let mut data = Vec::with_capacity(frame.data.len());
    for k in 0..frame.subcarriers {
        let g = a_t.dotc(&frame.beams[k]);
        for l in 0..frame.symbols {
            let div = g * frame.transmitted.get(k, l);
            if !(div.norm() >= floor) || div.norm() == 0.0 {
                return Err(Error::BeamNull { bs: frame.bs, k, l });
            }
            for i in 0..frame.n_rx {
                data.push(frame.get(k, l, i) / div);
            }
        }
    }
    Ok(Grid3 {
        subcarriers: frame.subcarriers,
        symbols: frame.symbols,
        n_rx: frame.n_rx,
        data,
    })
}

/// 2D-DFT delay/Doppler estimate of a symbol-free grid.
///
/// Per antenna, a `pad*K`-point IDFT runs along subcarriers and a `pad*L`-point
/// DFT along symbols; magnitudes are summed over antennas and the peak is refined
/// on both axes by quadratic interpolation.
pub fn estimate_delay_doppler(
    grid: &Grid3,
    delta_f: f64,
    t_sym: f64,
    pad: usize,
) -> Result<(f64, f64)> {
    let (kk, ll, nr) = (grid.subcarriers, grid.symbols, grid.n_rx);
    let (kp, lp) = (pad * kk, pad * ll);
    let mut planner = FftPlanner::new();
    let ifft_k = planner.plan_fft_inverse(kp);
    let fft_l = planner.plan_fft_forward(lp);
    let mut acc = vec![0.0; kp * lp];
    let mut col = vec![C64::new(0.0, 0.0); kp];
    let mut row = vec![C64::new(0.0, 0.0); lp];
    let mut stage = vec![C64::new(0.0, 0.0); kp * ll];
    for i in 0..nr {
        for l in 0..ll {
            col.fill(C64::new(0.0, 0.0));
            for k in 0..kk {
                col[k] = grid.get(k, l, i);
            }
            ifft_k.process(&mut col);
            for q in 0..kp {
                stage[q * ll + l] = col[q];
            }
        }
        for q in 0..kp {
            row.fill(C64::new(0.0, 0.0));
            row[..ll].copy_from_slice(&stage[q * ll..(q + 1) * ll]);
            fft_l.process(&mut row);
            for r in 0..lp {
                acc[q * lp + r] += row[r].norm();
            }
        }
    }
    let peak = argmax(&acc).ok_or(Error::NoPeak)?;
    let (q, r) = (peak / lp, peak % lp);
    let at = |q: usize, r: usize| acc[q * lp + r];
    let dq = parabolic_offset(at((q + kp - 1) % kp, r), at(q, r), at((q + 1) % kp, r));
    let dr = parabolic_offset(at(q, (r + lp - 1) % lp), at(q, r), at(q, (r + 1) % lp));
    let tau_period = 1.0 / delta_f;
    let mut tau = ((q as f64 + dq) / (kp as f64 * delta_f)).rem_euclid(tau_period);
    if tau >= tau_period {
        tau -= tau_period;
    }
    let r_signed = if r >= lp / 2 {
        r as f64 - lp as f64
    } else {
        r as f64
    };
    let mu_period = 1.0 / t_sym;
    let mu = ((r_signed + dr) / (lp as f64 * t_sym) + 0.5 * mu_period).rem_euclid(mu_period)
        - 0.5 * mu_period;
    Ok((tau, mu))
}

/// Compensate delay/Doppler phases, remove symbols and apply the matched-filter
/// gain: `y~_k[l] = omega y_k[l] e^{j 2 pi k df tau} e^{-j 2 pi mu l T_s} / s_k[l]`.
pub fn matched_filter(
    frame: &EchoFrame,
    tau_hat: f64,
    mu_hat: f64,
    config: &ScenarioConfig,
) -> Vec<C64> {
    let ts = config.t_sym();
    let mut out = Vec::with_capacity(frame.data.len());
    for k in 0..frame.subcarriers {
        let dphase = C64::from_polar(
            config.mf_gain,
            2.0 * PI * k as f64 * config.delta_f * tau_hat,
        );
        for l in 0..frame.symbols {
            let fphase = C64::from_polar(1.0, -2.0 * PI * mu_hat * l as f64 * ts);
            let factor = dphase * fphase / frame.transmitted.get(k, l);
            for i in 0..frame.n_rx {
                out.push(frame.get(k, l, i) * factor);
            }
        }
    }
    out
}

/// Run the complete full-signal chain on one echo frame.
pub fn process_frame(frame: &EchoFrame, config: &ScenarioConfig) -> Result<MeasurementBundle> {
    let m = frame.bs;
    let est = &config.estimator;
    let theta = estimate_angle(frame, est.angle_pad)?;
    let floor = est.division_floor * (config.power_budget[m] / config.subcarriers as f64).sqrt();
    let grid = remove_symbols(frame, theta, floor)?;
    let (tau, mu) =
        estimate_delay_doppler(&grid, config.delta_f, config.t_sym(), est.delay_doppler_pad)?;
    let y_tilde = matched_filter(frame, tau, mu, config);
    Ok(MeasurementBundle {
        bs: m,
        tau_hat: tau,
        mu_hat: mu,
        theta_hat: Some(theta),
        y_tilde,
        noise_var: MeasurementBundle::noise_from(&config.meas_noise[m]),
    })
}

/// Draw BS `m`'s measurements directly from the measurement equations:
/// Gaussian delay and Doppler errors and `y~ = o_m(theta_m) + CN(0, sigma_theta^2 I)`.
pub fn simulate_measurement<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    snap: &ChannelSnapshot,
    beams_m: &[crate::linalg::CVector],
    m: usize,
    rng: &mut R,
) -> MeasurementBundle {
    let view = &snap.bs[m];
    let noise = config.meas_noise[m];
    let mut gauss = |sd: f64| {
        if sd == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sd).expect("finite std").sample(rng)
        }
    };
    let tau_hat = view.tau + gauss(noise.sigma_tau);
    let mu_hat = view.doppler + gauss(noise.sigma_mu);
    let sig = mf_signature(config, view.angle, view.reflect_coef, beams_m);
    let mut y_tilde =
        Vec::with_capacity(config.subcarriers * config.symbols_per_block * config.n_rx);
    for s in &sig {
        for _ in 0..config.symbols_per_block {
            for z in s.iter() {
                y_tilde.push(z + complex_gaussian(rng, noise.sigma_theta2));
            }
        }
    }
    let theta_hat = estimate_angle_grid(&y_tilde, config.n_rx, config.estimator.angle_pad).ok();
    MeasurementBundle {
        bs: m,
        tau_hat,
        mu_hat,
        theta_hat,
        y_tilde,
        noise_var: MeasurementBundle::noise_from(&noise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVector;
    use crate::scenario::{rng_for, Stream, TargetState};
    use crate::waveform::{snapshot, synthesize_echo, BeamformerSet, SymbolGrid};
    use approx::assert_relative_eq;

    /// Frame built directly from the echo model with unit gain and a chosen
    /// angle, delay and Doppler, independent of the scenario geometry.
    fn model_grid(
        k: usize,
        l: usize,
        nr: usize,
        cos: f64,
        tau: f64,
        mu: f64,
        df: f64,
        ts: f64,
    ) -> Grid3 {
        let mut data = Vec::new();
        for kk in 0..k {
            for ll in 0..l {
                for i in 0..nr {
                    let ph = -(i as f64) * PI * cos - 2.0 * PI * kk as f64 * df * tau
                        + 2.0 * PI * mu * ll as f64 * ts;
                    data.push(C64::from_polar(1.0, ph));
                }
            }
        }
        Grid3 {
            subcarriers: k,
            symbols: l,
            n_rx: nr,
            data,
        }
    }

    #[test]
    fn angle_on_grid() {
        let g = model_grid(4, 4, 4, 0.5, 0.0, 0.0, 1.0, 1.0);
        let th = estimate_angle_grid(&g.data, 4, 8).unwrap();
        assert!((th - PI / 3.0).abs() < 1e-6);
        let g = model_grid(2, 2, 4, 0.0, 0.0, 0.0, 1.0, 1.0);
        assert!((estimate_angle_grid(&g.data, 4, 8).unwrap() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn angle_off_grid_within_half_bin() {
        let n_pad = 32.0;
        for step in 0..100 {
            let cos = -0.97 + 1.94 * step as f64 / 99.0;
            let g = model_grid(2, 2, 4, cos, 0.0, 0.0, 1.0, 1.0);
            let th = estimate_angle_grid(&g.data, 4, 8).unwrap();
            assert!(
                (th.cos() - cos).abs() < 1.0 / n_pad,
                "cos {cos} est {}",
                th.cos()
            );
        }
    }

    #[test]
    fn all_zero_has_no_peak() {
        assert!(matches!(
            estimate_angle_grid(&vec![C64::new(0.0, 0.0); 16], 4, 8),
            Err(Error::NoPeak)
        ));
        let g = Grid3 {
            subcarriers: 2,
            symbols: 2,
            n_rx: 2,
            data: vec![C64::new(0.0, 0.0); 8],
        };
        assert!(matches!(
            estimate_delay_doppler(&g, 1.0, 1.0, 4),
            Err(Error::NoPeak)
        ));
    }

    #[test]
    fn delay_doppler_on_grid() {
        let (k, l) = (16, 16);
        let df = 120e3;
        let ts = 8.92e-6;
        let tau = 2.0 / (k as f64 * df);
        let mu = 3.0 / (l as f64 * ts);
        let g = model_grid(k, l, 2, 0.3, tau, mu, df, ts);
        let (t, m) = estimate_delay_doppler(&g, df, ts, 4).unwrap();
        assert!(((t - tau) / tau).abs() < 1e-12);
        assert!(((m - mu) / mu).abs() < 1e-12);
        let g = model_grid(k, l, 2, 0.3, 0.0, 0.0, df, ts);
        let (t, m) = estimate_delay_doppler(&g, df, ts, 4).unwrap();
        assert!(t.abs() < 1e-20 && m.abs() < 1e-9, "{t} {m}");
    }

    #[test]
    fn delay_doppler_off_grid() {
        let (k, l) = (8, 16);
        let df = 61.44e6;
        let ts = 8.92e-6;
        for step in 0..100 {
            let frac = step as f64 / 100.0;
            let tau = (0.37 + 5.0 * frac) / (k as f64 * df);
            let mu = (-6.3 + 12.1 * frac) / (l as f64 * ts);
            let g = model_grid(k, l, 4, 0.2, tau, mu, df, ts);
            let (t, m) = estimate_delay_doppler(&g, df, ts, 4).unwrap();
            assert!(
                (t - tau).abs() < 1.0 / (8.0 * k as f64 * df),
                "tau step {step}"
            );
            assert!(
                (m - mu).abs() < 1.0 / (8.0 * l as f64 * ts),
                "mu step {step}"
            );
        }
    }

    #[test]
    fn delay_independent_of_doppler_on_grid() {
        let (k, l, df, ts) = (8, 8, 1e6, 1e-5);
        let tau = 3.0 / (k as f64 * df);
        let a = model_grid(k, l, 2, 0.1, tau, 0.0, df, ts);
        let b = model_grid(k, l, 2, 0.1, tau, 2.0 / (l as f64 * ts), df, ts);
        let ta = estimate_delay_doppler(&a, df, ts, 4).unwrap().0;
        let tb = estimate_delay_doppler(&b, df, ts, 4).unwrap().0;
        assert!((ta - tb).abs() < 1e-12 * tau);
    }

    fn noiseless_setup() -> (ScenarioConfig, ChannelSnapshot, BeamformerSet, SymbolGrid) {
        let mut cfg = ScenarioConfig::desk();
        cfg.rx_noise_power = 0.0;
        let snap = snapshot(&TargetState::new(12.0, 9.0, -15.0, 4.0), &cfg).unwrap();
        let dirs: Vec<CVector> = snap
            .bs
            .iter()
            .map(|v| steer(v.angle + 0.05, cfg.n_tx))
            .collect();
        let beams = BeamformerSet::uniform(&dirs, &cfg.power_budget, cfg.subcarriers);
        let mut rng = rng_for(11, Stream::Symbols { bs: 2, tts: 0 });
        let sym = SymbolGrid::qpsk(cfg.subcarriers, cfg.symbols_per_block, &mut rng);
        (cfg, snap, beams, sym)
    }

    #[test]
    fn symbol_removal_exact_angle() {
        let (cfg, snap, beams, sym) = noiseless_setup();
        let m = 2;
        let mut rng = rng_for(0, Stream::Measurement { bs: m, tts: 0 });
        let frame = synthesize_echo(&cfg, &snap, &beams, &sym, m, &mut rng);
        let view = snap.bs[m];
        let g = remove_symbols(&frame, view.angle, 1e-30).unwrap();
        let mag = view.reflect_coef.norm() / (cfg.n_rx as f64).sqrt();
        for z in &g.data {
            assert_relative_eq!(z.norm(), mag, max_relative = 1e-12);
        }
        let expect = C64::from_polar(1.0, -2.0 * PI * cfg.delta_f * view.tau);
        let ratio = g.get(4, 2, 1) / g.get(3, 2, 1);
        assert!((ratio - expect).norm() < 1e-10);
    }

    #[test]
    fn symbol_removal_beam_null() {
        let (cfg, snap, mut beams, sym) = noiseless_setup();
        let m = 2;
        let theta = snap.bs[m].angle;
        let a = steer(theta, cfg.n_tx);
        // A vector orthogonal to a_t(theta).
        let mut w = CVector::zeros(cfg.n_tx);
        w[0] = a[1].conj();
        w[1] = -a[0].conj();
        beams.weights[m][5] = w;
        let mut rng = rng_for(0, Stream::Measurement { bs: m, tts: 0 });
        let frame = synthesize_echo(&cfg, &snap, &beams, &sym, m, &mut rng);
        let floor = 1e-8 * (cfg.power_budget[m] / cfg.subcarriers as f64).sqrt();
        match remove_symbols(&frame, theta, floor) {
            Err(Error::BeamNull { bs, k, l }) => assert_eq!((bs, k, l), (2, 5, 0)),
            other => panic!("expected beam null, got {other:?}"),
        }
    }

    #[test]
    fn matched_filter_exact_estimates() {
        let (cfg, snap, beams, sym) = noiseless_setup();
        let m = 2;
        let view = snap.bs[m];
        let mut rng = rng_for(0, Stream::Measurement { bs: m, tts: 0 });
        let frame = synthesize_echo(&cfg, &snap, &beams, &sym, m, &mut rng);
        let y = matched_filter(&frame, view.tau, view.doppler, &cfg);
        let sig = mf_signature(&cfg, view.angle, view.reflect_coef, &beams.weights[m]);
        let nr = cfg.n_rx;
        for k in 0..cfg.subcarriers {
            for l in 0..cfg.symbols_per_block {
                for i in 0..nr {
                    let z = y[(k * cfg.symbols_per_block + l) * nr + i];
                    assert!((z - sig[k][i]).norm() < 1e-12 * sig[k][i].norm().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn full_chain_matches_statistical_means() {
        let (cfg, snap, beams, sym) = noiseless_setup();
        let mut stat_cfg = cfg.clone();
        for n in &mut stat_cfg.meas_noise {
            *n = MeasNoise {
                sigma_tau: 0.0,
                sigma_mu: 0.0,
                sigma_theta2: 0.0,
            };
        }
        for m in 0..cfg.num_bs() {
            let mut rng = rng_for(0, Stream::Measurement { bs: m, tts: 0 });
            let frame = synthesize_echo(&cfg, &snap, &beams, &sym, m, &mut rng);
            let full = process_frame(&frame, &cfg).unwrap();
            let stat = simulate_measurement(&stat_cfg, &snap, &beams.weights[m], m, &mut rng);
            let view = snap.bs[m];
            // Delay aliases modulo 1/df at this subcarrier spacing.
            let period = 1.0 / cfg.delta_f;
            let dt = (full.tau_hat - stat.tau_hat + 0.5 * period).rem_euclid(period) - 0.5 * period;
            assert!(
                dt.abs() < 1.0 / (8.0 * cfg.bandwidth()),
                "bs {m} delay {dt}"
            );
            assert!((full.mu_hat - stat.mu_hat).abs() < 1.0 / (8.0 * 16.0 * cfg.t_sym()));
            assert!(
                (full.theta_hat.unwrap().cos() - view.angle.cos()).abs() < 1.0 / 32.0,
                "bs {m} {} {}",
                full.theta_hat.unwrap().cos(),
                view.angle.cos()
            );
            // The residual phase slope from the delay error stays small.
            let num: C64 = full
                .y_tilde
                .iter()
                .zip(&stat.y_tilde)
                .map(|(a, b)| a * b.conj())
                .sum();
            let den = stat.y_tilde.iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!(
                num.norm() / den > 0.95,
                "bs {m} coherence {}",
                num.norm() / den
            );
        }
    }

    #[test]
    fn statistical_noise_free_and_deterministic() {
        let (mut cfg, snap, beams, _) = noiseless_setup();
        let a = simulate_measurement(
            &cfg,
            &snap,
            &beams.weights[0],
            0,
            &mut rng_for(4, Stream::Measurement { bs: 0, tts: 1 }),
        );
        let b = simulate_measurement(
            &cfg,
            &snap,
            &beams.weights[0],
            0,
            &mut rng_for(4, Stream::Measurement { bs: 0, tts: 1 }),
        );
        assert_eq!(a, b);
        for n in &mut cfg.meas_noise {
            *n = MeasNoise {
                sigma_tau: 0.0,
                sigma_mu: 0.0,
                sigma_theta2: 0.0,
            };
        }
        let z = simulate_measurement(
            &cfg,
            &snap,
            &beams.weights[0],
            0,
            &mut rng_for(4, Stream::Measurement { bs: 0, tts: 1 }),
        );
        assert_eq!(z.tau_hat, snap.bs[0].tau);
        assert_eq!(z.mu_hat, snap.bs[0].doppler);
    }

    #[test]
    fn statistical_delay_variance() {
        let cfg = ScenarioConfig::desk();
        let snap = snapshot(&cfg.initial_state, &cfg).unwrap();
        let beams = vec![CVector::zeros(cfg.n_tx); cfg.subcarriers];
        let mut small = cfg.clone();
        small.subcarriers = 1;
        small.symbols_per_block = 1;
        let mut rng = rng_for(9, Stream::Measurement { bs: 1, tts: 0 });
        let n = 100_000;
        let tau = snap.bs[1].tau;
        let var = (0..n)
            .map(|_| {
                let b = simulate_measurement(&small, &snap, &beams[..1], 1, &mut rng);
                (b.tau_hat - tau).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let expect = cfg.meas_noise[1].sigma_tau.powi(2);
        assert!((var / expect - 1.0).abs() < 0.03);
    }

    #[test]
    fn angle_invariant_to_beam_scaling() {
        let (mut cfg, snap, beams, sym) = noiseless_setup();
        cfg.rx_noise_power = 1e-16;
        let m = 2;
        let f1 = synthesize_echo(
            &cfg,
            &snap,
            &beams,
            &sym,
            m,
            &mut rng_for(2, Stream::Measurement { bs: m, tts: 0 }),
        );
        let mut cfg0 = cfg.clone();
        cfg0.rx_noise_power = 0.0;
        let a = synthesize_echo(
            &cfg0,
            &snap,
            &beams,
            &sym,
            m,
            &mut rng_for(2, Stream::Measurement { bs: m, tts: 0 }),
        );
        let b = synthesize_echo(
            &cfg0,
            &snap,
            &beams.scaled(3.0),
            &sym,
            m,
            &mut rng_for(2, Stream::Measurement { bs: m, tts: 0 }),
        );
        let ta = estimate_angle(&a, 8).unwrap();
        let tb = estimate_angle(&b, 8).unwrap();
        assert!((ta - tb).abs() < 1e-12);
        assert!(estimate_angle(&f1, 8).is_ok());
    }
}
