//! Geometry-to-channel maps, uniform-linear-array steering vectors,
//! frequency-domain echo and communication channel synthesis, and the
//! achievable-rate metric.
//!
//! Echo samples follow the per-subcarrier model
//!
//! ```text
//! y_{m,k}[l] = alpha_m a_r(theta_m) a_t^H(theta_m) w_{m,k} s_{m,k}[l]
//!              e^{-j 2 pi k df tau_m} e^{j 2 pi mu_m l T_s} + z,
//! ```
//!
//! with `alpha_m = sqrt(Nt Nr) beta sqrt(eps_m) e^{-j 2 pi f_m tau_m}` and both
//! steering vectors normalized to unit norm.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_phase, CVector, C64};
use crate::scenario::{ScenarioConfig, TargetState};

/// Transmit or receive steering vector: element `i` is `e^{-j i pi cos(theta)} / sqrt(n)`.
pub fn steer(theta: f64, n: usize) -> CVector {
    let scale = 1.0 / (n as f64).sqrt();
    let cos = theta.cos();
    CVector::from_fn(n, |i, _| C64::from_polar(scale, -(i as f64) * PI * cos))
}

/// Derivative of [`steer`] with respect to `theta`: element `i` is
/// `j i pi sin(theta)` times the steering element.
pub fn steer_derivative(theta: f64, n: usize) -> CVector {
    let a = steer(theta, n);
    let sin = theta.sin();
    CVector::from_fn(n, |i, _| C64::new(0.0, i as f64 * PI * sin) * a[i])
}

/// Transmit and receive steering derivatives `(a_t', a_r')`.
pub fn steer_derivatives(theta: f64, n_tx: usize, n_rx: usize) -> (CVector, CVector) {
    (steer_derivative(theta, n_tx), steer_derivative(theta, n_rx))
}

/// Geometry and echo parameters seen by one BS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsView {
    /// Offset `l = p - b` (m).
    pub offset: Vector2<f64>,
    pub range: f64,
    /// Round-trip delay (s).
    pub tau: f64,
    /// Round-trip Doppler shift (Hz).
    pub doppler: f64,
    /// Angle `arccos(l_x / d)` in `[0, pi]`.
    pub angle: f64,
    /// `psi = v_x l_y - v_y l_x`.
    pub psi: f64,
    /// Reflection coefficient `alpha_m`.
    pub reflect_coef: C64,
}

/// One-way communication link from the serving BS to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommLink {
    pub tau_bar: f64,
    pub mu_bar: f64,
    /// One-way path gain `eps_bar`.
    pub pathloss_bar: f64,
    /// `sqrt(Nt eps_bar) e^{-j 2 pi f_u tau_bar}`.
    pub alpha_bar: C64,
    pub angle: f64,
}

/// Per-BS echo parameters and the serving link for one target state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub bs: Vec<BsView>,
    pub comm: CommLink,
}

/// One-way path gain `C_0 (d / d_0)^{-alpha}`.
pub fn one_way_gain(config: &ScenarioConfig, range: f64) -> f64 {
    config.pathloss_ref_gain * (range / config.pathloss_ref_dist).powf(-config.pathloss_exp)
}

/// Geometry of the target relative to BS `m` (no reflection coefficient physics beyond the formula).
pub fn bs_view(state: &TargetState, config: &ScenarioConfig, m: usize) -> Result<BsView> {
    let offset = state.position - config.bs_positions[m];
    let range = offset.norm();
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry { bs: m });
    }
    let f = config.carrier_freqs[m];
    let c = config.c;
    let v = state.velocity;
    let tau = 2.0 * range / c;
    let doppler = 2.0 * f * v.dot(&offset) / (c * range);
    let angle = (offset.x / range).clamp(-1.0, 1.0).acos();
    let psi = v.x * offset.y - v.y * offset.x;
    let eps = one_way_gain(config, range).powi(2);
    let nn = (config.n_tx * config.n_rx) as f64;
    let reflect_coef = config.rcs * (nn * eps).sqrt() * C64::from_polar(1.0, -2.0 * PI * f * tau);
    Ok(BsView {
        offset,
        range,
        tau,
        doppler,
        angle,
        psi,
        reflect_coef,
    })
}

/// Evaluate every BS view and the serving link at `state`.
pub fn snapshot(state: &TargetState, config: &ScenarioConfig) -> Result<ChannelSnapshot> {
    let bs = (0..config.num_bs())
        .map(|m| bs_view(state, config, m))
        .collect::<Result<Vec<_>>>()?;
    let u = config.serving_bs;
    let view = &bs[u];
    let f = config.carrier_freqs[u];
    let tau_bar = view.range / config.c;
    let mu_bar = 0.5 * view.doppler;
    let pathloss_bar = one_way_gain(config, view.range);
    let alpha_bar = C64::from_polar(
        (config.n_tx as f64 * pathloss_bar).sqrt(),
        -2.0 * PI * f * tau_bar,
    );
    Ok(ChannelSnapshot {
        comm: CommLink {
            tau_bar,
            mu_bar,
            pathloss_bar,
            alpha_bar,
            angle: view.angle,
        },
        bs,
    })
}

/// Communication channel `h_{u,k}` of the serving BS at subcarrier `k`.
pub fn comm_channel(config: &ScenarioConfig, snap: &ChannelSnapshot, k: usize) -> CVector {
    let link = &snap.comm;
    let phase = C64::from_polar(1.0, -2.0 * PI * k as f64 * config.delta_f * link.tau_bar);
    steer(link.angle, config.n_tx) * (link.alpha_bar * phase)
}

/// Achievable rate `log2(1 + |h^H w|^2 / sigma_c^2)` in bits/s/Hz.
pub fn achievable_rate(h: &CVector, w: &CVector, sigma_c2: f64) -> f64 {
    let g = h.dotc(w).norm_sqr();
    (1.0 + g / sigma_c2).log2()
}

/// Per-subcarrier rates of the serving BS's beams on the channel at `snap`.
pub fn subcarrier_rates(
    config: &ScenarioConfig,
    snap: &ChannelSnapshot,
    beams: &BeamformerSet,
) -> Vec<f64> {
    let u = config.serving_bs;
    (0..config.subcarriers)
        .map(|k| {
            achievable_rate(
                &comm_channel(config, snap, k),
                &beams.weights[u][k],
                config.comm_noise_power,
            )
        })
        .collect()
}

/// Per-BS, per-subcarrier transmit weights `w_{m,k}` (units of sqrt(W)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    /// `weights[m][k]` is an `N_t`-vector.
    pub weights: Vec<Vec<CVector>>,
}

impl BeamformerSet {
    pub fn zeros(num_bs: usize, subcarriers: usize, n_tx: usize) -> Self {
        Self {
            weights: vec![vec![CVector::zeros(n_tx); subcarriers]; num_bs],
        }
    }

    /// The same direction on every subcarrier of each BS with equal power split.
    pub fn uniform(directions: &[CVector], power: &[f64], subcarriers: usize) -> Self {
        let weights = directions
            .iter()
            .zip(power)
            .map(|(d, &p)| {
                let w = d.normalize() * C64::from((p / subcarriers as f64).sqrt());
                vec![w; subcarriers]
            })
            .collect();
        Self { weights }
    }

    pub fn num_bs(&self) -> usize {
        self.weights.len()
    }

    /// Transmit power of BS `m`: `sum_k |w_{m,k}|^2`.
    pub fn power(&self, m: usize) -> f64 {
        self.weights[m].iter().map(|w| w.norm_squared()).sum()
    }

    pub fn powers(&self) -> Vec<f64> {
        (0..self.num_bs()).map(|m| self.power(m)).collect()
    }

    /// Multiply all weights by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|ws| ws.iter().map(|w| w * C64::from(factor)).collect())
                .collect(),
        }
    }

    /// Check the power budget `sum_k |w_{m,k}|^2 <= P_m (1 + rel_tol)`.
    pub fn within_budget(&self, budget: &[f64], rel_tol: f64) -> bool {
        budget
            .iter()
            .enumerate()
            .all(|(m, &p)| self.power(m) <= p * (1.0 + rel_tol))
    }

    /// Copy with every weight rotated so its first significant entry is real positive.
    pub fn canonicalized(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|ws| ws.iter().map(canonical_phase).collect())
                .collect(),
        }
    }

    /// Power per BS and the principal transmit direction of each BS, reported as
    /// the angle maximizing `sum_k |a_t(theta)^H w_{m,k}|^2` on a 0.1 degree grid.
    pub fn digest(&self) -> BeamDigest {
        let powers = self.powers();
        let directions = self
            .weights
            .iter()
            .map(|ws| {
                let n = ws.first().map_or(0, |w| w.len());
                if n == 0 || ws.iter().all(|w| w.norm_squared() == 0.0) {
                    return None;
                }
                let mut best = (0.0, f64::NEG_INFINITY);
                for step in 0..=1800 {
                    let theta = step as f64 * PI / 1800.0;
                    let a = steer(theta, n);
                    let g: f64 = ws.iter().map(|w| a.dotc(w).norm_sqr()).sum();
                    if g > best.1 {
                        best = (theta, g);
                    }
                }
                Some(best.0)
            })
            .collect();
        BeamDigest { powers, directions }
    }
}

/// Compact beam summary stored in tracking logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamDigest {
    pub powers: Vec<f64>,
    /// Principal transmit angle per BS (rad), `None` for silent BSs.
    pub directions: Vec<Option<f64>>,
}

/// Unit-modulus data symbols `s_{m,k}[l]` of one BS, stored `k`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub subcarriers: usize,
    pub symbols: usize,
    pub data: Vec<C64>,
}

impl SymbolGrid {
    /// Uniform QPSK symbols `e^{j (pi/4 + q pi/2)}`.
    pub fn qpsk<R: Rng + ?Sized>(subcarriers: usize, symbols: usize, rng: &mut R) -> Self {
        let data = (0..subcarriers * symbols)
            .map(|_| {
                let q = rng.gen_range(0..4) as f64;
                C64::from_polar(1.0, PI / 4.0 + q * PI / 2.0)
            })
            .collect();
        Self {
            subcarriers,
            symbols,
            data,
        }
    }

    /// All-ones grid.
    pub fn ones(subcarriers: usize, symbols: usize) -> Self {
        Self {
            subcarriers,
            symbols,
            data: vec![C64::new(1.0, 0.0); subcarriers * symbols],
        }
    }

    pub fn get(&self, k: usize, l: usize) -> C64 {
        self.data[k * self.symbols + l]
    }
}

/// Received echo grid of one BS over `(k, l, antenna)`, stored with `k` major,
/// `l` next and the antenna index innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoFrame {
    pub bs: usize,
    pub subcarriers: usize,
    pub symbols: usize,
    pub n_rx: usize,
    pub data: Vec<C64>,
    pub transmitted: SymbolGrid,
    /// Transmit weights of this BS per subcarrier.
    pub beams: Vec<CVector>,
}

impl EchoFrame {
    pub fn index(&self, k: usize, l: usize, i: usize) -> usize {
        (k * self.symbols + l) * self.n_rx + i
    }

    pub fn get(&self, k: usize, l: usize, i: usize) -> C64 {
        self.data[self.index(k, l, i)]
    }
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    if var == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let n = Normal::new(0.0, (0.5 * var).sqrt()).expect("finite variance");
    C64::new(n.sample(rng), n.sample(rng))
}

/// Synthesize the echo of BS `m` under `beams` and `symbols`, adding i.i.d.
/// complex Gaussian noise of variance `rx_noise_power` drawn from `rng`.
pub fn synthesize_echo<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    snap: &ChannelSnapshot,
    beams: &BeamformerSet,
    symbols: &SymbolGrid,
    m: usize,
    rng: &mut R,
) -> EchoFrame {
    let view = &snap.bs[m];
    let (kk, ll, nr) = (config.subcarriers, config.symbols_per_block, config.n_rx);
    let a_t = steer(view.angle, config.n_tx);
    let a_r = steer(view.angle, nr);
    let ts = config.t_sym();
    let mut data = Vec::with_capacity(kk * ll * nr);
    for k in 0..kk {
        let gain = view.reflect_coef * a_t.dotc(&beams.weights[m][k]);
        let delay = C64::from_polar(1.0, -2.0 * PI * k as f64 * config.delta_f * view.tau);
        for l in 0..ll {
            let doppler = C64::from_polar(1.0, 2.0 * PI * view.doppler * l as f64 * ts);
            let common = gain * symbols.get(k, l) * delay * doppler;
            for i in 0..nr {
                data.push(common * a_r[i] + complex_gaussian(rng, config.rx_noise_power));
            }
        }
    }
    EchoFrame {
        bs: m,
        subcarriers: kk,
        symbols: ll,
        n_rx: nr,
        data,
        transmitted: symbols.clone(),
        beams: beams.weights[m].clone(),
    }
}

/// Noise-free matched-filter output `omega alpha_m a_r a_t^H w_{m,k}` for each
/// subcarrier of BS `m`, evaluated at `angle` with reflection coefficient `gain`.
/// The output does not depend on the symbol index `l`.
pub fn mf_signature(
    config: &ScenarioConfig,
    angle: f64,
    gain: C64,
    beams_m: &[CVector],
) -> Vec<CVector> {
    let a_t = steer(angle, config.n_tx);
    let a_r = steer(angle, config.n_rx);
    beams_m
        .iter()
        .map(|w| &a_r * (gain * config.mf_gain * a_t.dotc(w)))
        .collect()
}
