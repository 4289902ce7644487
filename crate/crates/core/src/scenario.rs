//! Scenario configuration: geometry, OFDM numerology, budgets, noise models,
//! algorithm parameters, presets, validation and seeded randomness.
//!
//! All quantities are SI. Config files are JSON; any key ending in `_dbm`
//! is converted to watts (`10^((dBm - 30) / 10)`) and stored under the key
//! without the suffix. A file may start from a named preset via
//! `"base": "paper"` or `"base": "desk"` and override individual keys.

use std::fmt;

use nalgebra::{Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Kinematic target state `d = [p_x, p_y, v_x, v_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    /// Position in meters.
    pub position: Vector2<f64>,
    /// Velocity in m/s.
    pub velocity: Vector2<f64>,
}

impl TargetState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self {
            position: Vector2::new(px, py),
            velocity: Vector2::new(vx, vy),
        }
    }

    pub fn from_vector(d: &Vector4<f64>) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
        )
    }
}

/// How per-BS measurements are produced in a tracking run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Synthesize the full echo grid and run the DFT estimators.
    FullSignal,
    /// Draw measurements directly from the measurement equations.
    Statistical,
}

/// Measurement noise model of one BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasNoise {
    /// Delay standard deviation (s).
    pub sigma_tau: f64,
    /// Doppler standard deviation (Hz).
    pub sigma_mu: f64,
    /// Variance of each matched-filter output sample (W).
    pub sigma_theta2: f64,
}

/// Penalty/SCA algorithm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Initial penalty weight. `None` selects `1e3` times the typical magnitude
    /// of the beam-independent Fisher information terms.
    pub rho0: Option<f64>,
    /// Penalty reduction factor per outer iteration, in (0, 1).
    pub xi: f64,
    /// Termination threshold on the constraint violation indicator.
    pub kappa_tol: f64,
    /// Relative tolerance on the inner objective change.
    pub inner_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Relative tightening of `eta` in the `(Omega, q)` subproblem, so iterates
    /// settle strictly inside the PC-CRLB bound.
    #[serde(default = "default_eta_margin")]
    pub eta_margin: f64,
}

fn default_eta_margin() -> f64 {
    1e-3
}

/// SDR rank-one recovery parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrParams {
    /// Largest accepted ratio of the second to the first eigenvalue.
    pub rank_tol: f64,
    /// Number of Gaussian randomization candidates when the ratio test fails.
    pub randomization_trials: usize,
    /// Replace the relaxed blocks of non-serving BSs by the full budget along
    /// their most informative direction. These BSs do not affect the rate, and
    /// the interior-point solution for them is often an arbitrary high-rank mix.
    pub crlb_refinement: bool,
}

/// Local estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Zero-padding factor of the spatial DFT.
    pub angle_pad: usize,
    /// Zero-padding factor of the delay and Doppler DFTs.
    pub delay_doppler_pad: usize,
    /// Division floor as a fraction of `sqrt(P_m / K)`.
    pub division_floor: f64,
}

/// Standard deviations of the beam-training proxy used to start a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStd {
    pub position: f64,
    pub velocity: f64,
}

/// Angle-feedback benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Standard deviation of the fed-back angle (rad).
    pub angle_std: f64,
    /// Feedback latency in TTSs.
    pub delay_tts: usize,
}

/// Every physical constant and algorithm parameter of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// BS positions `b_m` (m).
    pub bs_positions: Vec<Vector2<f64>>,
    /// Carrier frequencies `f_m` (Hz).
    pub carrier_freqs: Vec<f64>,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Number of subcarriers `K`.
    pub subcarriers: usize,
    /// Number of OFDM symbols per TTS `L`.
    pub symbols_per_block: usize,
    /// Subcarrier spacing (Hz).
    pub delta_f: f64,
    /// Elementary symbol duration (s).
    pub t_elem: f64,
    /// Cyclic prefix duration (s).
    pub t_cp: f64,
    /// Per-BS transmit power budget `P_m` (W).
    pub power_budget: Vec<f64>,
    /// Position PC-CRLB threshold `eta` (m^2).
    pub crlb_threshold: f64,
    /// Index of the BS serving the vehicle.
    pub serving_bs: usize,
    /// TTS duration `Delta T` (s).
    pub tts_duration: f64,
    /// Simulated horizon `T` (s).
    pub horizon: f64,
    /// Propagation speed (m/s).
    pub c: f64,
    /// Radar cross section `beta`.
    pub rcs: Complex64,
    /// Linear one-way path gain `C_0` at the reference distance.
    pub pathloss_ref_gain: f64,
    /// Reference distance (m).
    pub pathloss_ref_dist: f64,
    /// Path-loss exponent.
    pub pathloss_exp: f64,
    /// Process noise standard deviations `(sigma_px, sigma_py, sigma_vx, sigma_vy)`.
    pub process_noise: [f64; 4],
    /// Receiver noise power per echo sample `sigma_m^2` (W).
    pub rx_noise_power: f64,
    /// Noise power at the vehicle `sigma_c^2` (W).
    pub comm_noise_power: f64,
    /// Measurement noise model per BS.
    pub meas_noise: Vec<MeasNoise>,
    /// Matched-filter gain `omega`.
    pub mf_gain: f64,
    pub penalty: PenaltyParams,
    pub sdr: SdrParams,
    pub estimator: EstimatorParams,
    pub init_std: InitStd,
    pub feedback: FeedbackParams,
    /// True target state at TTS 0.
    pub initial_state: TargetState,
    pub measurement_mode: MeasurementMode,
    pub rng_seed: u64,
}

/// Convert a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a power in watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl ScenarioConfig {
    /// Scenario with the full OFDM numerology (`K = 4096`, `L = 256`).
    pub fn paper() -> Self {
        let sigma_m2 = dbm_to_watts(-80.0);
        Self {
            bs_positions: vec![
                Vector2::new(-50.0, 0.0),
                Vector2::new(50.0, 0.0),
                Vector2::new(0.0, -50.0),
            ],
            carrier_freqs: vec![28e9, 29e9, 30e9],
            n_tx: 4,
            n_rx: 4,
            subcarriers: 4096,
            symbols_per_block: 256,
            delta_f: 120e3,
            t_elem: 8.33e-6,
            t_cp: 0.59e-6,
            power_budget: vec![dbm_to_watts(40.0); 3],
            crlb_threshold: 0.01,
            serving_bs: 2,
            tts_duration: 0.02,
            horizon: 4.0,
            c: 3e8,
            rcs: Complex64::new(0.2, 0.2),
            pathloss_ref_gain: 1e-3,
            pathloss_ref_dist: 1.0,
            pathloss_exp: 2.0,
            process_noise: [0.02, 0.02, 0.01, 0.01],
            rx_noise_power: sigma_m2,
            comm_noise_power: dbm_to_watts(-80.0),
            meas_noise: vec![
                MeasNoise {
                    sigma_tau: 1e-9,
                    sigma_mu: 50.0,
                    sigma_theta2: sigma_m2,
                };
                3
            ],
            mf_gain: 1.0,
            penalty: PenaltyParams {
                rho0: None,
                xi: 0.8,
                kappa_tol: 1e-6,
                inner_tol: 1e-5,
                max_inner: 50,
                max_outer: 30,
                eta_margin: default_eta_margin(),
            },
            sdr: SdrParams {
                rank_tol: 1e-6,
                randomization_trials: 100,
                crlb_refinement: true,
            },
            estimator: EstimatorParams {
                angle_pad: 8,
                delay_doppler_pad: 4,
                division_floor: 1e-8,
            },
            init_std: InitStd {
                position: 0.5,
                velocity: 0.5,
            },
            feedback: FeedbackParams {
                angle_std: 0.5f64.to_radians(),
                delay_tts: 1,
            },
            initial_state: TargetState::new(40.0, 0.0, -20.0, 0.0),
            measurement_mode: MeasurementMode::Statistical,
            rng_seed: 0,
        }
    }

    /// Desk-scale scenario: same geometry and physics with `K = 8`, `L = 16`.
    ///
    /// The subcarrier spacing is widened so `K * delta_f` keeps the full
    /// 491.52 MHz bandwidth, and the per-sample receiver noise is lowered by the
    /// ratio of the `K * L` sample counts so each TTS integrates the same echo
    /// energy-to-noise ratio as the full numerology.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        let full_samples = (cfg.subcarriers * cfg.symbols_per_block) as f64;
        cfg.subcarriers = 8;
        cfg.symbols_per_block = 16;
        cfg.delta_f = 491.52e6 / 8.0;
        let scale = (cfg.subcarriers * cfg.symbols_per_block) as f64 / full_samples;
        cfg.rx_noise_power *= scale;
        for n in &mut cfg.meas_noise {
            n.sigma_theta2 *= scale;
        }
        cfg.measurement_mode = MeasurementMode::FullSignal;
        cfg
    }

    /// Look up a preset by name (`"paper"` or `"desk"`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    /// OFDM symbol duration including the cyclic prefix.
    pub fn t_sym(&self) -> f64 {
        self.t_elem + self.t_cp
    }

    /// Occupied bandwidth `K * delta_f`.
    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.delta_f
    }

    /// Number of TTSs in the horizon.
    pub fn num_tts(&self) -> usize {
        (self.horizon / self.tts_duration + 1e-9).floor() as usize
    }

    /// Motion model of this scenario.
    pub fn motion_model(&self) -> MotionModel {
        MotionModel::new(self.tts_duration, self.process_noise)
    }

    /// Restrict the scenario to a subset of BSs, keeping per-BS settings aligned.
    /// The serving BS must be part of the subset.
    pub fn with_bs_subset(&self, indices: &[usize]) -> Option<Self> {
        let serving = indices.iter().position(|&i| i == self.serving_bs)?;
        let mut cfg = self.clone();
        cfg.bs_positions = indices.iter().map(|&i| self.bs_positions[i]).collect();
        cfg.carrier_freqs = indices.iter().map(|&i| self.carrier_freqs[i]).collect();
        cfg.power_budget = indices.iter().map(|&i| self.power_budget[i]).collect();
        cfg.meas_noise = indices.iter().map(|&i| self.meas_noise[i]).collect();
        cfg.serving_bs = serving;
        Some(cfg)
    }

    /// Parse a JSON config document (see the module docs for `_dbm` keys and `base`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        Self::from_json_value(value)
    }

    pub fn from_json_value(value: Value) -> Result<Self> {
        let Value::Object(mut obj) = value else {
            return Err(Error::ConfigParse("config must be a JSON object".into()));
        };
        let base = match obj.remove("base") {
            Some(Value::String(name)) => Some(
                Self::preset(&name)
                    .ok_or_else(|| Error::ConfigParse(format!("unknown preset {name:?}")))?,
            ),
            Some(other) => {
                return Err(Error::ConfigParse(format!(
                    "\"base\" must be a preset name, got {other}"
                )))
            }
            None => None,
        };
        let mut overrides = Value::Object(obj);
        convert_dbm_keys(&mut overrides)?;
        let mut merged = match base {
            Some(cfg) => serde_json::to_value(cfg)?,
            None => Value::Object(Map::new()),
        };
        merge_json(&mut merged, overrides);
        expand_scalar_power(&mut merged);
        serde_json::from_value(merged).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check every invariant, returning the config unchanged or a report of all violations.
    pub fn validate(self) -> std::result::Result<Self, ConfigReport> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigReport { violations: v })
        }
    }

    /// List every violated invariant.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        use ConfigViolation as V;
        let mut out = Vec::new();
        let m = self.num_bs();
        if m == 0 {
            out.push(V::NoBaseStations);
        }
        for (name, len) in [
            ("carrier_freqs", self.carrier_freqs.len()),
            ("power_budget", self.power_budget.len()),
            ("meas_noise", self.meas_noise.len()),
        ] {
            if len != m {
                out.push(V::LengthMismatch { field: name });
            }
        }
        if self.n_tx <= 1 {
            out.push(V::TooFewAntennas { field: "n_tx" });
        }
        if self.n_rx <= 1 {
            out.push(V::TooFewAntennas { field: "n_rx" });
        }
        if self.subcarriers == 0 {
            out.push(V::ZeroCount {
                field: "subcarriers",
            });
        }
        if self.symbols_per_block == 0 {
            out.push(V::ZeroCount {
                field: "symbols_per_block",
            });
        }
        let mut positive = |field: &'static str, x: f64| {
            if !x.is_finite() {
                out.push(V::NonFinite { field });
            } else if x <= 0.0 {
                out.push(V::NonPositive { field });
            }
        };
        positive("delta_f", self.delta_f);
        positive("t_elem", self.t_elem);
        positive("t_cp", self.t_cp);
        positive("crlb_threshold", self.crlb_threshold);
        positive("tts_duration", self.tts_duration);
        positive("horizon", self.horizon);
        positive("c", self.c);
        positive("pathloss_ref_gain", self.pathloss_ref_gain);
        positive("pathloss_ref_dist", self.pathloss_ref_dist);
        positive("pathloss_exp", self.pathloss_exp);
        positive("rx_noise_power", self.rx_noise_power);
        positive("comm_noise_power", self.comm_noise_power);
        positive("mf_gain", self.mf_gain);
        positive("penalty.kappa_tol", self.penalty.kappa_tol);
        positive("penalty.inner_tol", self.penalty.inner_tol);
        positive("sdr.rank_tol", self.sdr.rank_tol);
        positive("estimator.division_floor", self.estimator.division_floor);
        if let Some(r) = self.penalty.rho0 {
            positive("penalty.rho0", r);
        }
        for &f in &self.carrier_freqs {
            positive("carrier_freqs", f);
        }
        for &p in &self.power_budget {
            positive("power_budget", p);
        }
        for n in &self.meas_noise {
            positive("meas_noise.sigma_tau", n.sigma_tau);
            positive("meas_noise.sigma_mu", n.sigma_mu);
            positive("meas_noise.sigma_theta2", n.sigma_theta2);
        }
        for (field, x) in [
            (
                "process_noise",
                self.process_noise.iter().copied().fold(0.0, f64::min),
            ),
            (
                "init_std",
                self.init_std.position.min(self.init_std.velocity),
            ),
            ("feedback.angle_std", self.feedback.angle_std),
        ] {
            if !x.is_finite() {
                out.push(V::NonFinite { field });
            } else if x < 0.0 {
                out.push(V::Negative { field });
            }
        }
        if !(self.rcs.re.is_finite() && self.rcs.im.is_finite()) || self.rcs.norm() == 0.0 {
            out.push(V::NonPositive { field: "rcs" });
        }
        if !(self.penalty.xi > 0.0 && self.penalty.xi < 1.0) {
            out.push(V::PenaltyStepSize);
        }
        if !(self.penalty.eta_margin >= 0.0 && self.penalty.eta_margin < 1.0) {
            out.push(V::OutOfRange {
                field: "penalty.eta_margin",
            });
        }
        if self.penalty.max_inner == 0 || self.penalty.max_outer == 0 {
            out.push(V::ZeroCount {
                field: "penalty iteration limits",
            });
        }
        if self.estimator.angle_pad == 0 || self.estimator.delay_doppler_pad == 0 {
            out.push(V::ZeroCount {
                field: "estimator padding",
            });
        }
        if self.serving_bs >= m.max(1) {
            out.push(V::ServingBsOutOfRange);
        }
        let half_band = 0.5 * self.bandwidth();
        for a in 0..self.carrier_freqs.len() {
            for b in a + 1..self.carrier_freqs.len() {
                let (fa, fb) = (self.carrier_freqs[a], self.carrier_freqs[b]);
                if (fa - fb).abs() < 2.0 * half_band {
                    out.push(V::OverlappingBands { a, b });
                }
            }
        }
        let s = &self.initial_state;
        if !(s
            .position
            .iter()
            .chain(s.velocity.iter())
            .all(|x| x.is_finite()))
        {
            out.push(V::NonFinite {
                field: "initial_state",
            });
        }
        for (i, b) in self.bs_positions.iter().enumerate() {
            if !(b.x.is_finite() && b.y.is_finite()) {
                out.push(V::NonFinite {
                    field: "bs_positions",
                });
            } else if (s.position - b).norm() == 0.0 {
                out.push(V::TargetAtBs { bs: i });
            }
        }
        out
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigViolation {
    NoBaseStations,
    LengthMismatch { field: &'static str },
    TooFewAntennas { field: &'static str },
    ZeroCount { field: &'static str },
    NonPositive { field: &'static str },
    Negative { field: &'static str },
    NonFinite { field: &'static str },
    PenaltyStepSize,
    OutOfRange { field: &'static str },
    ServingBsOutOfRange,
    OverlappingBands { a: usize, b: usize },
    TargetAtBs { bs: usize },
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoBaseStations => write!(f, "no base stations"),
            Self::LengthMismatch { field } => {
                write!(f, "per-BS length mismatch in {field}")
            }
            Self::TooFewAntennas { field } => {
                write!(f, "array needs more than one antenna ({field})")
            }
            Self::ZeroCount { field } => write!(f, "zero count: {field}"),
            Self::NonPositive { field } => write!(f, "nonpositive value: {field}"),
            Self::Negative { field } => write!(f, "negative value: {field}"),
            Self::NonFinite { field } => write!(f, "non-finite value: {field}"),
            Self::PenaltyStepSize => write!(f, "penalty step size out of range"),
            Self::OutOfRange { field } => write!(f, "value out of range: {field}"),
            Self::ServingBsOutOfRange => write!(f, "serving BS index out of range"),
            Self::OverlappingBands { a, b } => {
                write!(f, "overlapping frequency bands (BS {a} and BS {b})")
            }
            Self::TargetAtBs { bs } => {
                write!(f, "initial target position coincides with BS {bs}")
            }
        }
    }
}

/// All invariant violations found by [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigReport {
    pub violations: Vec<ConfigViolation>,
}

impl fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl std::error::Error for ConfigReport {}

fn convert_dbm_keys(value: &mut Value) -> Result<()> {
    match value {
        Value::Object(map) => {
            let keys: Vec<String> = map.keys().cloned().collect();
            for key in keys {
                if let Some(stem) = key.strip_suffix("_dbm") {
                    if map.contains_key(stem) {
                        return Err(Error::ConfigParse(format!(
                            "both {key:?} and {stem:?} given"
                        )));
                    }
                    let v = map.remove(&key).expect("key listed");
                    let converted = dbm_value(&v).ok_or_else(|| {
                        Error::ConfigParse(format!("{key:?} must be a number or list of numbers"))
                    })?;
                    map.insert(stem.to_string(), converted);
                } else if let Some(child) = map.get_mut(&key) {
                    convert_dbm_keys(child)?;
                }
            }
            Ok(())
        }
        Value::Array(items) => items.iter_mut().try_for_each(convert_dbm_keys),
        _ => Ok(()),
    }
}

fn dbm_value(v: &Value) -> Option<Value> {
    match v {
        Value::Number(n) => Some(Value::from(dbm_to_watts(n.as_f64()?))),
        Value::Array(items) => items
            .iter()
            .map(dbm_value)
            .collect::<Option<Vec<_>>>()
            .map(Value::Array),
        _ => None,
    }
}

fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A scalar `power_budget` applies to every BS.
fn expand_scalar_power(cfg: &mut Value) {
    let Value::Object(map) = cfg else { return };
    let m = map
        .get("bs_positions")
        .and_then(Value::as_array)
        .map_or(0, Vec::len);
    if let Some(p) = map.get("power_budget").and_then(Value::as_f64) {
        map.insert("power_budget".into(), Value::from(vec![p; m]));
    }
}

/// Constant-velocity motion model `d_n = F d_{n-1} + u_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub transition: Matrix4<f64>,
    pub process_cov: Matrix4<f64>,
}

impl MotionModel {
    pub fn new(dt: f64, process_std: [f64; 4]) -> Self {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let q = Matrix4::from_diagonal(&Vector4::from(process_std.map(|s| s * s)));
        Self {
            transition: f,
            process_cov: q,
        }
    }
}

/// Purpose of an independent random stream. Each (purpose, BS, TTS) triple has
/// its own stream so schemes run on the same seed see identical draws no matter
/// how many numbers each of them consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth,
    Init,
    Symbols { bs: usize, tts: usize },
    Measurement { bs: usize, tts: usize },
    Feedback { bs: usize, tts: usize },
    Randomization { tts: usize },
    Instance { index: usize },
}

impl Stream {
    fn id(self) -> u64 {
        let pack =
            |kind: u64, bs: usize, tts: usize| (kind << 56) | ((bs as u64) << 32) | tts as u64;
        match self {
            Self::Truth => pack(1, 0, 0),
            Self::Init => pack(2, 0, 0),
            Self::Symbols { bs, tts } => pack(3, bs, tts),
            Self::Measurement { bs, tts } => pack(4, bs, tts),
            Self::Feedback { bs, tts } => pack(5, bs, tts),
            Self::Randomization { tts } => pack(6, 0, tts),
            Self::Instance { index } => pack(7, 0, index),
        }
    }
}

/// Deterministic random generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
