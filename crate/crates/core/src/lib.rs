//! Cooperative sensing-assisted predictive beam tracking for a multi-base-station
//! MIMO-OFDM integrated sensing and communication (ISAC) network.
//!
//! Several base stations (BSs) illuminate a moving vehicle with OFDM beams on
//! disjoint carriers. Each BS estimates delay, Doppler and angle from its echo,
//! a fusion center runs an extended Kalman filter over the stacked measurements,
//! and the predicted state drives the beam design for the next tracking time slot
//! (TTS): maximize the serving BS's achievable rate subject to a predicted
//! conditional Cramér-Rao lower bound (PC-CRLB) on the position error.
//!
//! Module map:
//!
//! - [`scenario`]: configuration, presets, validation, motion model, seeded RNG streams.
//! - [`waveform`]: geometry, steering vectors, echo and communication channel synthesis, rate.
//! - [`estimator`]: spatial-DFT angle estimation, 2D-DFT delay/Doppler estimation,
//!   matched filtering and the statistical measurement shortcut.
//! - [`tracker`]: EKF prediction, measurement Jacobians and the information-form fusion update.
//! - [`fim`]: closed-form predicted Fisher information and the position PC-CRLB.
//! - [`beamformer`]: the rate-maximization problem, its SDR and penalty/SCA solvers,
//!   and the non-optimized benchmark beam.
//! - [`runner`]: the two-stage per-TTS loop, benchmark schemes, sweeps, CDFs and export.

pub mod beamformer;
pub mod error;
pub mod estimator;
pub mod fim;
pub mod linalg;
pub mod runner;
pub mod scenario;
pub mod tracker;
pub mod waveform;

pub use error::{Error, Result};
pub use scenario::{ScenarioConfig, TargetState};
