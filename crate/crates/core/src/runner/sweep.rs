//! Parameter sweeps over power, PC-CRLB threshold, BS count, array size and speed.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_tracking, SchemeId};
use crate::error::{Error, Result};
use crate::scenario::{dbm_to_watts, ScenarioConfig};

/// Position of the optional fourth BS used by the BS-count sweep.
pub const EXTRA_BS_POSITION: [f64; 2] = [0.0, 50.0];
/// Carrier of the optional fourth BS (Hz).
pub const EXTRA_BS_CARRIER: f64 = 31e9;

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-BS power budget (dBm).
    Power,
    /// PC-CRLB threshold `eta` (m^2).
    Eta,
    /// Number of cooperating BSs, 1 to 4.
    NumBs,
    /// `N_t = N_r`.
    Antennas,
    /// Target speed (m/s).
    Velocity,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        Self::Power,
        Self::Eta,
        Self::NumBs,
        Self::Antennas,
        Self::Velocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Power => "power",
            Self::Eta => "eta",
            Self::NumBs => "num_bs",
            Self::Antennas => "antennas",
            Self::Velocity => "velocity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

fn positive_integer(axis: SweepAxis, value: f64) -> Result<usize> {
    if value.fract() == 0.0 && value >= 1.0 {
        Ok(value as usize)
    } else {
        Err(Error::ConfigParse(format!(
            "{} must be a positive integer, got {value}",
            axis.name()
        )))
    }
}

/// Copy of `config` with `axis` set to `value`.
///
/// The BS-count sweep keeps the serving BS and adds the others in index order,
/// then a fourth BS at [`EXTRA_BS_POSITION`]. The velocity sweep scales the speed
/// and divides `Delta T` and the horizon by the same factor, so the target
/// visits the same positions over the same number of TTSs.
pub fn apply_axis(config: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = config.clone();
    match axis {
        SweepAxis::Power => {
            cfg.power_budget = vec![dbm_to_watts(value); cfg.num_bs()];
        }
        SweepAxis::Eta => cfg.crlb_threshold = value,
        SweepAxis::NumBs => {
            let count = positive_integer(axis, value)?;
            if cfg.num_bs() < 4 {
                cfg.bs_positions.push(Vector2::from(EXTRA_BS_POSITION));
                cfg.carrier_freqs.push(EXTRA_BS_CARRIER);
                cfg.power_budget.push(cfg.power_budget[0]);
                cfg.meas_noise.push(cfg.meas_noise[0]);
            }
            if count > cfg.num_bs() {
                return Err(Error::ConfigParse(format!(
                    "num_bs {count} exceeds the {} available BSs",
                    cfg.num_bs()
                )));
            }
            let mut order = vec![cfg.serving_bs];
            order.extend((0..cfg.num_bs()).filter(|&m| m != cfg.serving_bs));
            let mut chosen = order[..count].to_vec();
            chosen.sort_unstable();
            cfg = cfg
                .with_bs_subset(&chosen)
                .expect("serving BS is always chosen");
        }
        SweepAxis::Antennas => {
            let n = positive_integer(axis, value)?;
            cfg.n_tx = n;
            cfg.n_rx = n;
        }
        SweepAxis::Velocity => {
            let v0 = cfg.initial_state.velocity.norm();
            if !(v0 > 0.0) || !(value > 0.0) {
                return Err(Error::ConfigParse(
                    "velocity sweep needs a moving initial state and positive speeds".into(),
                ));
            }
            let s = value / v0;
            cfg.initial_state.velocity *= s;
            cfg.tts_duration /= s;
            cfg.horizon /= s;
        }
    }
    Ok(cfg.validate()?)
}

/// Metrics of one (value, scheme, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: SchemeId,
    pub seed: u64,
    /// Largest per-TTS sum rate.
    pub peak_rate: Option<f64>,
    pub average_rate: Option<f64>,
    pub min_crlb: Option<f64>,
    pub average_crlb: Option<f64>,
    pub position_rmse: Option<f64>,
    pub max_position_error: Option<f64>,
    /// Number of flagged TTS records.
    pub flagged: usize,
    /// Number of TTSs whose design was infeasible and fell back to the benchmark beam.
    pub infeasible: usize,
    /// Failure of the whole cell (invalid value, invalid config).
    pub error: Option<String>,
}

/// All cells of a sweep, ordered by value, then scheme, then seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean of `metric` over the seeds of `(value, scheme)`; `None` if any seed lacks it.
    pub fn mean(
        &self,
        value: f64,
        scheme: SchemeId,
        metric: impl Fn(&SweepRow) -> Option<f64>,
    ) -> Option<f64> {
        let vals: Option<Vec<f64>> = self
            .rows
            .iter()
            .filter(|r| r.value == value && r.scheme == scheme)
            .map(metric)
            .collect();
        let vals = vals?;
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Distinct swept values in table order.
    pub fn values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.value) {
                out.push(r.value);
            }
        }
        out
    }

    /// Distinct schemes in table order.
    pub fn schemes(&self) -> Vec<SchemeId> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.scheme) {
                out.push(r.scheme);
            }
        }
        out
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn run_cell(
    config: &ScenarioConfig,
    axis: SweepAxis,
    value: f64,
    scheme: SchemeId,
    seed: u64,
) -> SweepRow {
    let mut row = SweepRow {
        value,
        scheme,
        seed,
        peak_rate: None,
        average_rate: None,
        min_crlb: None,
        average_crlb: None,
        position_rmse: None,
        max_position_error: None,
        flagged: 0,
        infeasible: 0,
        error: None,
    };
    let log = apply_axis(config, axis, value).and_then(|cfg| run_tracking(&cfg, scheme, seed));
    match log {
        Ok(log) => {
            let crlb = log.crlb_values();
            row.peak_rate = Some(log.peak_rate());
            row.average_rate = Some(log.average_rate());
            row.min_crlb = crlb.iter().copied().reduce(f64::min);
            row.average_crlb = mean(&crlb);
            row.position_rmse = Some(log.position_rmse());
            row.max_position_error = Some(log.max_position_error());
            row.flagged = log.flagged();
            row.infeasible = log
                .records
                .iter()
                .filter(|r| r.flags.infeasible_fallback)
                .count();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Run every `(value, scheme, seed)` cell in parallel. Failed cells carry an
/// error message and the sweep continues.
pub fn run_sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    schemes: &[SchemeId],
    seeds: &[u64],
) -> SweepTable {
    let cells: Vec<(f64, SchemeId, u64)> = values
        .iter()
        .flat_map(|&v| {
            schemes
                .iter()
                .flat_map(move |&s| seeds.iter().map(move |&seed| (v, s, seed)))
        })
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(v, s, seed)| run_cell(config, axis, v, s, seed))
        .collect();
    SweepTable { axis, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_bs_keeps_serving_and_adds_fourth() {
        let cfg = ScenarioConfig::desk();
        let one = apply_axis(&cfg, SweepAxis::NumBs, 1.0).unwrap();
        assert_eq!(one.bs_positions, vec![cfg.bs_positions[2]]);
        assert_eq!(one.serving_bs, 0);
        let two = apply_axis(&cfg, SweepAxis::NumBs, 2.0).unwrap();
        assert_eq!(
            two.bs_positions,
            vec![cfg.bs_positions[0], cfg.bs_positions[2]]
        );
        assert_eq!(two.serving_bs, 1);
        let four = apply_axis(&cfg, SweepAxis::NumBs, 4.0).unwrap();
        assert_eq!(four.num_bs(), 4);
        assert_eq!(four.bs_positions[3], Vector2::new(0.0, 50.0));
        assert_eq!(four.carrier_freqs[3], 31e9);
        assert!(apply_axis(&cfg, SweepAxis::NumBs, 5.0).is_err());
        assert!(apply_axis(&cfg, SweepAxis::NumBs, 1.5).is_err());
    }

    #[test]
    fn velocity_keeps_positions_and_tts_count() {
        let mut cfg = ScenarioConfig::desk();
        cfg.process_noise = [0.0; 4];
        let fast = apply_axis(&cfg, SweepAxis::Velocity, 40.0).unwrap();
        assert_eq!(fast.num_tts(), cfg.num_tts());
        assert!((fast.initial_state.velocity.norm() - 40.0).abs() < 1e-12);
        let a = super::super::truth_trajectory(&cfg, 0);
        let b = super::super::truth_trajectory(&fast, 0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.position - y.position).norm() < 1e-9);
        }
    }

    #[test]
    fn power_and_antennas() {
        let cfg = ScenarioConfig::desk();
        let p = apply_axis(&cfg, SweepAxis::Power, 30.0).unwrap();
        assert!(p.power_budget.iter().all(|&w| (w - 1.0).abs() < 1e-12));
        let a = apply_axis(&cfg, SweepAxis::Antennas, 8.0).unwrap();
        assert_eq!((a.n_tx, a.n_rx), (8, 8));
        assert!(apply_axis(&cfg, SweepAxis::Antennas, 1.0).is_err());
    }

    #[test]
    fn failed_cells_are_reported() {
        let mut cfg = ScenarioConfig::desk();
        cfg.horizon = 2.0 * cfg.tts_duration;
        let t = run_sweep(
            &cfg,
            SweepAxis::Antennas,
            &[1.0, 4.0],
            &[SchemeId::NonoptEkf],
            &[0],
        );
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[0].error.is_some());
        assert!(t.rows[1].error.is_none());
        assert_eq!(t.values(), vec![1.0, 4.0]);
    }
}
