//! Solver benchmark on random single-TTS design problems.
//!
//! Each instance draws a predicted state at least [`MIN_BS_DISTANCE`] from every
//! BS, a diagonal prediction covariance and a threshold `eta` between 1.01 times
//! the smallest achievable `tr(C)` and the bound reached with zero beams, so every
//! instance is feasible and the bound can bind.

use std::time::Instant;

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::{
    build_problem, nonopt_beams, solve_penalty, solve_sdr, BeamProblem, ClarabelSolver,
};
use crate::error::{Error, Result};
use crate::scenario::{rng_for, ScenarioConfig, Stream};
use crate::waveform::BeamformerSet;

/// Smallest distance between a sampled target and any BS (m).
pub const MIN_BS_DISTANCE: f64 = 5.0;

/// A benchmark design problem with the prediction it was built from.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub d_pred: Vector4<f64>,
    pub m_pred: Matrix4<f64>,
    pub problem: BeamProblem,
}

/// Draw benchmark instance `index` of `seed`.
pub fn random_instance(config: &ScenarioConfig, index: usize, seed: u64) -> Result<BenchInstance> {
    let mut rng = rng_for(seed, Stream::Instance { index });
    let (lo, hi) = config.bs_positions.iter().fold(
        (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let pad = Vector2::repeat(10.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let position = loop {
        let p = Vector2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if config
            .bs_positions
            .iter()
            .all(|b| (b - p).norm() >= MIN_BS_DISTANCE)
        {
            break p;
        }
    };
    let speed = config.initial_state.velocity.norm().max(1.0);
    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
    let d = Vector4::new(
        position.x,
        position.y,
        speed * heading.cos(),
        speed * heading.sin(),
    );
    let m = Matrix4::from_diagonal(&Vector4::new(
        rng.gen_range(0.05..0.5),
        rng.gen_range(0.05..0.5),
        rng.gen_range(0.5..5.0),
        rng.gen_range(0.5..5.0),
    ));
    let mut problem = build_problem(&d, &m, config)?;
    let best = problem.crlb_trace(&problem.max_information_beams())?;
    let zero = problem.crlb_trace(&BeamformerSet::zeros(
        problem.num_bs(),
        problem.subcarriers,
        problem.n_tx,
    ))?;
    let lo = 1.01 * best;
    problem.eta = if zero > lo {
        lo + rng.gen_range(0.0..0.9) * (zero - lo)
    } else {
        lo
    };
    problem.seed = rng.gen();
    Ok(BenchInstance {
        d_pred: d,
        m_pred: m,
        problem,
    })
}

/// Outcome of both solvers on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub index: usize,
    pub eta: f64,
    pub sdr_rate: Option<f64>,
    pub penalty_rate: Option<f64>,
    pub nonopt_rate: f64,
    /// `penalty_rate - sdr_rate`.
    pub gap: Option<f64>,
    pub sdr_crlb: Option<f64>,
    pub penalty_crlb: Option<f64>,
    pub rank_ratio: Option<f64>,
    pub kappa: Option<f64>,
    pub penalty_iterations: Option<usize>,
    pub sdr_seconds: f64,
    pub penalty_seconds: f64,
    /// A solver reported the instance infeasible.
    pub infeasible: bool,
    pub error: Option<String>,
}

fn bench_one(config: &ScenarioConfig, index: usize, seed: u64) -> BenchRow {
    let mut row = BenchRow {
        index,
        eta: f64::NAN,
        sdr_rate: None,
        penalty_rate: None,
        nonopt_rate: f64::NAN,
        gap: None,
        sdr_crlb: None,
        penalty_crlb: None,
        rank_ratio: None,
        kappa: None,
        penalty_iterations: None,
        sdr_seconds: 0.0,
        penalty_seconds: 0.0,
        infeasible: false,
        error: None,
    };
    let problem = match random_instance(config, index, seed) {
        Ok(inst) => inst.problem,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.eta = problem.eta;
    row.nonopt_rate = problem.sum_rate(&nonopt_beams(&problem.angles, config));
    let solver = ClarabelSolver::default();
    let mut errors = Vec::new();

    let t = Instant::now();
    match solve_sdr(&problem, &solver) {
        Ok((_, d)) => {
            row.sdr_rate = Some(d.sum_rate);
            row.sdr_crlb = Some(d.crlb_trace);
            row.rank_ratio = d.rank_ratio;
        }
        Err(e) => {
            row.infeasible |= matches!(e, Error::Infeasible { .. });
            errors.push(format!("sdr: {e}"));
        }
    }
    row.sdr_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    match solve_penalty(&problem, &problem.default_init(), &solver) {
        Ok((_, d)) => {
            row.penalty_rate = Some(d.sum_rate);
            row.penalty_crlb = Some(d.crlb_trace);
            row.kappa = d.kappa;
            row.penalty_iterations = Some(d.iterations);
        }
        Err(e) => {
            row.infeasible |= matches!(e, Error::Infeasible { .. });
            errors.push(format!("penalty: {e}"));
        }
    }
    row.penalty_seconds = t.elapsed().as_secs_f64();

    row.gap = row.penalty_rate.zip(row.sdr_rate).map(|(p, s)| p - s);
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Solve `count` random instances with both solvers, in parallel.
pub fn run_bench(config: &ScenarioConfig, count: usize, seed: u64) -> Vec<BenchRow> {
    (0..count)
        .into_par_iter()
        .map(|i| bench_one(config, i, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_feasible_and_deterministic() {
        let cfg = ScenarioConfig::desk();
        for i in 0..10 {
            let p = random_instance(&cfg, i, 3).unwrap().problem;
            let q = random_instance(&cfg, i, 3).unwrap().problem;
            assert_eq!(p.eta, q.eta);
            assert!(p.ensure_feasible().is_ok());
            assert!(p.crlb_constrained());
        }
        assert_ne!(
            random_instance(&cfg, 0, 3).unwrap().problem.eta,
            random_instance(&cfg, 1, 3).unwrap().problem.eta
        );
    }

    #[test]
    fn bench_row_reports_both_solvers() {
        let cfg = ScenarioConfig::desk();
        let rows = run_bench(&cfg, 1, 0);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.gap.unwrap() <= 1e-4);
        assert!(r.sdr_crlb.unwrap() <= r.eta * (1.0 + 1e-6));
    }
}
