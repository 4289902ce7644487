//! Property tests for invariants that hold for any input.

use beamtrack::fim::{coefficients, crlb_trace, fim_blocks};
use beamtrack::linalg::{CVector, C64};
use beamtrack::runner::{random_instance, Cdf};
use beamtrack::scenario::MotionModel;
use beamtrack::tracker::{predict, TrackState};
use beamtrack::waveform::BeamformerSet;
use beamtrack::ScenarioConfig;
use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

fn beams_from(cfg: &ScenarioConfig, parts: &[f64]) -> BeamformerSet {
    let mut beams = BeamformerSet::zeros(cfg.num_bs(), cfg.subcarriers, cfg.n_tx);
    let mut it = parts.iter().cycle();
    for row in beams.weights.iter_mut() {
        for w in row.iter_mut() {
            *w = CVector::from_fn(cfg.n_tx, |_, _| {
                C64::new(*it.next().unwrap(), *it.next().unwrap())
            });
        }
    }
    beams
}

fn state_and_prior(x: f64, y: f64) -> (Vector4<f64>, Matrix4<f64>) {
    (
        Vector4::new(x, y, -12.0, 4.0),
        Matrix4::from_diagonal(&Vector4::new(0.1, 0.2, 1.0, 2.0)),
    )
}

fn rotate(beams: &BeamformerSet, phases: &[f64]) -> BeamformerSet {
    let mut out = beams.clone();
    let mut it = phases.iter().cycle();
    for row in out.weights.iter_mut() {
        for w in row.iter_mut() {
            *w *= C64::from_polar(1.0, *it.next().unwrap());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_and_crlb_ignore_common_beam_phase(
        index in 0usize..8,
        parts in prop::collection::vec(-1.0f64..1.0, 16),
        phases in prop::collection::vec(-3.2f64..3.2, 7),
    ) {
        let cfg = ScenarioConfig::desk();
        let p = random_instance(&cfg, index, 3).unwrap().problem;
        let beams = beams_from(&cfg, &parts);
        let turned = rotate(&beams, &phases);
        let (r0, r1) = (p.sum_rate(&beams), p.sum_rate(&turned));
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.abs().max(1.0));
        let (c0, c1) = (p.crlb_trace(&beams).unwrap(), p.crlb_trace(&turned).unwrap());
        prop_assert!((c0 - c1).abs() <= 1e-9 * c0);
    }

    #[test]
    fn fim_information_is_quadratic_in_beams(
        x in 0.0f64..40.0,
        y in 10.0f64..50.0,
        parts in prop::collection::vec(-1.0f64..1.0, 16),
        scale in 0.1f64..10.0,
    ) {
        let cfg = ScenarioConfig::desk();
        let (d, m) = state_and_prior(x, y);
        let coeffs = coefficients(&d, &m, &cfg).unwrap();
        let beams = beams_from(&cfg, &parts);
        let mut scaled = beams.clone();
        scaled.weights.iter_mut().flatten().for_each(|w| *w *= C64::from(scale));
        let prior = fim_blocks(&coeffs, &BeamformerSet::zeros(cfg.num_bs(), cfg.subcarriers, cfg.n_tx)).full;
        let base = fim_blocks(&coeffs, &beams).full - prior;
        let grown = fim_blocks(&coeffs, &scaled).full - prior;
        let err = (grown - base * (scale * scale)).amax();
        prop_assert!(err <= 1e-9 * (base * (scale * scale)).amax().max(1e-300));
    }

    #[test]
    fn crlb_nonincreasing_in_beam_power(
        x in 0.0f64..40.0,
        y in 10.0f64..50.0,
        parts in prop::collection::vec(-1.0f64..1.0, 16),
        scale in 1.0f64..5.0,
    ) {
        let cfg = ScenarioConfig::desk();
        let (d, m) = state_and_prior(x, y);
        let coeffs = coefficients(&d, &m, &cfg).unwrap();
        let beams = beams_from(&cfg, &parts);
        let mut scaled = beams.clone();
        scaled.weights.iter_mut().flatten().for_each(|w| *w *= C64::from(scale));
        let zero = BeamformerSet::zeros(cfg.num_bs(), cfg.subcarriers, cfg.n_tx);
        let t0 = crlb_trace(&coeffs, &zero).unwrap();
        let t1 = crlb_trace(&coeffs, &beams).unwrap();
        let t2 = crlb_trace(&coeffs, &scaled).unwrap();
        prop_assert!(t1 <= t0 * (1.0 + 1e-12));
        prop_assert!(t2 <= t1 * (1.0 + 1e-12));
    }

    #[test]
    fn noiseless_prediction_moves_at_constant_velocity(
        state in prop::array::uniform4(-50.0f64..50.0),
        dt in 0.001f64..1.0,
        std in prop::array::uniform4(0.0f64..2.0),
    ) {
        let d = Vector4::from(state);
        let track = TrackState { estimate: d, covariance: Matrix4::identity() };
        let next = predict(&track, &MotionModel::new(dt, std));
        let e = next.estimate;
        prop_assert!((e[0] - (d[0] + dt * d[2])).abs() <= 1e-12 * (1.0 + d[0].abs() + d[2].abs()));
        prop_assert!((e[1] - (d[1] + dt * d[3])).abs() <= 1e-12 * (1.0 + d[1].abs() + d[3].abs()));
        prop_assert_eq!((e[2], e[3]), (d[2], d[3]));
        let c = next.covariance;
        prop_assert_eq!(c, c.transpose());
        prop_assert!(c.symmetric_eigenvalues().min() > 0.0);
        prop_assert!(c[(2, 2)] >= 1.0 && c[(3, 3)] >= 1.0);
    }

    #[test]
    fn config_json_round_trip(
        eta in 1e-4f64..1.0,
        power_dbm in 10.0f64..50.0,
        seed in any::<u64>(),
        paper in any::<bool>(),
    ) {
        let mut cfg = if paper { ScenarioConfig::paper() } else { ScenarioConfig::desk() };
        cfg.crlb_threshold = eta;
        cfg.power_budget = vec![10f64.powf(power_dbm / 10.0) * 1e-3; cfg.num_bs()];
        cfg.rng_seed = seed;
        let back = ScenarioConfig::from_json_str(&cfg.to_json_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn cdf_is_monotone(
        samples in prop::collection::vec(-1e3f64..1e3, 1..200),
        a in -1.1e3f64..1.1e3,
        b in -1.1e3f64..1.1e3,
        p in 0.0f64..1.0,
        q in 0.0f64..1.0,
    ) {
        let cdf = Cdf::new(samples);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(cdf.eval(lo) <= cdf.eval(hi));
        prop_assert!((0.0..=1.0).contains(&cdf.eval(lo)));
        let (pl, ph) = (p.min(q), p.max(q));
        prop_assert!(cdf.quantile(pl).unwrap() <= cdf.quantile(ph).unwrap());
        prop_assert!(cdf.eval(cdf.quantile(ph).unwrap()) >= ph);
    }
}
