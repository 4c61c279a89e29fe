use fdi_core::estimation::WlsEstimator;
use fdi_core::grid::{MeasurementModel, NetworkCase, PmuPlacement};
use fdi_core::loads::SyntheticLoadSet;
use fdi_core::measurement::{
    apply_noise, frame_tve, simulate_stream, simulate_truth, MeasurementError, NoiseModel, ScenarioTimeline,
};
use fdi_core::Complex64;
use fdi_oracles::pearson;
use nalgebra::DMatrix;

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn grid() -> (NetworkCase, PmuPlacement) {
    (NetworkCase::from_file(data("case14.txt")).unwrap(), PmuPlacement::from_file(data("pmu14.txt")).unwrap())
}

fn timeline(duration: usize, cadence: usize) -> ScenarioTimeline {
    ScenarioTimeline {
        duration_samples: duration,
        sample_rate_hz: 30.0,
        dispatch_interval_samples: 300,
        powerflow_cadence_samples: cadence,
    }
}

/// Every bus swings by 5% around its nominal load with its own phase.
fn swinging(case: &NetworkCase, samples: usize) -> SyntheticLoadSet {
    let mut set = SyntheticLoadSet::constant(&case.loads_mw(), samples, 30.0);
    set.p_new = DMatrix::from_fn(case.n_buses(), samples, |b, t| {
        case.buses[b].load_mw * (1.0 + 0.05 * (t as f64 / 240.0 + b as f64).sin())
    });
    set
}

#[test]
fn constant_loads_give_a_static_stream() {
    let (case, placement) = grid();
    let loads = SyntheticLoadSet::constant(&case.loads_mw(), 900, 30.0);
    let s = simulate_stream(&case, &placement, &loads, &timeline(900, 30), &NoiseModel::noiseless()).unwrap();
    assert_eq!(s.frames.len(), 900);
    let first = &s.frames[0].w;
    for f in &s.frames {
        let d = f.w.iter().zip(first).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-10, "sample {}: {d}", f.sample_index);
    }
}

#[test]
fn noiseless_stream_is_estimated_exactly() {
    let (case, placement) = grid();
    let loads = swinging(&case, 900);
    let s = simulate_stream(&case, &placement, &loads, &timeline(900, 30), &NoiseModel::noiseless()).unwrap();
    let est = WlsEstimator::new(&MeasurementModel::build(&case, &placement).unwrap()).unwrap();
    for (f, x) in s.frames.iter().zip(&s.truth_states) {
        let e = est.estimate(f).unwrap();
        let err = e.x_hat.iter().zip(x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "sample {}: {err}", f.sample_index);
    }
}

#[test]
fn default_noise_keeps_frames_within_one_percent_tve() {
    let (case, placement) = grid();
    let loads = swinging(&case, 3000);
    let model = MeasurementModel::build(&case, &placement).unwrap();
    let truth = simulate_truth(&case, &loads, &timeline(3000, 30)).unwrap();
    let frames = apply_noise(&model, &truth.states, &NoiseModel { seed: 5, ..NoiseModel::default() });
    let ok = frames.iter().zip(&truth.states).filter(|(f, x)| frame_tve(&f.w, &model.measure(x)) < 0.01).count();
    assert!(ok as f64 >= 0.997 * frames.len() as f64, "{ok} of {}", frames.len());
}

fn row0_noise(seed: u64, states: &[Vec<Complex64>], model: &MeasurementModel) -> (Vec<f64>, Vec<f64>) {
    let frames = apply_noise(model, states, &NoiseModel { seed, ..NoiseModel::default() });
    frames
        .iter()
        .zip(states)
        .map(|(f, x)| {
            let h = model.measure(x)[0];
            ((f.w[0].norm() / h.norm()) - 1.0, f.w[0].arg() - h.arg())
        })
        .unzip()
}

#[test]
fn noise_is_seeded_and_independent_across_seeds() {
    let (case, placement) = grid();
    let model = MeasurementModel::build(&case, &placement).unwrap();
    let states = vec![vec![Complex64::new(1.0, -0.1); case.n_buses()]; 10_000];
    let (ma, aa) = row0_noise(1, &states, &model);
    let (mb, ab) = row0_noise(1, &states, &model);
    let (mc, ac) = row0_noise(2, &states, &model);
    assert_eq!((&ma, &aa), (&mb, &ab));
    assert!(pearson(&ma, &mc).abs() < 0.05);
    assert!(pearson(&aa, &ac).abs() < 0.05);
    // Relative magnitude and absolute angle spreads match the model.
    let std = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    assert!((std(&ma) / 1e-4 - 1.0).abs() < 0.05);
    assert!((std(&aa) / 1e-4 - 1.0).abs() < 0.05);
}

#[test]
fn per_sample_solves_agree_with_interpolated_stream_at_solve_points() {
    let (case, _) = grid();
    let loads = swinging(&case, 301);
    let fine = simulate_truth(&case, &loads, &timeline(301, 1)).unwrap();
    let coarse = simulate_truth(&case, &loads, &timeline(301, 30)).unwrap();
    assert_eq!(fine.snapshots.len(), 301);
    for (t, snap) in fine.snapshots.iter().enumerate() {
        assert_eq!(snap.sample, t);
        assert_eq!(fine.states[t], snap.voltages);
    }
    for snap in &coarse.snapshots {
        let d = snap.voltages.iter().zip(&fine.states[snap.sample]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-8, "sample {}: {d}", snap.sample);
    }
    // Interpolation error between solves stays small for slow loads.
    let worst = coarse
        .states
        .iter()
        .zip(&fine.states)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn every_snapshot_balances_energy() {
    let (case, _) = grid();
    let loads = swinging(&case, 1200);
    let truth = simulate_truth(&case, &loads, &timeline(1200, 30)).unwrap();
    for s in &truth.snapshots {
        assert!(s.balance_error(case.base_mva).abs() < 1e-6, "sample {}", s.sample);
    }
    // Non-slack units match their schedule at each dispatch instant.
    let slack = case.default_slack();
    for (t, d) in &truth.dispatches {
        let snap = truth.snapshots.iter().find(|s| s.sample == *t).unwrap();
        for (g, gen) in case.generators.iter().enumerate() {
            if case.bus_pos(gen.bus) != Some(slack) {
                assert!((snap.gen_mw[g] - d.p_g[g]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn short_loads_and_bad_timelines_are_rejected() {
    let (case, _) = grid();
    let loads = SyntheticLoadSet::constant(&case.loads_mw(), 100, 30.0);
    assert!(matches!(
        simulate_truth(&case, &loads, &timeline(600, 30)),
        Err(MeasurementError::ShortLoads { have: 100, need: 600 })
    ));
    let bad = ScenarioTimeline { dispatch_interval_samples: 100, ..timeline(100, 30) };
    assert!(matches!(simulate_truth(&case, &loads, &bad), Err(MeasurementError::Timeline(_))));
}
