use fdi_core::detection::{
    detect, evaluate, fit_filter, residue_stream, DetectionReport, DetectorConfig, PredictiveFilter, RunOutcome,
};
use fdi_core::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn white(samples: usize, states: usize, std: f64, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    (0..samples).map(|_| (0..states).map(|_| c(n.sample(&mut rng), n.sample(&mut rng))).collect()).collect()
}

fn quadratic(coef: &[(Complex64, Complex64, Complex64)], samples: usize, dt: f64) -> Vec<Vec<Complex64>> {
    (0..samples)
        .map(|i| {
            let t = i as f64 * dt;
            coef.iter().map(|(a, b, q)| a + b * t + q * t * t).collect()
        })
        .collect()
}

fn cplx() -> impl Strategy<Value = Complex64> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| c(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tsqpa_predicts_quadratics_exactly(coef in prop::collection::vec((cplx(), cplx(), cplx()), 1..6), dt in 1e-3f64..0.05) {
        let x = quadratic(&coef, 60, dt);
        let r = residue_stream(&PredictiveFilter::tsqpa(), &x).unwrap();
        prop_assert!(r.magnitudes.iter().all(|&m| m < 1e-12), "{:?}", r.magnitudes.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn residues_are_linear_in_the_estimates(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = white(40, 3, 1.0, seed);
        let y = white(40, 3, 1.0, seed ^ 0xff);
        let mix: Vec<Vec<Complex64>> = x.iter().zip(&y).map(|(u, v)| u.iter().zip(v).map(|(p, q)| p * a + q * b).collect()).collect();
        for f in [PredictiveFilter::tsqpa(), PredictiveFilter::fsp_paper()] {
            let (rx, ry, rm) = (residue_stream(&f, &x).unwrap(), residue_stream(&f, &y).unwrap(), residue_stream(&f, &mix).unwrap());
            for k in 0..rm.len() {
                for s in 0..3 {
                    let want = rx.residues[k][s] * a + ry.residues[k][s] * b;
                    prop_assert!((rm.residues[k][s] - want).norm() < 1e-12 * (1.0 + want.norm()) * 10.0);
                }
            }
        }
    }

    #[test]
    fn ramps_are_invisible_until_they_stop(seed in any::<u64>(), dre in -0.05f64..0.05, dim in -0.05f64..0.05, len in 20usize..200) {
        let x = white(len + 40, 2, 1e-4, seed);
        let d = [c(dre, dim), c(-dim, dre)];
        let ramped: Vec<Vec<Complex64>> = x
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let w = (i as f64 / len as f64).min(1.0);
                row.iter().zip(&d).map(|(v, d)| v + d * w).collect()
            })
            .collect();
        let f = PredictiveFilter::tsqpa();
        let (clean, bad) = (residue_stream(&f, &x).unwrap(), residue_stream(&f, &ramped).unwrap());
        for i in 3..=len {
            for s in 0..2 {
                prop_assert!((clean.at(i).unwrap()[s] - bad.at(i).unwrap()[s]).norm() < 1e-12);
            }
        }
        // The kink where the ramp stops leaves a trace of slope size.
        let kink = (bad.at(len + 1).unwrap()[0] - clean.at(len + 1).unwrap()[0]).norm();
        prop_assert!((kink - d[0].norm() / len as f64).abs() < 1e-12 + 1e-9 * d[0].norm());
    }
}

#[test]
fn white_noise_residue_grows_by_root_twenty() {
    let std = 1e-3;
    let x = white(200_000, 1, std, 1);
    let r = residue_stream(&PredictiveFilter::tsqpa(), &x).unwrap();
    let var: f64 = r.residues.iter().map(|v| v[0].re * v[0].re).sum::<f64>() / r.len() as f64;
    let ratio = var.sqrt() / std;
    assert!((ratio - 20f64.sqrt()).abs() < 0.02 * 20f64.sqrt(), "ratio {ratio}");
}

#[test]
fn fit_recovers_an_autoregression() {
    let a = [0.5, 0.3, 0.15];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut x: Vec<Vec<Complex64>> = vec![vec![c(0.0, 0.0); 2]; 3];
    for i in 3..20_000 {
        let row = (0..2)
            .map(|s| a[0] * x[i - 1][s] + a[1] * x[i - 2][s] + a[2] * x[i - 3][s] + c(n.sample(&mut rng), n.sample(&mut rng)))
            .collect();
        x.push(row);
    }
    let f = fit_filter(&x, 3, 300).unwrap();
    for (got, want) in f.coefficients.iter().zip(a) {
        assert!((got - want).abs() < 0.02, "{:?}", f.coefficients);
    }
}

#[test]
fn fit_of_a_random_walk_is_persistence() {
    let steps = white(20_000, 3, 1.0, 8);
    let mut acc = vec![c(0.0, 0.0); 3];
    let x: Vec<Vec<Complex64>> = steps
        .iter()
        .map(|s| {
            for (a, d) in acc.iter_mut().zip(s) {
                *a += d;
            }
            acc.clone()
        })
        .collect();
    let f = fit_filter(&x, 1, 300).unwrap();
    assert!((f.coefficients[0] - 1.0).abs() < 0.05, "{:?}", f.coefficients);
}

#[test]
fn fit_on_quadratics_predicts_quadratics() {
    let coef = [
        (c(1.0, 0.2), c(0.3, -0.1), c(-0.5, 0.05)),
        (c(0.9, -0.3), c(-0.2, 0.4), c(0.1, 0.2)),
        (c(1.1, 0.0), c(0.05, 0.05), c(0.7, -0.6)),
    ];
    let train = quadratic(&coef, 400, 0.01);
    let f = fit_filter(&train, 3, 300).unwrap();
    let test = quadratic(&coef[..2], 50, 0.01);
    let r = residue_stream(&f, &test).unwrap();
    assert!(r.magnitudes.iter().all(|&m| m < 1e-8), "{:?} {:?}", f.coefficients, r.magnitudes.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn gaussian_estimates_rarely_alarm() {
    let x = white(200_600, 2, 1e-4, 12);
    let r = residue_stream(&PredictiveFilter::tsqpa(), &x).unwrap();
    let rep = detect(&r, &DetectorConfig::default()).unwrap();
    assert!((rep.alarm_count as f64) / (rep.samples_monitored as f64) < 1e-5, "{}", rep.alarm_count);
    // The floor is the complex spread of the residue: sqrt(2 * 20) times the component noise.
    assert!((rep.noise_floor_sigma / 1e-4 - 40f64.sqrt()).abs() < 0.1 * 40f64.sqrt());
}

#[test]
fn a_step_is_caught_at_its_sample() {
    let mut x = white(3000, 4, 1e-4, 3);
    for row in &mut x[1700..] {
        row[2] += c(0.0, 0.01);
    }
    for f in [PredictiveFilter::tsqpa(), PredictiveFilter::fsp_paper()] {
        let rep = detect(&residue_stream(&f, &x).unwrap(), &DetectorConfig::default()).unwrap();
        assert_eq!(rep.first_alarm_sample, Some(1700), "{}", f.name);
    }
}

fn report(first: Option<usize>, count: usize) -> DetectionReport {
    DetectionReport {
        first_alarm_sample: first,
        alarm_count: count,
        monitored_from: 600,
        samples_monitored: 9400,
        noise_floor_sigma: 1.0,
        per_state_floor: vec![1.0],
        per_state_peak_residue: vec![1.0],
    }
}

#[test]
fn evaluation_counts_by_hand() {
    let runs = vec![
        RunOutcome { report: report(Some(5000), 3), injection_sample: Some(5000) },
        RunOutcome { report: report(Some(5004), 1), injection_sample: Some(5000) },
        RunOutcome { report: report(Some(1000), 9), injection_sample: Some(5000) },
        RunOutcome { report: report(None, 0), injection_sample: Some(5000) },
        RunOutcome { report: report(Some(700), 2), injection_sample: None },
    ];
    let e = evaluate(&runs);
    assert_eq!(e.detection_rate, 0.5);
    assert_eq!(e.mean_detection_delay, Some(2.0));
    // Three alarms over four pre-injection stretches of 4400 and one clean run of 9400.
    assert!((e.false_alarm_rate - 3.0 / (4.0 * 4400.0 + 9400.0)).abs() < 1e-15);
}
