use fdi_core::estimation::{
    chi2_bdd, chi2_quantile, residue_invariance_check, weighted_inner, EstimationError, MeasurementFrame,
    WlsEstimator,
};
use fdi_core::grid::{GridError, MeasurementModel, NetworkCase, PmuPlacement};
use fdi_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn setup(n: usize) -> (NetworkCase, MeasurementModel) {
    let case = NetworkCase::from_file(data(&format!("case{n}.txt"))).unwrap();
    let placement = PmuPlacement::from_file(data(&format!("pmu{n}.txt"))).unwrap();
    let model = MeasurementModel::build(&case, &placement).unwrap();
    (case, model)
}

fn random_state(p: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..p).map(|_| Complex64::from_polar(rng.random_range(0.94..1.06), rng.random_range(-0.6..0.2))).collect()
}

fn noisy(model: &MeasurementModel, x: &[Complex64], rng: &mut impl Rng) -> MeasurementFrame {
    let w = model
        .measure(x)
        .iter()
        .zip(model.sigma())
        .map(|(h, &s)| {
            let n = Normal::new(0.0, s).unwrap();
            h + Complex64::new(n.sample(rng), n.sample(rng))
        })
        .collect();
    MeasurementFrame { sample_index: 0, w }
}

#[test]
fn quantile_agrees_with_statrs() {
    for dof in [1.0, 4.0, 10.0, 38.0, 106.0, 250.0] {
        let d = ChiSquared::new(dof).unwrap();
        for p in [0.001, 0.05, 0.5, 0.95, 0.99, 0.9999] {
            let ours = chi2_quantile(p, dof);
            let theirs = d.inverse_cdf(p);
            assert!((ours - theirs).abs() <= 1e-8 * theirs, "dof {dof} p {p}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn noiseless_frames_are_recovered_exactly() {
    for n in [14, 118] {
        let (_, model) = setup(n);
        let est = WlsEstimator::new(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let x = random_state(model.p(), &mut rng);
        let e = est.estimate(&MeasurementFrame { sample_index: 0, w: model.measure(&x) }).unwrap();
        let err = e.x_hat.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{n}-bus: {err}");
        assert!(e.chi2_stat < 1e-12);
    }
}

fn weighted(model: MeasurementModel) -> MeasurementModel {
    let sigma = (0..model.n()).map(|k| 1e-3 * (1.0 + (k % 3) as f64)).collect();
    model.with_sigma(sigma)
}

#[test]
fn residue_is_orthogonal_to_the_measurement_range() {
    let (_, model) = setup(14);
    let model = weighted(model);
    let est = WlsEstimator::new(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_state(model.p(), &mut rng);
    let e = est.estimate(&noisy(&model, &x, &mut rng)).unwrap();
    for j in 0..model.p() {
        let mut v = vec![Complex64::new(0.0, 0.0); model.p()];
        v[j] = Complex64::new(1.0, 0.0);
        assert!(weighted_inner(&model, &e.residue, &v).norm() < 1e-6, "state {j}");
        v[j] = Complex64::new(0.0, 1.0);
        assert!(weighted_inner(&model, &e.residue, &v).norm() < 1e-6);
    }
}

#[test]
fn statistic_follows_chi_square_under_matched_noise() {
    let (_, model) = setup(14);
    let model = weighted(model);
    let est = WlsEstimator::new(&model).unwrap();
    let dof = est.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random_state(model.p(), &mut rng);
    let runs = 4000;
    let (mut flagged, mut mean) = (0usize, 0.0);
    for _ in 0..runs {
        let e = est.estimate(&noisy(&model, &x, &mut rng)).unwrap();
        mean += e.chi2_stat / runs as f64;
        if chi2_bdd(&e, dof, 0.05).unwrap().flagged {
            flagged += 1;
        }
    }
    let rate = flagged as f64 / runs as f64;
    // Four binomial standard errors around alpha; the mean within four of its own.
    assert!((rate - 0.05).abs() < 4.0 * (0.05f64 * 0.95 / runs as f64).sqrt(), "rate {rate}");
    assert!((mean - dof as f64).abs() < 4.0 * (2.0 * dof as f64 / runs as f64).sqrt(), "mean {mean} dof {dof}");
}

#[test]
fn too_few_pmus_leave_the_system_unobservable() {
    let (case, _) = setup(14);
    let err = MeasurementModel::build(&case, &PmuPlacement::new([1])).unwrap_err();
    assert!(matches!(err, GridError::Unobservable { states: 14, .. }), "{err:?}");
}

#[test]
fn bdd_rejects_bad_parameters() {
    let (_, model) = setup(14);
    let est = WlsEstimator::new(&model).unwrap();
    let e = est.estimate(&MeasurementFrame { sample_index: 0, w: model.measure(&vec![Complex64::new(1.0, 0.0); 14]) }).unwrap();
    assert!(matches!(chi2_bdd(&e, 0, 0.05), Err(EstimationError::NoRedundancy(0))));
    assert!(matches!(chi2_bdd(&e, 10, 1.0), Err(EstimationError::BadAlpha(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_shifts_leave_the_residue_unchanged(seed in any::<u64>(), scale in 1e-4f64..0.1) {
        let (_, model) = setup(14);
        let model = weighted(model);
        let est = WlsEstimator::new(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_state(model.p(), &mut rng);
        let frame = noisy(&model, &x, &mut rng);
        let c: Vec<Complex64> = (0..model.p())
            .map(|_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect();
        let clean = est.estimate(&frame).unwrap();
        let shift = residue_invariance_check(&est, &frame, &c).unwrap();
        let norm: f64 = clean.residue.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(shift <= 1e-8 * norm.max(1e-3), "shift {shift} residue {norm}");
    }

    #[test]
    fn corrupted_frame_statistic_is_the_energy_outside_the_range(row in 0usize..20, size in 1e-3f64..0.1, seed in any::<u64>()) {
        let (_, model) = setup(14);
        let model = weighted(model);
        let est = WlsEstimator::new(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_state(model.p(), &mut rng);
        let n = model.n();
        let row = row % n;
        let mut w = model.measure(&x);
        w[row] += Complex64::new(size, -0.5 * size);
        let e = est.estimate(&MeasurementFrame { sample_index: 0, w }).unwrap();

        // Weighted real form, projected with an independent SVD.
        let mut hw = model.real_h();
        let mut d = nalgebra::DVector::zeros(2 * n);
        d[row] = size;
        d[row + n] = -0.5 * size;
        for i in 0..2 * n {
            let s = model.sigma()[i % n];
            hw.row_mut(i).unscale_mut(s);
            d[i] /= s;
        }
        let u = hw.svd(true, false).u.unwrap();
        let outside = &d - &u * (u.transpose() * &d);
        let expected = outside.norm_squared();
        prop_assert!((e.chi2_stat - expected).abs() <= 1e-8 * (1.0 + expected), "{} vs {}", e.chi2_stat, expected);
        let threshold = chi2_quantile(0.99, est.dof() as f64);
        prop_assert_eq!(chi2_bdd(&e, est.dof(), 0.01).unwrap().flagged, expected > threshold);
    }
}
