use std::collections::HashMap;

use fdi_core::grid::{DcMatrices, MeasurementKind, MeasurementModel, NetworkCase, PmuPlacement};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn case(n: usize) -> NetworkCase {
    NetworkCase::from_file(data(&format!("case{n}.txt"))).unwrap()
}

#[test]
fn shipped_cases_have_their_sizes() {
    assert_eq!(case(118).n_buses(), 118);
    assert_eq!(case(118).branches.len(), 186);
    assert_eq!(case(14).n_buses(), 14);
    for n in [14, 118] {
        let c = case(n);
        let p = PmuPlacement::from_file(data(&format!("pmu{n}.txt"))).unwrap();
        let m = MeasurementModel::build(&c, &p).unwrap();
        assert_eq!(m.p(), n);
        assert!(m.sigma().iter().all(|&s| s > 0.0));
    }
}

#[test]
fn text_round_trip_is_identity() {
    for n in [14, 118] {
        let c = case(n);
        assert_eq!(NetworkCase::parse(&c.to_text()).unwrap(), c);
    }
}

#[test]
fn zero_injection_moves_nothing() {
    for n in [14, 118] {
        let dc = DcMatrices::new(&case(n)).unwrap();
        let flows = dc.flows(&vec![0.0; n]);
        assert!(flows.iter().all(|f| f.abs() < 1e-12));
    }
}

fn transfer_conserves(c: &NetworkCase, a: usize, b: usize) -> Result<(), TestCaseError> {
    let dc = DcMatrices::new(c).unwrap();
    let mut inj = vec![0.0; c.n_buses()];
    inj[a] += 1.0;
    inj[b] -= 1.0;
    let flows = dc.flows(&inj);
    let mut net = vec![0.0; c.n_buses()];
    for (br, f) in c.branches.iter().zip(&flows) {
        net[c.bus_pos(br.from_bus).unwrap()] += f;
        net[c.bus_pos(br.to_bus).unwrap()] -= f;
    }
    for k in 0..c.n_buses() {
        prop_assert!((net[k] - inj[k]).abs() < 1e-9, "bus position {k}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn transfers_conserve_flow_on_118(a in 0usize..118, b in 0usize..118) {
        transfer_conserves(&case(118), a, b)?;
    }

    #[test]
    fn transfers_conserve_flow_on_14(a in 0usize..14, b in 0usize..14) {
        transfer_conserves(&case(14), a, b)?;
    }

    #[test]
    fn measurement_model_is_permutation_equivariant(seed in any::<u64>()) {
        let base = case(14);
        let placement = PmuPlacement::from_file(data("pmu14.txt")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids: Vec<usize> = base.buses.iter().map(|b| b.id).collect();
        ids.shuffle(&mut rng);
        let map: HashMap<usize, usize> = base.buses.iter().map(|b| b.id).zip(ids.iter().map(|i| i + 100)).collect();
        // Relabel, then reorder the bus table by the new ids.
        let relabeled = base.relabeled(&map).unwrap();
        let mut text = relabeled.to_text();
        let start = text.find("[bus]\n").unwrap() + 6;
        let end = text.find("[branch]").unwrap();
        let mut lines: Vec<&str> = text[start..end].lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
        lines.sort_by_key(|l| l.split_whitespace().next().unwrap().parse::<usize>().unwrap());
        let table = lines.join("\n") + "\n";
        text.replace_range(start..end, &table);
        let permuted = NetworkCase::parse(&text).unwrap();
        let pmus = PmuPlacement::new(placement.pmu_buses.iter().map(|b| map[b]));

        let m0 = MeasurementModel::build(&base, &placement).unwrap();
        let m1 = MeasurementModel::build(&permuted, &pmus).unwrap();
        prop_assert_eq!(m0.n(), m1.n());
        let col = |b: usize| permuted.bus_pos(map[&base.buses[b].id]).unwrap();
        let rename = |k: &MeasurementKind| match *k {
            MeasurementKind::Voltage { bus } => MeasurementKind::Voltage { bus: map[&bus] },
            MeasurementKind::Current { branch, at_bus } => MeasurementKind::Current { branch, at_bus: map[&at_bus] },
        };
        for (i, kind) in m0.rows().iter().enumerate() {
            let j = m1.rows().iter().position(|k| *k == rename(kind)).unwrap();
            for b in 0..14 {
                prop_assert_eq!(m0.h()[(i, b)], m1.h()[(j, col(b))]);
            }
        }
    }
}
