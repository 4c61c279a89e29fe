//! Simplex and branch-and-bound against brute-force enumeration.

use fdi_core::lp::{simplex_solve, LpProblem, LpStatus};
use fdi_core::milp::{branch_and_bound, MilpProblem, MilpStatus};
use fdi_oracles::{binary_milp_optimum, vertex_optimum, DenseLp};
use proptest::prelude::*;

fn coeff() -> impl Strategy<Value = f64> {
    (-10i32..=10).prop_map(|v| v as f64 * 0.5)
}

#[derive(Debug, Clone)]
struct Instance {
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    upper: Vec<f64>,
}

fn instance(max_n: usize, max_m: usize) -> impl Strategy<Value = Instance> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(coeff(), n),
            prop::collection::vec(prop::collection::vec(coeff(), n), m),
            prop::collection::vec(-4.0f64..12.0, m),
            prop::collection::vec(0.5f64..6.0, n),
        )
            .prop_map(|(c, a, b, upper)| Instance { c, a, b, upper })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn simplex_matches_vertex_enumeration(inst in instance(5, 5)) {
        let n = inst.c.len();
        let lp = LpProblem::from_dense_le(inst.c.clone(), &inst.a, &inst.b, vec![0.0; n], inst.upper.clone());
        let sol = simplex_solve(&lp).unwrap();
        let oracle = vertex_optimum(&DenseLp {
            c: inst.c.clone(), a_le: inst.a.clone(), b_le: inst.b.clone(),
            lower: vec![0.0; n], upper: inst.upper.clone(), ..Default::default()
        });
        match oracle {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((v, _)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - v).abs() <= 1e-8 * (1.0 + v.abs()), "{} vs {}", sol.objective, v);
                prop_assert!(lp.max_violation(&sol.x) <= 1e-9);
            }
        }
    }

    #[test]
    fn optimal_duals_certify_the_objective(inst in instance(4, 4)) {
        let n = inst.c.len();
        let lp = LpProblem::from_dense_le(inst.c.clone(), &inst.a, &inst.b, vec![0.0; n], inst.upper.clone());
        let sol = simplex_solve(&lp).unwrap();
        prop_assume!(sol.status == LpStatus::Optimal);
        // Complementary slackness on the rows: a positive multiplier needs a tight row.
        for (i, row) in inst.a.iter().enumerate() {
            let act: f64 = row.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
            prop_assert!(sol.duals[i] >= -1e-9);
            prop_assert!(sol.duals[i] * (inst.b[i] - act) <= 1e-7 * (1.0 + sol.duals[i].abs()));
        }
    }

    #[test]
    fn branch_and_bound_matches_enumeration(
        (k, nc) in (1usize..=7, 0usize..=2),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..=4);
        let mut v = || (rng.random_range(-8i32..=8) as f64) * 0.5;
        let c_bin: Vec<f64> = (0..k).map(|_| v()).collect();
        let c_cont: Vec<f64> = (0..nc).map(|_| v()).collect();
        let a_bin: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| v()).collect()).collect();
        let a_cont: Vec<Vec<f64>> = (0..m).map(|_| (0..nc).map(|_| v()).collect()).collect();
        let b: Vec<f64> = (0..m).map(|_| v().abs() + 1.0).collect();
        let upper = vec![3.0; nc];
        let oracle = binary_milp_optimum(&c_bin, &c_cont, &a_bin, &a_cont, &b, &vec![0.0; nc], &upper);

        let n = k + nc;
        let a: Vec<Vec<f64>> = (0..m).map(|i| a_bin[i].iter().chain(&a_cont[i]).copied().collect()).collect();
        let mut up = vec![1.0; k];
        up.extend(&upper);
        let lp = LpProblem::from_dense_le(c_bin.iter().chain(&c_cont).copied().collect(), &a, &b, vec![0.0; n], up);
        let sol = branch_and_bound(&MilpProblem { lp, integer: (0..k).collect() }).unwrap();
        match oracle {
            None => prop_assert_eq!(sol.status, MilpStatus::Infeasible),
            Some((val, _)) => {
                prop_assert_eq!(sol.status, MilpStatus::Optimal);
                prop_assert!((sol.objective - val).abs() <= 1e-6 * (1.0 + val.abs()), "{} vs {}", sol.objective, val);
            }
        }
    }
}
