use fdi_core::attack::{solve_adblp, AdblpOptions, AdblpProblem, OverflowReport};
use fdi_core::grid::{DcMatrices, NetworkCase};
use fdi_core::milp::MilpStatus;
use fdi_oracles::BilevelFixture;

fn problem(fx: &BilevelFixture) -> (NetworkCase, AdblpProblem) {
    let case = NetworkCase::parse(&fx.case_text()).unwrap();
    let dc = DcMatrices::new(&case).unwrap();
    let prob = AdblpProblem::new(&case, &dc, fx.attack_buses.clone(), fx.target + 1, fx.tau)
        .unwrap()
        .with_max_angle(fx.max_angle);
    (case, prob)
}

#[test]
fn ptdf_matches_independent_construction() {
    let fx = BilevelFixture::four_bus();
    let case = NetworkCase::parse(&fx.case_text()).unwrap();
    let dc = DcMatrices::new(&case).unwrap();
    let ptdf = fx.ptdf();
    // Columns may differ by the reference choice; flows of balanced injections must not.
    let inj = [30.0, -60.0, 50.0, -20.0];
    for l in 0..ptdf.nrows() {
        let a: f64 = (0..4).map(|k| ptdf[(l, k)] * inj[k]).sum();
        let b: f64 = (0..4).map(|k| dc.ptdf[(l, k)] * inj[k]).sum();
        assert!((a - b).abs() < 1e-10, "branch {l}: {a} vs {b}");
    }
}

#[test]
fn kkt_milp_matches_grid_search() {
    let fx = BilevelFixture::four_bus();
    let (case, prob) = problem(&fx);
    let sol = solve_adblp(&prob, &AdblpOptions::default()).unwrap();
    assert_eq!(sol.status, MilpStatus::Optimal);
    let grid = fx.grid_search(0.002);
    assert!(grid.feasible > 100);
    let milp = sol.target_flow.abs();
    // The MILP is a global optimum over continuous c; the grid can only lose.
    assert!(milp >= grid.flow - 1e-6, "milp {milp} below grid {}", grid.flow);
    assert!(milp - grid.flow <= 1e-3 * grid.flow, "milp {milp} vs grid {}", grid.flow);
    assert!(milp > fx.branches[fx.target].3, "the fixture attack should overload the line");

    let false_loads: Vec<f64> = prob.dcopf.loads.iter().zip(&sol.delta_load).map(|(l, d)| l + d).collect();
    let report = OverflowReport::from_false_loads(&case, &prob.dcopf, false_loads, fx.target + 1).unwrap();
    assert!((report.target_flow_fraction * fx.branches[fx.target].3 - milp).abs() < 1e-6);
}

#[test]
fn lower_level_dispatch_is_optimal_for_the_false_loads() {
    let fx = BilevelFixture::four_bus();
    let (_, prob) = problem(&fx);
    let sol = solve_adblp(&prob, &AdblpOptions::default()).unwrap();
    let false_loads: Vec<f64> = prob.dcopf.loads.iter().zip(&sol.delta_load).map(|(l, d)| l + d).collect();
    let honest = fdi_core::attack::solve_dcopf(&prob.dcopf.with_loads(false_loads)).unwrap();
    let cost: f64 = sol.p_g.iter().zip(&prob.dcopf.cost).map(|(p, c)| p * c).sum();
    assert!((cost - honest.cost).abs() <= 1e-6 * (1.0 + honest.cost.abs()));
    for (d, l) in sol.delta_load.iter().zip(&prob.dcopf.loads) {
        assert!(d.abs() <= fx.tau * l + 1e-7);
    }
    assert!(sol.delta_load.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn without_tolerance_the_attack_vanishes() {
    let mut fx = BilevelFixture::four_bus();
    fx.tau = 0.0;
    let (_, prob) = problem(&fx);
    let sol = solve_adblp(&prob, &AdblpOptions::default()).unwrap();
    assert!(sol.c.iter().all(|c| c.abs() < 1e-9));
    assert!(sol.target_flow.abs() <= fx.branches[0].3 + 1e-6);
}
