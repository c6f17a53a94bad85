use jsq_core::{
    audit, classify_domain, fluid_solve, local_rate, lyapunov_check, nominal_inputs, path_action,
    psi_ij, simulate, InitialCost, PoissonCost, RateOptions, SimConfig, TieRule, Topology,
};
use proptest::prelude::*;

fn pair() -> Topology {
    Topology::unit_weights(vec![vec![0, 1]], vec![3.0], vec![1.0, 1.0]).unwrap()
}

fn mm1(lambda: f64, mu: f64) -> Topology {
    Topology::unit_weights(vec![vec![0]], vec![lambda], vec![mu]).unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 4 => 0.0f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rate_is_nonnegative_and_matches_reduced(
        x in (coord(), coord()),
        y in (-2.0f64..2.0, -2.0f64..2.0),
        tie in any::<bool>(),
    ) {
        let topology = pair();
        let cost = PoissonCost::new(&topology);
        let opts = RateOptions::default();
        let x = if tie { vec![x.0, x.0] } else { vec![x.0, x.1] };
        let y = vec![y.0, y.1];
        let w = local_rate(&x, &y, &topology, &cost, &opts).unwrap();
        prop_assert!(w.value >= 0.0);
        let label = classify_domain(&x, &topology).unwrap();
        let reduced = psi_ij(&label, &y, &topology, &cost, &opts).unwrap();
        if w.value.is_finite() {
            prop_assert!((w.value - reduced).abs() < 1e-7, "{} vs {}", w.value, reduced);
        } else {
            prop_assert!(reduced.is_infinite());
        }
    }

    #[test]
    fn rate_is_convex_in_velocity(
        x in 0.1f64..3.0,
        y1 in -2.0f64..2.0,
        y2 in -2.0f64..2.0,
    ) {
        let topology = mm1(1.0, 1.0);
        let cost = PoissonCost::new(&topology);
        let opts = RateOptions::default();
        let l = |y: f64| local_rate(&[x], &[y], &topology, &cost, &opts).unwrap().value;
        let mid = l(0.5 * (y1 + y2));
        prop_assert!(mid <= 0.5 * (l(y1) + l(y2)) + 1e-7);
    }

    #[test]
    fn witness_balances_velocity(x in 0.1f64..3.0, y in -2.0f64..2.0) {
        let topology = mm1(1.0, 2.0);
        let cost = PoissonCost::new(&topology);
        let w = local_rate(&[x], &[y], &topology, &cost, &RateOptions::default()).unwrap();
        prop_assert!((w.e[0][0] - w.d[0] - y).abs() < 1e-6);
        prop_assert!((w.e[0][0] - w.a[0]).abs() < 1e-9);
    }

    #[test]
    fn simulated_paths_pass_audit(
        seed in any::<u64>(),
        n in 5u64..200,
        uniform in any::<bool>(),
        q0 in (0.0f64..2.0, 0.0f64..2.0),
    ) {
        let topology = pair();
        let cfg = SimConfig {
            n,
            horizon: 1.0,
            seed,
            tie: if uniform { TieRule::UniformRandom } else { TieRule::LowestIndex },
            q0_scaled: vec![q0.0, q0.1],
        };
        let path = simulate(&topology, &cfg).unwrap();
        audit(&topology, &path).unwrap();
        let again = simulate(&topology, &cfg).unwrap();
        prop_assert_eq!(path.num_events(), again.num_events());
        for i in 0..=path.num_events() {
            prop_assert_eq!(path.queue(i), again.queue(i));
        }
    }

    #[test]
    fn fluid_paths_contract(
        p in (0.0f64..3.0, 0.0f64..3.0),
        r in (0.0f64..3.0, 0.0f64..3.0),
    ) {
        let topology = pair();
        let h = 1e-3;
        let (a, b) = nominal_inputs(&topology, 1.0).unwrap();
        let first = fluid_solve(&topology, &[p.0, p.1], &a, &b, 1.0, h).unwrap();
        let second = fluid_solve(&topology, &[r.0, r.1], &a, &b, 1.0, h).unwrap();
        prop_assert!(lyapunov_check(&first, &second).unwrap() <= 5.0 * h);
        prop_assert!(first.q.values().iter().flatten().all(|&v| v >= 0.0));
    }
}

#[test]
fn stable_queue_drains_along_zero_cost_path() {
    let topology = mm1(1.0, 2.0);
    let h = 1.0 / 1024.0;
    let (a, b) = nominal_inputs(&topology, 2.0).unwrap();
    let sol = fluid_solve(&topology, &[0.5], &a, &b, 2.0, h).unwrap();
    assert!((sol.q.eval(0.25)[0] - 0.25).abs() < 1e-12);
    assert_eq!(sol.q.eval(1.0)[0], 0.0);
    let cost = PoissonCost::new(&topology);
    let report = path_action(
        &sol.q,
        &topology,
        &cost,
        &InitialCost::Fixed(vec![0.5]),
        &RateOptions::default(),
    )
    .unwrap();
    assert!(report.total < 1e-6, "{}", report.total);
}
