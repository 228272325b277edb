use proptest::prelude::*;

use virtual_levels::bands::sweep_bands;
use virtual_levels::birman_schwinger::{cluster, edge_grid, BirmanSchwinger};
use virtual_levels::config::RunConfig;
use virtual_levels::discrete::TruncatedH0;
use virtual_levels::fiber::{default_cutoff, PlaneWaveBasis};
use virtual_levels::green::fundamental_solution;
use virtual_levels::lattice::{MomentumGrid, PerturbationSpec, PotentialSpec};
use virtual_levels::predictor::Law;

fn laws() -> impl Strategy<Value = Law> {
    prop_oneof![
        Just(Law::D1Sqrt),
        Just(Law::D2Log),
        (2usize..=3, 1usize..=2).prop_map(|(dim, codim)| Law::DegeneratePsi { dim, codim }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn law_depth_inverts_transform(law in laws(), x in 0.01f64..2.0, c in 0.1f64..10.0) {
        let depth = law.depth(x, c);
        prop_assume!(depth > 1e-300 && depth < 1.0);
        let back = law.transform(depth, c);
        prop_assert!((back - x).abs() <= 1e-10 * x, "{law:?}: {x} -> {depth} -> {back}");
    }

    #[test]
    fn clusters_partition_the_input(values in prop::collection::vec(-5.0f64..5.0, 0..40)) {
        let mut doubled = values.clone();
        doubled.extend(values.iter().copied());
        let c = cluster(&doubled);
        prop_assert_eq!(c.iter().map(|&(_, n)| n).sum::<usize>(), doubled.len());
        prop_assert!(c.windows(2).all(|p| p[0].0 < p[1].0));
        prop_assert!(c.iter().all(|&(_, n)| n % 2 == 0));
    }

    #[test]
    fn config_survives_a_json_round_trip(
        dim in 1usize..=3,
        couplings in prop::collection::vec(-1.0f64..-1e-3, 1..6),
        per_unit in 2usize..64,
    ) {
        let mut cfg = RunConfig::minimal(dim);
        cfg.couplings = couplings;
        cfg.discretization.per_unit = per_unit;
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn zero_coupling_is_reported_at_its_index(n in 1usize..6, at in 0usize..6) {
        let at = at % n;
        let mut g = vec![-0.1; n];
        g[at] = 0.0;
        let text = serde_json::json!({"schema_version": 1, "dimension": 1, "couplings": g}).to_string();
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        let pointer = format!("/couplings/{at}");
        prop_assert!(err.contains(&pointer), "{}", err);
    }

    #[test]
    fn whole_space_green_is_positive_and_decreasing(dim in 1usize..=3, g0 in 0.05f64..5.0, r in 0.01f64..5.0) {
        let a = fundamental_solution(dim, g0, r).unwrap();
        let b = fundamental_solution(dim, g0, 1.5 * r).unwrap();
        prop_assert!(a > b && b > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bands_are_ordered_and_time_reversal_symmetric(
        a1 in -3.0f64..3.0,
        a2 in -2.0f64..2.0,
    ) {
        let v = PotentialSpec::cosine_sum(1, &[(vec![1], a1), (vec![2], a2)]).unwrap();
        let basis = PlaneWaveBasis::new(1, default_cutoff(1)).unwrap();
        let bs = sweep_bands(&v, &basis, &MomentumGrid::uniform(1, 16).unwrap(), 4).unwrap();
        for n in 0..3 {
            let (lo, hi) = (bs.band(n), bs.band(n + 1));
            prop_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
        }
        prop_assert!(bs.time_reversal_defect() < 1e-9);
    }

    #[test]
    fn branches_are_monotone_and_roots_sit_on_them(
        amplitude in 0.5f64..2.0,
        half_width in 0.25f64..1.0,
        gamma in -0.5f64..-0.05,
    ) {
        let h0 = TruncatedH0::finite_difference(&PotentialSpec::zero(1), 24, 16).unwrap();
        let gap = h0.discrete_gap(0).unwrap();
        let w = PerturbationSpec::boxed(vec![0.0], vec![half_width], amplitude);
        let bs = BirmanSchwinger::new(&h0, &w, gap).unwrap();
        let table = bs.branches(&edge_grid(gap.lambda_plus, 1.0, 12, true), 3, 0).unwrap();
        prop_assert!(table.increasing);
        prop_assert!(table.monotonicity_defect() <= 1e-10);
        let roots = bs.solve_pencil(&table, gamma, 1e-13).unwrap();
        prop_assert!(!roots.is_empty());
        for r in roots {
            prop_assert!(r.lambda < gap.lambda_plus && r.kernel_dimension >= 1);
            let mu = bs.ranked_value(r.lambda, r.branch, true).unwrap().unwrap();
            prop_assert!((mu * gamma.abs() - 1.0).abs() < 1e-7, "mu {} at {}", mu, r.lambda);
        }
    }
}
