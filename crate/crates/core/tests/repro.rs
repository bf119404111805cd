use catmap::repro::{
    compare_1d, counterexample_2d, equivalence_1d_demo, existence_counterexample, g_eps, lipschitz_levels_1d,
    random_measure_1d, split_target, uniform_source,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `∫ (g_ε(x) − F_ν⁻¹((x+1)/2))² dx/2` evaluated by the midpoint rule on a
/// finer grid than the experiment uses.
fn quadrature_w2(eps: f64, n: usize) -> f64 {
    let xs = uniform_source(n);
    let q = split_target(n);
    xs.iter().zip(&q).map(|(&x, &y)| (g_eps(eps, x) - y).powi(2)).sum::<f64>() / n as f64
}

#[test]
fn existence_table_decreases_and_matches_the_continuum() {
    let eps = [0.5, 0.25, 0.1, 0.05, 0.01];
    let r = existence_counterexample(&eps, 10_000).unwrap();
    assert_eq!(r.rows.len(), 5);
    for row in &r.rows {
        assert!((row.w2 - row.eps / 3.0).abs() < 1e-3, "{row:?}");
        assert!((row.w2 - quadrature_w2(row.eps, 10_000)).abs() < 1e-12);
        assert!((row.mass_left - (1.0 - row.eps) / 2.0).abs() <= r.mass_tolerance);
        assert!((row.mass_middle - row.eps).abs() <= r.mass_tolerance);
    }
    assert!(r.rows.last().unwrap().w2 < r.rows[0].w2);
    // One third: the value tends to 1/9 as the grid refines.
    let third = existence_counterexample(&[1.0 / 3.0], 10_000).unwrap();
    assert!((third.rows[0].w2 - 1.0 / 9.0).abs() < 1e-3);
    let mut csv = Vec::new();
    r.to_csv_writer(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
}

#[test]
fn two_atom_counterexample_for_several_shapes() {
    let r = counterexample_2d(1.0, 10.0, 1.0).unwrap();
    assert!((r.barycentric_cost - 101.0 / 6.0).abs() < 1e-9);
    assert!((r.alternative_cost - 1.0 / 3.0).abs() < 1e-9);
    for (a, b, x) in [(1.0, 3.0, 1.0), (2.0, 5.0, 0.5)] {
        let r = counterexample_2d(a, b, x).unwrap();
        assert!((r.barycentric_cost - (a * a + b * b) / 6.0).abs() < 1e-9);
        assert!(r.alternative_cost < r.barycentric_cost);
    }
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("barycentric_cost"));
}

#[test]
fn alternating_solver_matches_closed_form_in_one_dimension() {
    let r = equivalence_1d_demo(10, 20, 20, 2.0, 0.0, 3).unwrap();
    assert_eq!(r.rows.len(), 10);
    assert!(r.max_gap() <= 1e-5);
    let again = equivalence_1d_demo(10, 20, 20, 2.0, 0.0, 3).unwrap();
    assert_eq!(r, again);
}

#[test]
fn large_lipschitz_levels_approach_the_unconstrained_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mu = random_measure_1d(&mut rng, 12, 4.0).unwrap();
    let nu = random_measure_1d(&mut rng, 9, 8.0).unwrap();
    let (exact, alt) = compare_1d(&mu, &nu, 1e4, 0.0).unwrap();
    assert!((exact - alt).abs() <= 1e-5);
    // With no slope cap the barycentric map of the monotone plan is feasible,
    // leaving only the within-atom spread of the plan.
    let plan = catmap::quantile1d::monotone_plan(&mu, &nu).unwrap();
    let bar = catmap::barycentric::barycentric_projection(&plan, nu.points()).unwrap();
    let img = catmap::DiscreteMeasure::new(bar.values_or(&[0.0]), mu.weights().to_vec()).unwrap();
    let limit = catmap::quantile1d::w2_1d(&img, &nu).unwrap();
    assert!((exact - limit).abs() < 1e-6, "{exact} vs {limit}");
}

#[test]
fn two_lipschitz_levels_on_the_two_block_target() {
    let r = lipschitz_levels_1d(200, &[2.0, 8.0], 1).unwrap();
    assert!(r.objectives[1] <= r.objectives[0]);
    assert!(r.objectives[1] >= r.barycentric_cost - 1e-12);
    let mut csv = Vec::new();
    r.to_csv_writer(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("x,g_L2,g_L8,barycentric"));
    assert_eq!(text.lines().count(), 201);
}
