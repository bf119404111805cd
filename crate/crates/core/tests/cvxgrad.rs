mod common;

use catmap::barycentric::{constrained_barycentric_fit, L2Projector, MonotoneLipschitz1d};
use catmap::cvxgrad::{
    check_interpolable, eval_bounds, fit_map, taylor_q, CellRule, ConvexGradientMap, ConvexGradientProjector, FitOptions,
    Partition, SmoothnessParams, TaylorWitness,
};
use catmap::measure::{DiscreteMeasure, PointMap};
use catmap::quantile1d::{monotone_plan, solve_map_1d};
use catmap::CostFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()).collect()
}

fn quadratic_witness(rng: &mut ChaCha8Rng, n: usize, d: usize, prm: SmoothnessParams) -> TaylorWitness {
    let c = prm.ell + rng.random::<f64>() * (prm.lip - prm.ell);
    let atoms = random_points(rng, n, d, 2.0);
    let gradients = atoms.iter().map(|x| x.iter().map(|v| c * v).collect()).collect();
    let potentials = atoms.iter().map(|x| 0.5 * c * x.iter().map(|v| v * v).sum::<f64>()).collect();
    TaylorWitness::new(atoms, gradients, potentials, prm, Partition::single(n)).unwrap()
}

/// `Q(1,2) + Q(2,1)` written out from the definition.
fn symmetric_q_sum(x1: &[f64], x2: &[f64], g1: &[f64], g2: &[f64], ell: f64, lip: f64) -> f64 {
    let r = 1.0 - ell / lip;
    let (c1, c2, c3) = (1.0 / (2.0 * lip * r), ell / (2.0 * r), ell / (lip * r));
    let mut ip = 0.0;
    let mut dg2 = 0.0;
    let mut dx2 = 0.0;
    for k in 0..x1.len() {
        let dx = x1[k] - x2[k];
        let dg = g1[k] - g2[k];
        ip += dx * dg;
        dg2 += dg * dg;
        dx2 += dx * dx;
    }
    (1.0 + 2.0 * c3) * ip - 2.0 * c1 * dg2 - 2.0 * c2 * dx2
}

#[test]
fn quadratic_potential_data_is_interpolable() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let ell = rng.random::<f64>();
        let prm = SmoothnessParams::new(ell, ell + 0.1 + 2.0 * rng.random::<f64>()).unwrap();
        let d = rng.random_range(1..=3);
        let w = quadratic_witness(&mut rng, 8, d, prm);
        assert!(check_interpolable(&w));
        assert!(w.strong_monotonicity_gap() >= -1e-12);
    }
}

#[test]
fn lipschitz_violating_pairs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let ell = 0.5 * rng.random::<f64>();
        let lip = ell + 0.5 + rng.random::<f64>();
        let prm = SmoothnessParams::new(ell, lip).unwrap();
        let pts = random_points(&mut rng, 2, 2, 1.0);
        let dx = ((pts[0][0] - pts[1][0]).powi(2) + (pts[0][1] - pts[1][1]).powi(2)).sqrt();
        let g1: Vec<f64> = random_points(&mut rng, 1, 2, 1.0).remove(0);
        let dir: Vec<f64> = random_points(&mut rng, 1, 2, 1.0).remove(0);
        let nd = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let k = lip * (1.05 + rng.random::<f64>()) * dx / nd;
        let g2: Vec<f64> = g1.iter().zip(&dir).map(|(g, v)| g + k * v).collect();
        assert!(symmetric_q_sum(&pts[0], &pts[1], &g1, &g2, ell, lip) < 0.0);
        let phis = vec![rng.random::<f64>(), rng.random::<f64>()];
        let w = TaylorWitness::new(pts, vec![g1, g2], phis, prm, Partition::single(2)).unwrap();
        assert!(!check_interpolable(&w));
    }
}

#[test]
fn q_matches_its_symmetric_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prm = SmoothnessParams::new(0.3, 1.7).unwrap();
    for _ in 0..50 {
        let v = random_points(&mut rng, 4, 3, 1.5);
        let (p1, p2) = (rng.random::<f64>(), rng.random::<f64>());
        let s = taylor_q(&v[0], &v[1], p1, p2, &v[2], &v[3], &prm) + taylor_q(&v[1], &v[0], p2, p1, &v[3], &v[2], &prm);
        assert!((s - symmetric_q_sum(&v[0], &v[1], &v[2], &v[3], 0.3, 1.7)).abs() < 1e-12);
    }
}

#[test]
fn bounds_pin_the_data_and_stay_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prm = SmoothnessParams::new(0.5, 2.0).unwrap();
    let w = quadratic_witness(&mut rng, 10, 2, prm);
    for i in 0..w.len() {
        let b = eval_bounds(&w, &w.atoms()[i], 0).unwrap();
        assert!((b.phi_l - w.potentials()[i]).abs() < 1e-6, "{b:?}");
        assert!((b.phi_u - w.potentials()[i]).abs() < 1e-6);
        for k in 0..2 {
            assert!((b.grad_l[k] - w.gradients()[i][k]).abs() < 1e-6);
            assert!((b.grad_u[k] - w.gradients()[i][k]).abs() < 1e-6);
        }
    }
    let xs = random_points(&mut rng, 50, 2, 3.0);
    let map = ConvexGradientMap::new(w.clone());
    let grads = map.eval_many(&xs).unwrap();
    for x in &xs {
        let b = eval_bounds(&w, x, 0).unwrap();
        assert!(b.phi_l <= b.phi_u + 1e-8, "{b:?}");
    }
    for i in 0..xs.len() {
        for j in 0..i {
            let dx: f64 = (0..2).map(|k| (xs[i][k] - xs[j][k]).powi(2)).sum::<f64>().sqrt();
            let dg: f64 = (0..2).map(|k| (grads[i][k] - grads[j][k]).powi(2)).sum::<f64>().sqrt();
            assert!(dg <= prm.lip * dx + 1e-6, "{dg} > L·{dx}");
        }
    }
}

#[test]
fn quadratic_data_extends_to_the_quadratic() {
    // Data from ∇(c/2‖x‖²) with c strictly inside (ell, L): both bounds contain
    // the quadratic itself.
    let prm = SmoothnessParams::new(0.0, 1.0).unwrap();
    let w = TaylorWitness::new(vec![vec![0.0]], vec![vec![0.0]], vec![0.0], prm, Partition::single(1)).unwrap();
    let b = eval_bounds(&w, &[1.0], 0).unwrap();
    assert!((b.phi_u - 0.5).abs() < 1e-8);
    assert!((b.grad_u[0] - 1.0).abs() < 1e-4);
    assert!(b.phi_l.abs() < 1e-8);
}

fn random_1d(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> DiscreteMeasure {
    let xs: Vec<f64> = (0..n).map(|_| spread * rng.random::<f64>()).collect();
    DiscreteMeasure::from_scalars(&xs, common::rational_weights(rng, n)).unwrap()
}

#[test]
fn one_dimensional_fit_matches_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let (n, m) = (rng.random_range(2..=15), rng.random_range(2..=15));
        let mu = random_1d(&mut rng, n, 4.0);
        let nu = random_1d(&mut rng, m, 8.0);
        let ell = 0.25 * rng.random::<f64>();
        let lip = 1.0 + 2.0 * rng.random::<f64>();
        let exact = solve_map_1d(&mu, &nu, lip, ell).unwrap();
        let prm = SmoothnessParams::new(ell, lip).unwrap();
        let fit = fit_map(&mu, &nu, &CostFunction::SquaredEuclidean, &prm, &Partition::single(n), &FitOptions::default()).unwrap();
        let got = *fit.trace.last().unwrap();
        assert!((got - exact.objective).abs() < 1e-5, "{got} vs {}", exact.objective);
        assert!(check_interpolable(&fit.witness));
    }
}

#[test]
fn one_dimensional_projection_matches_the_chain_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let n = rng.random_range(2..=12);
        let mu = random_1d(&mut rng, n, 3.0);
        let nu = random_1d(&mut rng, n + 2, 6.0);
        let pi = monotone_plan(&mu, &nu).unwrap();
        let prm = SmoothnessParams::new(0.2, 1.5).unwrap();
        let via_qcqp = constrained_barycentric_fit(&mu, &pi, nu.points(), &ConvexGradientProjector::new(prm, Partition::single(n))).unwrap();
        let via_dp = constrained_barycentric_fit(&mu, &pi, nu.points(), &MonotoneLipschitz1d { ell: 0.2, lip: 1.5 }).unwrap();
        for (a, b) in via_qcqp.iter().zip(&via_dp) {
            assert!((a[0] - b[0]).abs() < 1e-5, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn alternating_fit_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let prm = SmoothnessParams::new(0.5, 2.0).unwrap();
    for _ in 0..3 {
        let mu = DiscreteMeasure::uniform(random_points(&mut rng, 12, 2, 1.0)).unwrap();
        let nu = DiscreteMeasure::uniform(random_points(&mut rng, 12, 2, 3.0)).unwrap();
        let fit = fit_map(&mu, &nu, &CostFunction::SquaredEuclidean, &prm, &Partition::single(12), &FitOptions::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{:?}", fit.trace);
        assert!(check_interpolable(&fit.witness));
        assert!(fit.witness.strong_monotonicity_gap() >= -1e-8);
        // The map is applied at data atoms through the bounds.
        let map = ConvexGradientMap::new(fit.witness.clone());
        let g0 = map.eval(&mu.points()[0]).unwrap();
        for k in 0..2 {
            assert!((g0[k] - fit.witness.gradients()[0][k]).abs() < 1e-5);
        }
    }
}

#[test]
fn partitioned_fit_decouples_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pts = random_points(&mut rng, 10, 2, 1.0);
    for p in &mut pts {
        if p[0] == 0.0 {
            p[0] = 0.1;
        }
    }
    let mu = DiscreteMeasure::uniform(pts.clone()).unwrap();
    let nu = DiscreteMeasure::uniform(random_points(&mut rng, 10, 2, 2.0)).unwrap();
    let rule = CellRule::AxisThresholds {
        axis: 0,
        thresholds: vec![0.0],
    };
    let part = Partition::from_rule(rule, &pts).unwrap();
    let prm = SmoothnessParams::new(0.0, 1.0).unwrap();
    let split = fit_map(&mu, &nu, &CostFunction::SquaredEuclidean, &prm, &part, &FitOptions::default()).unwrap();
    let whole = fit_map(&mu, &nu, &CostFunction::SquaredEuclidean, &prm, &Partition::single(10), &FitOptions::default()).unwrap();
    assert!(check_interpolable(&split.witness));
    // A larger class fits at least as well, up to the local nature of alternating minimisation.
    assert!(*split.trace.last().unwrap() <= whole.trace[0] + 1e-7);
    let map = ConvexGradientMap::new(split.witness);
    assert!(map.eval(&[0.0, 0.3]).is_err());
    assert!(map.eval(&[0.5, 0.3]).is_ok());
}

#[test]
fn projector_output_is_interpolable() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mu = DiscreteMeasure::uniform(random_points(&mut rng, 9, 2, 1.0)).unwrap();
    let targets = random_points(&mut rng, 9, 2, 4.0);
    let prm = SmoothnessParams::new(0.1, 1.0).unwrap();
    let proj = ConvexGradientProjector::new(prm, Partition::single(9));
    let w = proj.project_witness(&mu, &targets).unwrap();
    assert!(check_interpolable(&w));
    let g = proj.project(&mu, &targets).unwrap();
    assert_eq!(g, w.gradients());
    // Projection of data already in the class is the identity.
    let inside: Vec<Vec<f64>> = mu.points().iter().map(|x| x.iter().map(|v| 0.5 * v).collect()).collect();
    let back = proj.project(&mu, &inside).unwrap();
    for (a, b) in back.iter().zip(&inside) {
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-6);
        }
    }
}
