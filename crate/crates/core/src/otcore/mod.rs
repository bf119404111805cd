//! Exact discrete optimal transport.
//!
//! [`solve_kantorovich`] returns an optimal vertex of the transportation
//! polytope; that vertex doubles as the Danskin subgradient of the optimal
//! value with respect to the cost matrix.

mod cost;
mod network_simplex;

use nalgebra::DMatrix;

use crate::config::TOLERANCES;
use crate::measure::{map_atoms, merge_duplicates, Coupling, DiscreteMeasure, PointMap};
use crate::{Error, Result};

pub use cost::{CostFunction, CostMatrix, Norm};
pub use network_simplex::{SimplexOptions, SimplexSolution};

fn check_weights(w: &[f64], what: &str) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::InvalidMeasure(format!("{what}: no weights")));
    }
    for (i, &v) in w.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{what} weight {i}")));
        }
        if v < 0.0 {
            return Err(Error::InvalidMeasure(format!("{what}: negative weight at {i}")));
        }
    }
    Ok(w.iter().sum())
}

/// Exact solver with explicit options.
pub fn solve_kantorovich_with(a: &[f64], b: &[f64], m: &DMatrix<f64>, opts: SimplexOptions) -> Result<(Coupling, f64)> {
    let (n, k) = m.shape();
    if n != a.len() {
        return Err(Error::DimensionMismatch {
            context: "cost matrix rows",
            expected: a.len(),
            found: n,
        });
    }
    if k != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cost matrix columns",
            expected: b.len(),
            found: k,
        });
    }
    if let Some(p) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cost entry ({}, {})", p % n, p / n)));
    }
    let sa = check_weights(a, "source")?;
    let sb = check_weights(b, "target")?;
    if (sa - sb).abs() > TOLERANCES.weight_sum * (1.0 + sa) {
        return Err(Error::InvalidMeasure(format!("marginal masses differ: {sa} vs {sb}")));
    }

    // Strip zero-weight lines, solve the reduced problem, re-embed.
    let rows: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..k).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidMeasure("zero total mass".into()));
    }
    let ra: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let rb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let mut rc = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            rc.push(m[(i, j)]);
        }
    }
    let sol = network_simplex::solve_transport(&ra, &rb, &rc, opts)?;
    let mut plan = DMatrix::zeros(n, k);
    let mc = cols.len();
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            plan[(i, j)] = sol.flow[ri * mc + cj];
        }
    }
    let coupling = Coupling::new(plan, a, b)?;
    // Same summation order as `Coupling::dot`, so plan and value agree exactly.
    let value = coupling.dot(m);
    Ok((coupling, value))
}

/// Optimal plan and value `min_{π ∈ Π(a,b)} π·M`.
pub fn solve_kantorovich(a: &[f64], b: &[f64], m: &DMatrix<f64>) -> Result<(Coupling, f64)> {
    solve_kantorovich_with(a, b, m, SimplexOptions::default())
}

/// One element of the subdifferential of `M ↦ W(a, b, M)`: an optimal plan.
/// Under ties the plan is the one selected by the deterministic pivot rule.
pub fn danskin_subgradient(a: &[f64], b: &[f64], m: &DMatrix<f64>) -> Result<Coupling> {
    Ok(solve_kantorovich(a, b, m)?.0)
}

/// Optimal plan between two measures for a ground cost.
pub fn optimal_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostFunction) -> Result<(Coupling, f64)> {
    let cm = CostMatrix::build(mu.points(), nu.points(), c)?;
    solve_kantorovich(mu.weights(), nu.weights(), cm.entries())
}

/// `T_c(μ, ν)`.
pub fn transport_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostFunction) -> Result<f64> {
    Ok(optimal_plan(mu, nu, c)?.1)
}

/// `T_c(g#μ, ν)`, evaluated two ways: on the merged image measure, and on the
/// support of `μ` with the cost `c(g(x), y)`. The routes must agree.
pub fn map_problem_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &dyn PointMap, c: &CostFunction) -> Result<f64> {
    let images = map_atoms(mu, g)?;
    let on_support = CostMatrix::build(&images, nu.points(), c)?;
    let (_, via_support) = solve_kantorovich(mu.weights(), nu.weights(), on_support.entries())?;

    let image = DiscreteMeasure::new(images, mu.weights().to_vec())?;
    let merged = merge_duplicates(&image, 0.0);
    let via_image = transport_cost(&merged, nu, c)?;

    if !TOLERANCES.values_agree(via_support, via_image) {
        return Err(Error::IdentityViolated {
            what: "change of variables for the map cost",
            gap: (via_support - via_image).abs(),
        });
    }
    Ok(via_support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell() {
        let m = DMatrix::from_element(1, 1, 5.0);
        let (p, v) = solve_kantorovich(&[1.0], &[1.0], &m).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(p.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn identity_matching_is_free() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (p, v) = solve_kantorovich(&[0.5, 0.5], &[0.5, 0.5], &m).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(p.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn constant_cost_gives_feasible_plan_at_constant_value() {
        let m = DMatrix::from_element(3, 4, 2.5);
        let a = [0.2, 0.3, 0.5];
        let b = [0.25; 4];
        let p = danskin_subgradient(&a, &b, &m).unwrap();
        assert!((p.dot(&m) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn dominant_diagonal_gives_unique_plan() {
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 + (i + j) as f64 });
        let a = [0.1, 0.2, 0.3, 0.4];
        let p = danskin_subgradient(&a, &a, &m).unwrap();
        assert_eq!(p.matrix(), &DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&a)));
    }

    #[test]
    fn zero_weight_lines_are_reinserted_empty() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 3.0, 1.0]);
        let (p, v) = solve_kantorovich(&[0.5, 0.0, 0.5], &[0.5, 0.5], &m).unwrap();
        assert_eq!(p.matrix().row(1).sum(), 0.0);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn input_errors() {
        let m = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            solve_kantorovich(&[1.0], &[0.5, 0.5], &m),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = m.clone();
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(solve_kantorovich(&[0.5, 0.5], &[0.5, 0.5], &bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn dirac_to_dirac() {
        let mu = DiscreteMeasure::dirac(vec![1.0, 2.0]).unwrap();
        let nu = DiscreteMeasure::dirac(vec![-1.0, 0.5]).unwrap();
        let v = transport_cost(&mu, &nu, &CostFunction::SquaredEuclidean).unwrap();
        assert!((v - (4.0 + 2.25)).abs() < 1e-15);
        assert_eq!(transport_cost(&mu, &mu, &CostFunction::SquaredEuclidean).unwrap(), 0.0);
    }

    #[test]
    fn counterexample_plan_and_alternative_map() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let nu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![-1.0, 10.0]], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let g = |x: &[f64]| if x[0] == 0.0 { vec![0.0, 0.0] } else { vec![0.0, 10.0] };
        let v = map_problem_cost(&mu, &nu, &g, &CostFunction::SquaredEuclidean).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_random_instance_satisfies_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 120;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let tgt: Vec<Vec<f64>> = (0..n + 7).map(|_| vec![rng.random::<f64>() + 0.5, rng.random()]).collect();
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let nu = DiscreteMeasure::uniform(tgt).unwrap();
        let (p, v) = optimal_plan(&mu, &nu, &CostFunction::SquaredEuclidean).unwrap();
        assert!(p.nonzero_count() <= mu.len() + nu.len() - 1);
        let cm = CostMatrix::build(mu.points(), nu.points(), &CostFunction::SquaredEuclidean).unwrap();
        assert!((p.dot(cm.entries()) - v).abs() < 1e-12);
    }
}
