//! Approximating a coupling `γ ∈ Π(μ, ν)` by the graph measure `(I, g)#μ`
//! under a cost on the product space `ℝ^k × ℝ^d`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measure::{map_atoms, Coupling, DiscreteMeasure, PointMap};
use crate::otcore::{map_problem_cost, solve_kantorovich};
use crate::{CostFunction, Error, Result};

/// `h(u, v)` joining the source and target costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Combiner {
    Sum,
    Max,
    /// `(u^{1/q} + v^{1/q})^q`.
    PowerSum { q: f64 },
}

impl Combiner {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Combiner::Sum => u + v,
            Combiner::Max => u.max(v),
            Combiner::PowerSum { q } => (u.powf(1.0 / q) + v.powf(1.0 / q)).powf(q),
        }
    }
}

/// `C((x₁, x₂), (y₁, y₂)) = h(c₁(x₁, y₁), c₂(x₂, y₂))` with `x₁ ∈ ℝ^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeparableProductCost {
    pub combiner: Combiner,
    pub c1: CostFunction,
    pub c2: CostFunction,
    pub source_dim: usize,
}

/// A cost on concatenated vectors `(x, y) ∈ ℝ^{k+d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "camelCase")]
pub enum ProductCost {
    Separable(SeparableProductCost),
    /// Any cost on the concatenation, e.g. a Mahalanobis form with coupled
    /// blocks. Carries no equivalence guarantee.
    Joint { cost: CostFunction, source_dim: usize },
}

const GRID: [f64; 9] = [0.0, 1e-3, 0.1, 0.5, 1.0, 2.0, 3.7, 10.0, 1e3];

/// Checks `h(u, v) ≥ v` and `h(0, v) = v` on a fixed grid, then wraps the cost.
pub fn lift_cost(spec: SeparableProductCost) -> Result<ProductCost> {
    if spec.source_dim == 0 {
        return Err(Error::InvalidParameter("source block must be nonempty".into()));
    }
    if let Combiner::PowerSum { q } = spec.combiner {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidParameter(format!("power-sum exponent must be > 0, got {q}")));
        }
    }
    spec.c1.validate()?;
    spec.c2.validate()?;
    for &v in &GRID {
        let h0 = spec.combiner.eval(0.0, v);
        if (h0 - v).abs() > 1e-12 * (1.0 + v) {
            return Err(Error::InvalidParameter(format!("combiner h(0, {v}) = {h0} differs from {v}")));
        }
        for &u in &GRID {
            let h = spec.combiner.eval(u, v);
            if h < v * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!("combiner h({u}, {v}) = {h} below {v}")));
            }
        }
    }
    // c₁(x, x) = 0 holds for every supported cost; probe it anyway.
    let probe: Vec<f64> = (0..spec.source_dim).map(|k| 0.3 * k as f64 - 1.0).collect();
    if spec.c1.eval(&probe, &probe) != 0.0 {
        return Err(Error::InvalidParameter("source cost must vanish on the diagonal".into()));
    }
    Ok(ProductCost::Separable(spec))
}

impl ProductCost {
    pub fn source_dim(&self) -> usize {
        match self {
            ProductCost::Separable(s) => s.source_dim,
            ProductCost::Joint { source_dim, .. } => *source_dim,
        }
    }

    /// Whether the separable structure ties the plan and map problems.
    pub fn is_compliant(&self) -> bool {
        matches!(self, ProductCost::Separable(_))
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ProductCost::Separable(s) => {
                let k = s.source_dim;
                s.combiner.eval(s.c1.eval(&a[..k], &b[..k]), s.c2.eval(&a[k..], &b[k..]))
            }
            ProductCost::Joint { cost, .. } => cost.eval(a, b),
        }
    }

    fn matrix(&self, src: &[Vec<f64>], tgt: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let dim = src[0].len();
        if dim <= self.source_dim() {
            return Err(Error::DimensionMismatch {
                context: "product-space atoms vs source block",
                expected: self.source_dim() + 1,
                found: dim,
            });
        }
        if let ProductCost::Joint { cost, .. } = self {
            if let Some(cd) = cost.dim() {
                if cd != dim {
                    return Err(Error::DimensionMismatch {
                        context: "joint cost dimension",
                        expected: cd,
                        found: dim,
                    });
                }
            }
        }
        let rows: Vec<Vec<f64>> = src.par_iter().map(|a| tgt.iter().map(|b| self.eval(a, b)).collect()).collect();
        let m = DMatrix::from_fn(src.len(), tgt.len(), |i, j| rows[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("product cost matrix".into()));
        }
        Ok(m)
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

/// `(I, g)#μ` with atoms `(x_i, g(x_i))`.
pub fn graph_measure(mu: &DiscreteMeasure, g: &dyn PointMap) -> Result<DiscreteMeasure> {
    let images = map_atoms(mu, g)?;
    let points = mu.points().iter().zip(&images).map(|(x, y)| concat(x, y)).collect();
    DiscreteMeasure::new(points, mu.weights().to_vec())
}

/// The coupling as a measure on `ℝ^{k+d}`, one atom per nonzero entry.
pub fn coupling_measure(mu: &DiscreteMeasure, nu: &DiscreteMeasure, gamma: &Coupling) -> Result<DiscreteMeasure> {
    check_marginals(mu, nu, gamma)?;
    let entries = gamma.to_triplets();
    let points = entries.iter().map(|e| concat(mu.point(e.i), nu.point(e.j))).collect();
    DiscreteMeasure::new(points, entries.iter().map(|e| e.mass).collect())
}

fn check_marginals(mu: &DiscreteMeasure, nu: &DiscreteMeasure, gamma: &Coupling) -> Result<()> {
    let (n, m) = gamma.shape();
    if n != mu.len() || m != nu.len() {
        return Err(Error::DimensionMismatch {
            context: "coupling shape vs measures",
            expected: mu.len() * nu.len(),
            found: n * m,
        });
    }
    // Re-validating against the measure weights catches plans built for
    // other marginals.
    Coupling::new(gamma.matrix().clone(), mu.weights(), nu.weights()).map(|_| ())
}

/// `T_C((I, g)#μ, γ)`.
pub fn plan_distance(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    g: &dyn PointMap,
    gamma: &Coupling,
    cost: &ProductCost,
) -> Result<f64> {
    let graph = graph_measure(mu, g)?;
    let plan = coupling_measure(mu, nu, gamma)?;
    if graph.dim() != plan.dim() {
        return Err(Error::DimensionMismatch {
            context: "map output vs target dimension",
            expected: plan.dim(),
            found: graph.dim(),
        });
    }
    let m = cost.matrix(graph.points(), plan.points())?;
    Ok(solve_kantorovich(graph.weights(), plan.weights(), &m)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// `T_{c₂}(g#μ, ν)`; for joint costs the restriction to the target block.
    pub lhs: f64,
    /// `T_C((I, g)#μ, γ)`.
    pub rhs: f64,
    pub gap: f64,
    pub compliant: bool,
    /// `|lhs − rhs| ≤ 1e-8 (1 + |lhs|)`.
    pub equal: bool,
}

/// Compares the map-problem and plan-problem values.
///
/// For separable costs `rhs ≥ lhs` for every `γ ∈ Π(μ, ν)`, with equality when
/// `γ` is optimal for `(x, y) ↦ c₂(g(x), y)`; a violation of the inequality is
/// an error. Equality for other couplings is reported, not required: with
/// `μ = ν = ½δ₀ + ½δ₁`, `g = I` and the anti-diagonal `γ`, `lhs = 0` and
/// `rhs = 1`. Joint costs are reported without any check.
pub fn equivalence_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    g: &dyn PointMap,
    gamma: &Coupling,
    cost: &ProductCost,
) -> Result<EquivalenceReport> {
    let rhs = plan_distance(mu, nu, g, gamma, cost)?;
    let lhs = match cost {
        ProductCost::Separable(s) => map_problem_cost(mu, nu, g, &s.c2)?,
        ProductCost::Joint { cost, source_dim } => {
            let images = map_atoms(mu, g)?;
            let zeros = vec![0.0; *source_dim];
            let src: Vec<Vec<f64>> = images.iter().map(|y| concat(&zeros, y)).collect();
            let tgt: Vec<Vec<f64>> = nu.points().iter().map(|y| concat(&zeros, y)).collect();
            let rows: Vec<Vec<f64>> = src.iter().map(|a| tgt.iter().map(|b| cost.eval(a, b)).collect()).collect();
            let m = DMatrix::from_fn(src.len(), tgt.len(), |i, j| rows[i][j]);
            solve_kantorovich(mu.weights(), nu.weights(), &m)?.1
        }
    };
    let tol = 1e-8 * (1.0 + lhs.abs());
    let compliant = cost.is_compliant();
    if compliant && rhs < lhs - tol {
        return Err(Error::IdentityViolated {
            what: "plan cost below map cost for a separable cost",
            gap: lhs - rhs,
        });
    }
    let gap = (lhs - rhs).abs();
    Ok(EquivalenceReport {
        lhs,
        rhs,
        gap,
        compliant,
        equal: gap <= tol,
    })
}

/// An optimal plan for `(x, y) ↦ c(g(x), y)`: the coupling at which the plan
/// and map values coincide.
pub fn map_optimal_coupling(mu: &DiscreteMeasure, nu: &DiscreteMeasure, g: &dyn PointMap, c: &CostFunction) -> Result<Coupling> {
    let images = map_atoms(mu, g)?;
    let m = crate::otcore::CostMatrix::build(&images, nu.points(), c)?;
    Ok(solve_kantorovich(mu.weights(), nu.weights(), m.entries())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otcore::Norm;

    fn additive(k: usize) -> ProductCost {
        lift_cost(SeparableProductCost {
            combiner: Combiner::Sum,
            c1: CostFunction::SquaredEuclidean,
            c2: CostFunction::SquaredEuclidean,
            source_dim: k,
        })
        .unwrap()
    }

    #[test]
    fn additive_lift_is_the_full_squared_distance() {
        let c = additive(2);
        let a = [0.5, -1.0, 2.0];
        let b = [1.5, 0.0, -1.0];
        assert_eq!(c.eval(&a, &b), CostFunction::SquaredEuclidean.eval(&a, &b));
    }

    #[test]
    fn max_lift_of_sup_costs_is_the_product_sup_cost() {
        let sup = CostFunction::norm_power(3.0, Norm::LInf).unwrap();
        let c = lift_cost(SeparableProductCost {
            combiner: Combiner::Max,
            c1: sup.clone(),
            c2: sup.clone(),
            source_dim: 1,
        })
        .unwrap();
        let a = [0.2, 1.0, -0.4];
        let b = [-0.9, 0.5, 0.3];
        assert!((c.eval(&a, &b) - sup.eval(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn power_sum_lift_of_lp_costs() {
        // ‖·‖_p^{qp} with h(u, v) = (u^{1/q} + v^{1/q})^q.
        let (p, q) = (3.0, 0.7);
        let base = CostFunction::norm_power(q * p, Norm::Lp(p)).unwrap();
        let c = lift_cost(SeparableProductCost {
            combiner: Combiner::PowerSum { q },
            c1: base.clone(),
            c2: base.clone(),
            source_dim: 2,
        })
        .unwrap();
        let a = [0.2, 1.0, -0.4, 0.0];
        let b = [-0.9, 0.5, 0.3, 2.0];
        let full = base.eval(&a, &b);
        assert!((c.eval(&a, &b) - full).abs() < 1e-12 * full);
    }

    #[test]
    fn combiner_violations_are_rejected() {
        let bad = SeparableProductCost {
            combiner: Combiner::PowerSum { q: -1.0 },
            c1: CostFunction::SquaredEuclidean,
            c2: CostFunction::SquaredEuclidean,
            source_dim: 1,
        };
        assert!(lift_cost(bad).is_err());
    }

    #[test]
    fn graph_coupling_is_at_distance_zero() {
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let g = |x: &[f64]| vec![2.0 * x[0], -x[0]];
        let nu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![2.0, -1.0], vec![6.0, -3.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let gamma = Coupling::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.3, 0.5])), mu.weights(), nu.weights()).unwrap();
        assert_eq!(plan_distance(&mu, &nu, &g, &gamma, &additive(1)).unwrap(), 0.0);
    }

    #[test]
    fn crossed_coupling_is_strictly_above_the_map_cost() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let cross = Coupling::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]), &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let g = |x: &[f64]| x.to_vec();
        let r = equivalence_check(&mu, &mu, &g, &cross, &additive(1)).unwrap();
        assert_eq!((r.lhs, r.rhs, r.equal), (0.0, 1.0, false));
        let best = map_optimal_coupling(&mu, &mu, &g, &CostFunction::SquaredEuclidean).unwrap();
        assert!(equivalence_check(&mu, &mu, &g, &best, &additive(1)).unwrap().equal);
    }

    #[test]
    fn marginal_mismatch_is_rejected() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let nu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let gamma = Coupling::product(&[0.3, 0.7], &[0.5, 0.5]).unwrap();
        let g = |x: &[f64]| x.to_vec();
        assert!(plan_distance(&mu, &nu, &g, &gamma, &additive(1)).is_err());
    }
}
