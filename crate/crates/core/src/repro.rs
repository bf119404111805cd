//! Scripted constructions with hard assertions: a 1D family with no minimiser,
//! a 2D case where the barycentric fit and the map problem disagree, and a
//! 1D cross-check of the alternating solver against the closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barycentric::barycentric_projection;
use crate::cvxgrad::{fit_map, FitOptions, Partition, SmoothnessParams};
use crate::measure::{pushforward, DiscreteMeasure, DistributionSpec, PointMap};
use crate::otcore::{optimal_plan, transport_cost};
use crate::quantile1d::{monotone_plan, solve_map_1d, w2_1d};
use crate::{CostFunction, Error, Result};

fn fail(msg: String) -> Error {
    Error::Assertion(msg)
}

/// `x − 1` left of `−ε`, `x + 1` right of `ε`, linear in between.
pub fn g_eps(eps: f64, x: f64) -> f64 {
    if x <= -eps {
        x - 1.0
    } else if x >= eps {
        x + 1.0
    } else {
        (1.0 + eps) / eps * x
    }
}

/// `n` atoms at the midpoint quantiles of `U([−1, 1])`.
pub fn uniform_source(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect()
}

/// `n` atoms at the midpoint quantiles of `½U([−2, −1]) + ½U([1, 2])`.
pub fn split_target(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            if t < 0.5 {
                -2.0 + 2.0 * t
            } else {
                2.0 * t
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExistenceRow {
    pub eps: f64,
    pub w2: f64,
    /// `ε/3`, the continuum value.
    pub continuum: f64,
    pub mass_left: f64,
    pub mass_middle: f64,
    pub mass_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub n: usize,
    pub mass_tolerance: f64,
    pub rows: Vec<ExistenceRow>,
}

impl ExistenceReport {
    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| vec![r.eps, r.w2, r.continuum, r.mass_left, r.mass_middle, r.mass_right])
            .collect();
        crate::io::write_table_csv(&["eps", "w2", "continuum", "mass_left", "mass_middle", "mass_right"], &rows, writer)
    }
}

/// `W₂²(g_ε#μ, ν)` along a strictly decreasing `ε` list, with `μ`, `ν`
/// discretised at `n` atoms. Fails unless the values strictly decrease and
/// the image masses on `[−2, −1−ε]`, `(−1−ε, 1+ε)`, `[1+ε, 2]` are within
/// `2/√n` of `(1−ε)/2`, `ε`, `(1−ε)/2`.
pub fn existence_counterexample(eps: &[f64], n: usize) -> Result<ExistenceReport> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!("need n >= 100 atoms, got {n}")));
    }
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter("every eps must lie in (0, 1)".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("eps list must be strictly decreasing".into()));
    }
    let xs = uniform_source(n);
    let nu = DiscreteMeasure::from_scalars(&split_target(n), vec![1.0 / n as f64; n])?;
    let tol = 2.0 / (n as f64).sqrt();
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let img: Vec<f64> = xs.iter().map(|&x| g_eps(e, x)).collect();
        let frac = |f: &dyn Fn(f64) -> bool| img.iter().filter(|&&v| f(v)).count() as f64 / n as f64;
        let row = ExistenceRow {
            eps: e,
            w2: w2_1d(&DiscreteMeasure::from_scalars(&img, vec![1.0 / n as f64; n])?, &nu)?,
            continuum: e / 3.0,
            mass_left: frac(&|v| v <= -1.0 - e),
            mass_middle: frac(&|v| v > -1.0 - e && v < 1.0 + e),
            mass_right: frac(&|v| v >= 1.0 + e),
        };
        let side = (1.0 - e) / 2.0;
        for (name, got, want) in [("left", row.mass_left, side), ("middle", row.mass_middle, e), ("right", row.mass_right, side)] {
            if (got - want).abs() > tol {
                return Err(fail(format!("eps {e}: {name} mass {got} vs {want} (tolerance {tol})")));
            }
        }
        rows.push(row);
    }
    for w in rows.windows(2) {
        if w[1].w2 >= w[0].w2 {
            return Err(fail(format!(
                "W2^2 did not decrease from eps {} ({}) to eps {} ({})",
                w[0].eps, w[0].w2, w[1].eps, w[1].w2
            )));
        }
    }
    Ok(ExistenceReport {
        n,
        mass_tolerance: tol,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub plan: Vec<Vec<f64>>,
    pub barycentre_origin: Vec<f64>,
    pub barycentre_shifted: Vec<f64>,
    /// `W₂²(π̄*#μ, ν)`.
    pub barycentric_cost: f64,
    /// `(a² + b²)/6`.
    pub barycentric_expected: f64,
    /// `W₂²(g#μ, ν)` for `g(0,0) = (0,0)`, `g(x,0) = (0,b)`.
    pub alternative_cost: f64,
    /// `a²/3`.
    pub alternative_expected: f64,
    /// `⟨g(0,0) − g(x,0), (0,0) − (x,0)⟩`.
    pub alternative_monotonicity: f64,
    pub barycentric_monotonicity: f64,
}

/// Two-atom measures `μ = ⅔δ_(0,0) + ⅓δ_(x,0)`, `ν = ⅔δ_(0,0) + ⅓δ_(−a,b)`.
/// The monotone map nearest to `π̄*` in `L²(μ)` is `π̄*` itself, yet another
/// monotone map reaches a strictly smaller transport cost.
pub fn counterexample_2d(a: f64, b: f64, x: f64) -> Result<CounterexampleReport> {
    if !(a > 0.0 && b > 0.0 && x > 0.0) {
        return Err(Error::InvalidParameter("a, b, x must be positive".into()));
    }
    let w = vec![2.0 / 3.0, 1.0 / 3.0];
    let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![x, 0.0]], w.clone())?;
    let nu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![-a, b]], w)?;
    let c = CostFunction::SquaredEuclidean;
    let (plan, _) = optimal_plan(&mu, &nu, &c)?;
    let third = 1.0 / 3.0;
    let expected = [[third, third], [third, 0.0]];
    for (i, row) in expected.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if (plan.matrix()[(i, j)] - v).abs() > 1e-12 {
                return Err(fail(format!("optimal plan entry ({i}, {j}) = {}, expected {v}", plan.matrix()[(i, j)])));
            }
        }
    }
    let bar = barycentric_projection(&plan, nu.points())?;
    let (b0, b1) = (bar.value(0)?.to_vec(), bar.value(1)?.to_vec());
    let close = |u: &[f64], v: [f64; 2]| (u[0] - v[0]).abs() <= 1e-12 && (u[1] - v[1]).abs() <= 1e-12;
    if !close(&b0, [-a / 2.0, b / 2.0]) || !close(&b1, [0.0, 0.0]) {
        return Err(fail(format!("barycentric values {b0:?}, {b1:?}")));
    }
    let bar_image = DiscreteMeasure::new(vec![b0.clone(), b1.clone()], mu.weights().to_vec())?;
    let barycentric_cost = transport_cost(&bar_image, &nu, &c)?;
    let barycentric_expected = (a * a + b * b) / 6.0;
    if (barycentric_cost - barycentric_expected).abs() > 1e-9 {
        return Err(fail(format!("barycentric cost {barycentric_cost}, expected {barycentric_expected}")));
    }
    let g = move |p: &[f64]| if p[0] == 0.0 { vec![0.0, 0.0] } else { vec![0.0, b] };
    let alt_image = pushforward(&mu, &g)?;
    let alternative_cost = transport_cost(&alt_image, &nu, &c)?;
    let alternative_expected = a * a / 3.0;
    if (alternative_cost - alternative_expected).abs() > 1e-9 {
        return Err(fail(format!("alternative cost {alternative_cost}, expected {alternative_expected}")));
    }
    let inner = |u: &[f64], v: &[f64]| (u[0] - v[0]) * (0.0 - x) + (u[1] - v[1]) * 0.0;
    let alternative_monotonicity = inner(&g(&[0.0, 0.0]), &g(&[x, 0.0]));
    let barycentric_monotonicity = inner(&b0, &b1);
    if alternative_monotonicity < 0.0 || barycentric_monotonicity < 0.0 {
        return Err(fail("a compared map is not monotone".into()));
    }
    if alternative_cost >= barycentric_cost {
        return Err(fail("no strict gap between the two maps".into()));
    }
    Ok(CounterexampleReport {
        a,
        b,
        x,
        plan: (0..2).map(|i| (0..2).map(|j| plan.matrix()[(i, j)]).collect()).collect(),
        barycentre_origin: b0,
        barycentre_shifted: b1,
        barycentric_cost,
        barycentric_expected,
        alternative_cost,
        alternative_expected,
        alternative_monotonicity,
        barycentric_monotonicity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub instance: usize,
    pub n: usize,
    pub m: usize,
    pub closed_form: f64,
    pub alternating: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equivalence1dReport {
    pub seed: u64,
    pub ell: f64,
    pub lip: f64,
    pub tolerance: f64,
    pub rows: Vec<EquivalenceRow>,
}

impl Equivalence1dReport {
    pub fn max_gap(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.gap))
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| vec![r.instance as f64, r.n as f64, r.m as f64, r.closed_form, r.alternating, r.gap])
            .collect();
        crate::io::write_table_csv(&["instance", "n", "m", "closed_form", "alternating", "gap"], &rows, writer)
    }
}

/// Random 1D measure with `n` atoms in `[0, spread)` and integer-ratio weights.
pub fn random_measure_1d(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Result<DiscreteMeasure> {
    let xs: Vec<f64> = (0..n).map(|_| spread * rng.random::<f64>()).collect();
    let nums: Vec<u32> = (0..n).map(|_| rng.random_range(1..=6)).collect();
    let den: u32 = nums.iter().sum();
    DiscreteMeasure::from_scalars(&xs, nums.iter().map(|&k| k as f64 / den as f64).collect())
}

/// One instance: closed-form 1D solution vs the alternating solver.
pub fn compare_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, lip: f64, ell: f64) -> Result<(f64, f64)> {
    let exact = solve_map_1d(mu, nu, lip, ell)?;
    let prm = SmoothnessParams::new(ell, lip)?;
    let fit = fit_map(
        mu,
        nu,
        &CostFunction::SquaredEuclidean,
        &prm,
        &Partition::single(mu.len()),
        &FitOptions::default(),
    )?;
    let alt = *fit.trace.last().expect("fit records at least one step");
    Ok((exact.objective, alt))
}

/// `instances` random pairs with `n ≤ max_n`, `m ≤ max_m` atoms; fails if any
/// objective gap exceeds `1e-5`.
pub fn equivalence_1d_demo(instances: usize, max_n: usize, max_m: usize, lip: f64, ell: f64, seed: u64) -> Result<Equivalence1dReport> {
    if max_n < 2 || max_m < 1 {
        return Err(Error::InvalidParameter("need max_n >= 2 and max_m >= 1".into()));
    }
    let tolerance = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(instances);
    for instance in 0..instances {
        let n = rng.random_range(2..=max_n);
        let m = rng.random_range(1..=max_m);
        let mu = random_measure_1d(&mut rng, n, 4.0)?;
        let nu = random_measure_1d(&mut rng, m, 8.0)?;
        let (closed_form, alternating) = compare_1d(&mu, &nu, lip, ell)?;
        let gap = (closed_form - alternating).abs();
        rows.push(EquivalenceRow {
            instance,
            n,
            m,
            closed_form,
            alternating,
            gap,
        });
        if gap > tolerance {
            return Err(fail(format!("instance {instance}: closed form {closed_form} vs alternating {alternating}")));
        }
    }
    Ok(Equivalence1dReport {
        seed,
        ell,
        lip,
        tolerance,
        rows,
    })
}

/// `½U([2, 4]) + ½U([6, 8])`.
pub fn two_block_target() -> DistributionSpec {
    DistributionSpec::even_mixture(vec![
        DistributionSpec::uniform_interval(2.0, 4.0),
        DistributionSpec::uniform_interval(6.0, 8.0),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzLevelsReport {
    pub n: usize,
    pub seed: u64,
    pub lips: Vec<f64>,
    /// `W₂²(g_L#μ, ν)` per level.
    pub objectives: Vec<f64>,
    /// `W₂²(π̄#μ, ν)` for the monotone plan `π`, the `L → ∞` limit.
    pub barycentric_cost: f64,
    /// Sorted source atoms.
    pub xs: Vec<f64>,
    /// One column of map values per level, then the barycentric map.
    pub columns: Vec<Vec<f64>>,
}

impl LipschitzLevelsReport {
    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut header = vec!["x".to_string()];
        header.extend(self.lips.iter().map(|l| format!("g_L{l}")));
        header.push("barycentric".into());
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = (0..self.xs.len())
            .map(|i| std::iter::once(self.xs[i]).chain(self.columns.iter().map(|c| c[i])).collect())
            .collect();
        crate::io::write_table_csv(&h, &rows, writer)
    }
}

/// `μ = U([−1, 1])` and the two-block target, `n` samples each, solved in
/// 1D at each Lipschitz level with `ell = 0`. Objectives must not increase
/// with `L`.
pub fn lipschitz_levels_1d(n: usize, lips: &[f64], seed: u64) -> Result<LipschitzLevelsReport> {
    if n == 0 || lips.is_empty() {
        return Err(Error::InvalidParameter("need samples and at least one level".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = DistributionSpec::uniform_interval(-1.0, 1.0).sample_measure(n, &mut rng)?;
    let nu = two_block_target().sample_measure(n, &mut rng)?;
    let mut order: Vec<usize> = (0..n).collect();
    let raw = mu.scalars()?;
    order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
    let xs: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let mut objectives = Vec::new();
    let mut columns = Vec::new();
    for &lip in lips {
        let sol = solve_map_1d(&mu, &nu, lip, 0.0)?;
        objectives.push(sol.objective);
        columns.push(xs.iter().map(|&x| sol.map.eval(&[x]).map(|v| v[0])).collect::<Result<Vec<_>>>()?);
    }
    let plan = monotone_plan(&mu, &nu)?;
    let bar = barycentric_projection(&plan, nu.points())?;
    columns.push(order.iter().map(|&i| bar.value(i).map(|v| v[0])).collect::<Result<Vec<_>>>()?);
    let bar_image = DiscreteMeasure::new(bar.values_or(&[0.0]), mu.weights().to_vec())?;
    let mut sorted: Vec<(f64, f64)> = lips.iter().copied().zip(objectives.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[1].1 > w[0].1 + 1e-9) {
        return Err(fail(format!("objective increased with L: {sorted:?}")));
    }
    Ok(LipschitzLevelsReport {
        n,
        seed,
        lips: lips.to_vec(),
        objectives,
        barycentric_cost: w2_1d(&bar_image, &nu)?,
        xs,
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_eps_is_continuous_and_nondecreasing() {
        for eps in [0.5, 1.0 / 3.0, 0.01] {
            assert!((g_eps(eps, -eps) - (-1.0 - eps)).abs() < 1e-15);
            assert!((g_eps(eps, eps) - (1.0 + eps)).abs() < 1e-15);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=200 {
                let v = g_eps(eps, -1.0 + k as f64 / 100.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn discretisations_hit_the_right_supports() {
        let t = split_target(1000);
        assert!(t.iter().all(|&v| (-2.0..=-1.0).contains(&v) || (1.0..=2.0).contains(&v)));
        assert_eq!(t.iter().filter(|&&v| v < 0.0).count(), 500);
        let s = uniform_source(4);
        assert_eq!(s, vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn two_atom_gap_numbers() {
        let r = counterexample_2d(1.0, 10.0, 1.0).unwrap();
        assert!((r.barycentric_cost - 101.0 / 6.0).abs() < 1e-9);
        assert!((r.alternative_cost - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.barycentre_origin, vec![-0.5, 5.0]);
        assert_eq!(r.alternative_monotonicity, 0.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(existence_counterexample(&[0.5, 0.25], 50).is_err());
        assert!(existence_counterexample(&[0.25, 0.5], 200).is_err());
        assert!(existence_counterexample(&[1.5], 200).is_err());
        assert!(counterexample_2d(0.0, 1.0, 1.0).is_err());
    }
}
