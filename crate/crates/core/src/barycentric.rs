//! Barycentric projection of a coupling and the `L²` decomposition that turns
//! the fixed-plan map problem into a projection.

use std::io::Write;

use crate::config::TOLERANCES;
use crate::measure::{Coupling, DiscreteMeasure};
use crate::quantile1d::project_monotone_lipschitz;
use crate::{Error, Result};

/// `π̄(x_i) = Σ_j π_ij y_j / a_i` on the atoms with positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricMap {
    values: Vec<Option<Vec<f64>>>,
    weights: Vec<f64>,
    dim: usize,
}

impl BarycentricMap {
    /// Value at atom `i`; zero-mass atoms have none.
    pub fn value(&self, i: usize) -> Result<&[f64]> {
        match self.values.get(i) {
            Some(Some(v)) => Ok(v),
            Some(None) => Err(Error::ZeroMassRow(i)),
            None => Err(Error::DimensionMismatch {
                context: "barycentric atom index",
                expected: self.values.len(),
                found: i,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of zero-mass atoms excluded from the domain.
    pub fn dropped(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i].is_none()).collect()
    }

    /// All values, with `fill` standing in at dropped atoms.
    pub fn values_or(&self, fill: &[f64]) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|v| v.clone().unwrap_or_else(|| fill.to_vec()))
            .collect()
    }

    /// Weighted mean `Σ a_i π̄(x_i)`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (v, w) in self.values.iter().zip(&self.weights) {
            if let Some(v) = v {
                for (mk, vk) in m.iter_mut().zip(v) {
                    *mk += w * vk;
                }
            }
        }
        m
    }

    /// One CSV row per atom: index then value coordinates; dropped atoms omitted.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut header = vec!["atom".to_string()];
        header.extend((0..self.dim).map(|k| format!("v{k}")));
        let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<f64>> = self
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                v.as_ref().map(|v| {
                    let mut r = vec![i as f64];
                    r.extend(v);
                    r
                })
            })
            .collect();
        crate::io::write_table_csv(&refs, &rows, writer)
    }
}

/// Conditional mean of the target given each source atom.
pub fn barycentric_projection(pi: &Coupling, nu_points: &[Vec<f64>]) -> Result<BarycentricMap> {
    let (n, m) = pi.shape();
    if nu_points.len() != m {
        return Err(Error::DimensionMismatch {
            context: "barycentric target points",
            expected: m,
            found: nu_points.len(),
        });
    }
    let dim = nu_points.first().map_or(0, |p| p.len());
    let mat = pi.matrix();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let row_mass: f64 = mat.row(i).sum();
        if row_mass <= 0.0 {
            values.push(None);
            continue;
        }
        let mut v = vec![0.0; dim];
        for (j, y) in nu_points.iter().enumerate() {
            let p = mat[(i, j)];
            if p != 0.0 {
                for (vk, yk) in v.iter_mut().zip(y) {
                    *vk += p * yk;
                }
            }
        }
        for vk in &mut v {
            *vk /= row_mass;
        }
        values.push(Some(v));
    }
    Ok(BarycentricMap {
        values,
        weights: pi.row_marginal().to_vec(),
        dim,
    })
}

/// The three terms of `∫‖f − y‖² dπ = ∫‖f − π̄‖² dμ + ∫‖y − π̄‖² dπ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub lhs: f64,
    pub proj_term: f64,
    pub residual_term: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Evaluates the three terms and asserts both the decomposition and
/// `residual = m₂(ν) − m₂(π̄#μ)`.
pub fn l2_decomposition_check(pi: &Coupling, nu_points: &[Vec<f64>], f: &[Vec<f64>]) -> Result<Decomposition> {
    let (n, m) = pi.shape();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            context: "decomposition values",
            expected: n,
            found: f.len(),
        });
    }
    let bar = barycentric_projection(pi, nu_points)?;
    let mat = pi.matrix();
    let (mut lhs, mut proj, mut resid) = (0.0, 0.0, 0.0);
    let (mut m2_nu, mut m2_bar) = (0.0, 0.0);
    for j in 0..m {
        m2_nu += pi.col_marginal()[j] * sq_norm(&nu_points[j]);
    }
    for i in 0..n {
        let Ok(b) = bar.value(i) else { continue };
        let a = bar.weights[i];
        proj += a * sq_dist(&f[i], b);
        m2_bar += a * sq_norm(b);
        for j in 0..m {
            let p = mat[(i, j)];
            if p != 0.0 {
                lhs += p * sq_dist(&f[i], &nu_points[j]);
                resid += p * sq_dist(&nu_points[j], b);
            }
        }
    }
    let tol = &TOLERANCES;
    if !tol.values_agree(lhs, proj + resid) {
        return Err(Error::IdentityViolated {
            what: "L2 decomposition",
            gap: (lhs - proj - resid).abs(),
        });
    }
    // The moment identity cancels terms of size m₂(ν); scale the tolerance accordingly.
    let gap = (resid - (m2_nu - m2_bar)).abs();
    if gap > tol.value_abs + tol.value_rel * m2_nu.abs().max(resid.abs()) {
        return Err(Error::IdentityViolated {
            what: "residual second-moment identity",
            gap,
        });
    }
    Ok(Decomposition {
        lhs,
        proj_term: proj,
        residual_term: resid,
    })
}

/// An `L²(μ)` projection onto a map class, restricted to the atoms.
pub trait L2Projector {
    fn project(&self, mu: &DiscreteMeasure, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

/// The unconstrained class.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unconstrained;

impl L2Projector for Unconstrained {
    fn project(&self, _mu: &DiscreteMeasure, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(values.to_vec())
    }
}

/// Nondecreasing 1D maps with slopes in `[ell, lip]`.
#[derive(Debug, Clone, Copy)]
pub struct MonotoneLipschitz1d {
    pub ell: f64,
    pub lip: f64,
}

impl L2Projector for MonotoneLipschitz1d {
    fn project(&self, mu: &DiscreteMeasure, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let t: Vec<f64> = values.iter().map(|v| v[0]).collect();
        let g = project_monotone_lipschitz(mu, &t, self.lip, self.ell)?;
        Ok(g.into_iter().map(|v| vec![v]).collect())
    }
}

/// `projector(π̄)`, the minimiser of the fixed-plan objective over the class.
/// Zero-mass atoms enter the projection with the mean of `ν` as placeholder
/// target; their weight is zero so the placeholder does not affect the fit.
pub fn constrained_barycentric_fit(
    mu: &DiscreteMeasure,
    pi: &Coupling,
    nu_points: &[Vec<f64>],
    projector: &dyn L2Projector,
) -> Result<Vec<Vec<f64>>> {
    let bar = barycentric_projection(pi, nu_points)?;
    let fill = bar.mean();
    projector.project(mu, &bar.values_or(&fill))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn product_coupling_gives_target_mean() {
        let a = [0.2, 0.8];
        let b = [0.5, 0.25, 0.25];
        let ys = vec![vec![0.0, 1.0], vec![2.0, 0.0], vec![4.0, -2.0]];
        let pi = Coupling::product(&a, &b).unwrap();
        let bar = barycentric_projection(&pi, &ys).unwrap();
        for i in 0..2 {
            let v = bar.value(i).unwrap();
            assert!((v[0] - 1.5).abs() < 1e-15 && (v[1] - 0.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matching_gives_matched_targets() {
        let w = [1.0 / 3.0; 3];
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]) / 3.0;
        let pi = Coupling::new(perm, &w, &w).unwrap();
        let ys = vec![vec![7.0], vec![8.0], vec![9.0]];
        let bar = barycentric_projection(&pi, &ys).unwrap();
        assert!((bar.value(0).unwrap()[0] - 8.0).abs() < 1e-14);
        assert!((bar.value(2).unwrap()[0] - 7.0).abs() < 1e-14);
        let d = l2_decomposition_check(&pi, &ys, &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(d.residual_term.abs() < 1e-12);
    }

    #[test]
    fn zero_mass_rows_are_dropped() {
        let pi = Coupling::new(DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), &[1.0, 0.0], &[1.0]).unwrap();
        let bar = barycentric_projection(&pi, &[vec![3.0]]).unwrap();
        assert_eq!(bar.dropped(), vec![1]);
        assert!(matches!(bar.value(1), Err(Error::ZeroMassRow(1))));
    }

    #[test]
    fn decomposition_at_the_barycentre() {
        let a = [0.5, 0.5];
        let b = [0.25, 0.75];
        let pi = Coupling::new(DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.0, 0.5]), &a, &b).unwrap();
        let ys = vec![vec![0.0], vec![4.0]];
        let bar = barycentric_projection(&pi, &ys).unwrap();
        let f = bar.values_or(&[0.0]);
        let d = l2_decomposition_check(&pi, &ys, &f).unwrap();
        assert!(d.proj_term.abs() < 1e-15);
        assert!((d.lhs - d.residual_term).abs() < 1e-15);
        // Row 0 splits mass between 0 and 4: variance 4 at weight ½.
        assert!((d.residual_term - 2.0).abs() < 1e-15);
    }
}
