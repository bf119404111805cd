use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Norm used by [`CostFunction::NormPower`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "r", rename_all = "camelCase")]
pub enum Norm {
    L2,
    LInf,
    /// General `ℓ_r` norm, `r ≥ 1`.
    Lp(f64),
}

impl Norm {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            Norm::L2 => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::LInf => z.iter().fold(0.0, |m, v| m.max(v.abs())),
            Norm::Lp(r) => z.iter().map(|v| v.abs().powf(r)).sum::<f64>().powf(1.0 / r),
        }
    }
}

/// Ground cost `c(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum CostFunction {
    /// `‖x − y‖₂²`.
    SquaredEuclidean,
    /// `(x − y)ᵀ P (x − y)` with `P` symmetric positive definite (rows).
    QuadraticForm { p: Vec<Vec<f64>> },
    /// `‖x − y‖^power` for the chosen norm.
    NormPower { power: f64, norm: Norm },
}

impl CostFunction {
    /// Validated quadratic-form cost.
    pub fn quadratic_form(p: &DMatrix<f64>) -> Result<Self> {
        let rows = (0..p.nrows())
            .map(|i| (0..p.ncols()).map(|j| p[(i, j)]).collect())
            .collect();
        let c = CostFunction::QuadraticForm { p: rows };
        c.validate()?;
        Ok(c)
    }

    pub fn norm_power(power: f64, norm: Norm) -> Result<Self> {
        let c = CostFunction::NormPower { power, norm };
        c.validate()?;
        Ok(c)
    }

    /// Checks parameters: `P` symmetric PD, `power > 0`, `r ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        match self {
            CostFunction::SquaredEuclidean => Ok(()),
            CostFunction::QuadraticForm { p } => {
                let d = p.len();
                if d == 0 || p.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidParameter("P must be a nonempty square matrix".into()));
                }
                let m = DMatrix::from_fn(d, d, |i, j| p[i][j]);
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("quadratic form".into()));
                }
                let asym = (&m - m.transpose()).amax();
                if asym > 1e-12 * (1.0 + m.amax()) {
                    return Err(Error::InvalidParameter(format!("P not symmetric (asymmetry {asym:e})")));
                }
                if m.cholesky().is_none() {
                    return Err(Error::InvalidParameter("P not positive definite".into()));
                }
                Ok(())
            }
            CostFunction::NormPower { power, norm } => {
                if !(power.is_finite() && *power > 0.0) {
                    return Err(Error::InvalidParameter(format!("power must be > 0, got {power}")));
                }
                if let Norm::Lp(r) = norm {
                    if !(r.is_finite() && *r >= 1.0) {
                        return Err(Error::InvalidParameter(format!("norm exponent must be >= 1, got {r}")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Fixed input dimension, if the cost has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            CostFunction::QuadraticForm { p } => Some(p.len()),
            _ => None,
        }
    }

    /// The matrix `P` for quadratic costs (`I` for squared Euclidean).
    pub fn quadratic_matrix(&self, dim: usize) -> Option<DMatrix<f64>> {
        match self {
            CostFunction::SquaredEuclidean => Some(DMatrix::identity(dim, dim)),
            CostFunction::QuadraticForm { p } => Some(DMatrix::from_fn(p.len(), p.len(), |i, j| p[i][j])),
            CostFunction::NormPower { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CostFunction::SquaredEuclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            CostFunction::QuadraticForm { p } => {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                p.iter()
                    .zip(&z)
                    .map(|(row, zi)| zi * row.iter().zip(&z).map(|(pij, zj)| pij * zj).sum::<f64>())
                    .sum()
            }
            CostFunction::NormPower { power, norm } => {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                norm.eval(&z).powf(*power)
            }
        }
    }

    /// Gradient in the first argument; a fixed subgradient selection where
    /// the cost is not differentiable (zero at `x = y`, lowest index for ties
    /// of the `ℓ∞` norm).
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        match self {
            CostFunction::SquaredEuclidean => z.iter().map(|v| 2.0 * v).collect(),
            CostFunction::QuadraticForm { p } => {
                // (P + Pᵀ) z = 2 P z for symmetric P.
                p.iter()
                    .map(|row| 2.0 * row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>())
                    .collect()
            }
            CostFunction::NormPower { power, norm } => {
                let nz = norm.eval(&z);
                if nz == 0.0 {
                    return vec![0.0; z.len()];
                }
                let outer = power * nz.powf(power - 1.0);
                match *norm {
                    Norm::L2 => z.iter().map(|v| outer * v / nz).collect(),
                    Norm::LInf => {
                        let mut k = 0;
                        for (i, v) in z.iter().enumerate() {
                            if v.abs() > z[k].abs() {
                                k = i;
                            }
                        }
                        let mut g = vec![0.0; z.len()];
                        g[k] = outer * z[k].signum();
                        g
                    }
                    Norm::Lp(r) => z
                        .iter()
                        .map(|v| outer * (v.abs() / nz).powf(r - 1.0) * v.signum())
                        .collect(),
                }
            }
        }
    }
}

/// Dense cost matrix `M_ij = c(x_i, y_j)` with its inputs.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
    source: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    cost: CostFunction,
}

impl CostMatrix {
    /// Rows are assembled in parallel.
    pub fn build(source: &[Vec<f64>], target: &[Vec<f64>], cost: &CostFunction) -> Result<Self> {
        cost.validate()?;
        let n = source.len();
        let m = target.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("empty point set".into()));
        }
        let d = source[0].len();
        let dim_ok = |p: &Vec<f64>| p.len() == d;
        if !source.iter().all(dim_ok) || !target.iter().all(dim_ok) {
            return Err(Error::DimensionMismatch {
                context: "cost matrix points",
                expected: d,
                found: source
                    .iter()
                    .chain(target)
                    .map(|p| p.len())
                    .find(|&l| l != d)
                    .unwrap_or(d),
            });
        }
        if let Some(cd) = cost.dim() {
            if cd != d {
                return Err(Error::DimensionMismatch {
                    context: "quadratic form",
                    expected: cd,
                    found: d,
                });
            }
        }
        let rows: Vec<Vec<f64>> = source
            .par_iter()
            .map(|x| target.iter().map(|y| cost.eval(x, y)).collect())
            .collect();
        let entries = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cost entry ({}, {})", k % n, k / n)));
        }
        Ok(Self {
            entries,
            source: source.to_vec(),
            target: target.to_vec(),
            cost: cost.clone(),
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn source(&self) -> &[Vec<f64>] {
        &self.source
    }

    pub fn target(&self) -> &[Vec<f64>] {
        &self.target
    }

    pub fn cost(&self) -> &CostFunction {
        &self.cost
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        crate::io::write_matrix_csv(&self.entries, writer)
    }
}
