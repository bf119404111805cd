//! Maps `g = s·I + h` with `h` in a vector-valued RKHS, fitted by
//! subgradient descent on `W(a, b, M(u)) + λ uᵀ𝐊u`.
//!
//! Only scalar kernels `K(x, x′) = k(x, x′)·I_d` are supported, so the Gram
//! matrix is stored as `n × n` and the coefficients as an `n × d` matrix `U`;
//! `𝐊u` is then `K U`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TOLERANCES;
use crate::measure::{DiscreteMeasure, PointMap};
use crate::otcore::{solve_kantorovich, CostFunction};
use crate::{Coupling, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "camelCase")]
pub enum KernelSpec {
    /// `exp(−‖x − x′‖² / (2σ²))`.
    GaussianScalar { sigma2: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::GaussianScalar { sigma2 } if sigma2.is_finite() && sigma2 > 0.0 => Ok(()),
            KernelSpec::GaussianScalar { sigma2 } => Err(Error::InvalidParameter(format!("sigma2 must be > 0, got {sigma2}"))),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::GaussianScalar { sigma2 } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma2)).exp()
            }
        }
    }
}

/// Scalar Gram matrix `(k(x_i, x_j))`, validated positive semidefinite.
pub fn gram(spec: &KernelSpec, atoms: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = atoms.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no atoms for the Gram matrix".into()));
    }
    let rows: Vec<Vec<f64>> = atoms
        .par_iter()
        .map(|x| atoms.iter().map(|y| spec.eval(x, y)).collect())
        .collect();
    let k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut jittered = k.clone();
    for i in 0..n {
        jittered[(i, i)] += TOLERANCES.gram_jitter;
    }
    if jittered.cholesky().is_none() {
        return Err(Error::InvalidParameter("Gram matrix is not positive semidefinite".into()));
    }
    Ok(k)
}

/// Coefficients `u_i ∈ ℝ^d` attached to the atoms of the source measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct KernelModel {
    spec: KernelSpec,
    lambda: f64,
    offset_scale: Option<f64>,
    centers: Vec<Vec<f64>>,
    coefficients: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct KernelRecord {
    #[serde(flatten)]
    spec: KernelSpec,
    lambda: f64,
    offset_scale: Option<f64>,
    centers: Vec<Vec<f64>>,
    /// Stacked `u_1, …, u_n`.
    coefficients: Vec<f64>,
}

impl TryFrom<KernelRecord> for KernelModel {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        let n = r.centers.len();
        if n == 0 || r.coefficients.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                context: "kernel coefficients",
                expected: n,
                found: r.coefficients.len(),
            });
        }
        let d = r.coefficients.len() / n;
        let mut m = KernelModel::new(r.spec, r.lambda, r.offset_scale, r.centers, d)?;
        m.set_coefficients(DMatrix::from_row_slice(n, d, &r.coefficients))?;
        Ok(m)
    }
}

impl From<KernelModel> for KernelRecord {
    fn from(m: KernelModel) -> Self {
        let (n, d) = m.coefficients.shape();
        let coefficients = (0..n).flat_map(|i| (0..d).map(move |k| (i, k))).map(|(i, k)| m.coefficients[(i, k)]).collect();
        KernelRecord {
            spec: m.spec,
            lambda: m.lambda,
            offset_scale: m.offset_scale,
            centers: m.centers,
            coefficients,
        }
    }
}

impl KernelModel {
    /// Zero coefficients; with an offset the model starts at `s·I`.
    pub fn new(spec: KernelSpec, lambda: f64, offset_scale: Option<f64>, centers: Vec<Vec<f64>>, out_dim: usize) -> Result<Self> {
        spec.validate()?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        if centers.is_empty() || out_dim == 0 {
            return Err(Error::InvalidParameter("kernel model needs centers and an output dimension".into()));
        }
        let din = centers[0].len();
        if let Some(bad) = centers.iter().find(|c| c.len() != din) {
            return Err(Error::DimensionMismatch {
                context: "kernel centers",
                expected: din,
                found: bad.len(),
            });
        }
        if let Some(s) = offset_scale {
            if !s.is_finite() {
                return Err(Error::NonFinite("offset scale".into()));
            }
            if din != out_dim {
                return Err(Error::DimensionMismatch {
                    context: "identity offset needs equal input and output dimensions",
                    expected: din,
                    found: out_dim,
                });
            }
        }
        let n = centers.len();
        Ok(Self {
            spec,
            lambda,
            offset_scale,
            centers,
            coefficients: DMatrix::zeros(n, out_dim),
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn offset_scale(&self) -> Option<f64> {
        self.offset_scale
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `U`, one row per center.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn set_coefficients(&mut self, u: DMatrix<f64>) -> Result<()> {
        if u.shape() != self.coefficients.shape() {
            return Err(Error::DimensionMismatch {
                context: "kernel coefficients",
                expected: self.coefficients.len(),
                found: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel coefficients".into()));
        }
        self.coefficients = u;
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    /// `uᵀ𝐊u = tr(Uᵀ K U)`.
    pub fn rkhs_norm_sq(&self, k: &DMatrix<f64>) -> f64 {
        let ku = k * &self.coefficients;
        self.coefficients.dot(&ku)
    }

    /// Images `𝐊_{[i,:]}u (+ s·x_i)` at the centers.
    pub fn images(&self, k: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let ku = k * &self.coefficients;
        (0..self.centers.len())
            .map(|i| {
                (0..self.out_dim())
                    .map(|c| ku[(i, c)] + self.offset_scale.map_or(0.0, |s| s * self.centers[i][c]))
                    .collect()
            })
            .collect()
    }

    pub fn to_json_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

impl PointMap for KernelModel {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let din = self.centers[0].len();
        if x.len() != din {
            return Err(Error::DimensionMismatch {
                context: "kernel map input",
                expected: din,
                found: x.len(),
            });
        }
        let d = self.out_dim();
        let mut out: Vec<f64> = match self.offset_scale {
            Some(s) => x.iter().map(|v| s * v).collect(),
            None => vec![0.0; d],
        };
        for (i, c) in self.centers.iter().enumerate() {
            let w = self.spec.eval(x, c);
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * self.coefficients[(i, k)];
            }
        }
        Ok(out)
    }
}

/// A model bound to its training measures and cached Gram matrix.
pub struct KernelProblem<'a> {
    pub mu: &'a DiscreteMeasure,
    pub nu: &'a DiscreteMeasure,
    pub cost: &'a CostFunction,
    gram: DMatrix<f64>,
}

/// Objective value with the plan that attains its transport term.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub transport: f64,
    pub penalty: f64,
    pub plan: Coupling,
}

impl<'a> KernelProblem<'a> {
    pub fn new(spec: &KernelSpec, mu: &'a DiscreteMeasure, nu: &'a DiscreteMeasure, cost: &'a CostFunction) -> Result<Self> {
        cost.validate()?;
        Ok(Self {
            gram: gram(spec, mu.points())?,
            mu,
            nu,
            cost,
        })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn check_model(&self, model: &KernelModel) -> Result<()> {
        if model.centers.as_slice() != self.mu.points() {
            return Err(Error::InvalidParameter("model centers differ from the source atoms".into()));
        }
        if model.out_dim() != self.nu.dim() {
            return Err(Error::DimensionMismatch {
                context: "kernel output vs target",
                expected: self.nu.dim(),
                found: model.out_dim(),
            });
        }
        Ok(())
    }

    /// `M(u)_ij = c(h(x_i), y_j)`, rows in parallel.
    pub fn cost_matrix(&self, model: &KernelModel) -> Result<DMatrix<f64>> {
        self.check_model(model)?;
        let images = model.images(&self.gram);
        let ys = self.nu.points();
        let rows: Vec<Vec<f64>> = images
            .par_iter()
            .map(|h| ys.iter().map(|y| self.cost.eval(h, y)).collect())
            .collect();
        let m = DMatrix::from_fn(images.len(), ys.len(), |i, j| rows[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel cost matrix".into()));
        }
        Ok(m)
    }

    pub fn evaluate(&self, model: &KernelModel) -> Result<Evaluation> {
        let m = self.cost_matrix(model)?;
        let (plan, transport) = solve_kantorovich(self.mu.weights(), self.nu.weights(), &m)?;
        let penalty = model.lambda * model.rkhs_norm_sq(&self.gram);
        Ok(Evaluation {
            objective: transport + penalty,
            transport,
            penalty,
            plan,
        })
    }

    pub fn objective(&self, model: &KernelModel) -> Result<f64> {
        Ok(self.evaluate(model)?.objective)
    }

    /// Subgradient `K·G + 2λ K U` with `G_i = Σ_j π_ij ∇₁c(h(x_i), y_j)` for
    /// the Danskin plan `π`.
    pub fn subgradient(&self, model: &KernelModel, plan: &Coupling) -> DMatrix<f64> {
        let images = model.images(&self.gram);
        let d = model.out_dim();
        let pm = plan.matrix();
        let ys = self.nu.points();
        let rows: Vec<Vec<f64>> = images
            .par_iter()
            .enumerate()
            .map(|(i, h)| {
                let mut g = vec![0.0; d];
                for (j, y) in ys.iter().enumerate() {
                    let p = pm[(i, j)];
                    if p != 0.0 {
                        for (gk, ck) in g.iter_mut().zip(self.cost.grad_x(h, y)) {
                            *gk += p * ck;
                        }
                    }
                }
                g
            })
            .collect();
        let g_out = DMatrix::from_fn(images.len(), d, |i, k| rows[i][k]);
        &self.gram * (g_out + &model.coefficients * (2.0 * model.lambda))
    }
}

/// Step sizes `α_t = α₀ / (1 + t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub alpha0: f64,
    pub tau: f64,
    pub steps: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            alpha0: 0.1,
            tau: 100.0,
            steps: 500,
        }
    }
}

impl DescentOptions {
    pub fn step(&self, t: usize) -> f64 {
        self.alpha0 / (1.0 + t as f64 / self.tau)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.tau > 0.0) || !self.alpha0.is_finite() || !self.tau.is_finite() {
            return Err(Error::InvalidParameter("step schedule needs alpha0 > 0 and tau > 0".into()));
        }
        Ok(())
    }
}

/// One row of the descent log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentRecord {
    pub step: usize,
    pub objective: f64,
    pub step_size: f64,
}

/// Subgradient descent from the model's current coefficients. The trace holds
/// the objective before every step and after the last one.
pub fn descend(problem: &KernelProblem, model: &KernelModel, opts: &DescentOptions) -> Result<(KernelModel, Vec<DescentRecord>)> {
    opts.validate()?;
    let mut cur = model.clone();
    let mut trace = Vec::with_capacity(opts.steps + 1);
    for t in 0..opts.steps {
        let ev = problem.evaluate(&cur)?;
        let alpha = opts.step(t);
        trace.push(DescentRecord {
            step: t,
            objective: ev.objective,
            step_size: alpha,
        });
        let grad = problem.subgradient(&cur, &ev.plan);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(t));
        }
        let next = &cur.coefficients - grad * alpha;
        cur.set_coefficients(next).map_err(|e| Error::SolverStep {
            solver: "kernel descent",
            iteration: t,
            source: Box::new(e),
        })?;
    }
    trace.push(DescentRecord {
        step: opts.steps,
        objective: problem.objective(&cur)?,
        step_size: 0.0,
    });
    Ok((cur, trace))
}

/// Descent log as CSV `step,objective,step_size`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[DescentRecord], writer: W) -> Result<()> {
    let rows: Vec<Vec<f64>> = trace.iter().map(|r| vec![r.step as f64, r.objective, r.step_size]).collect();
    crate::io::write_table_csv(&["step", "objective", "step_size"], &rows, writer)
}

#[cfg(test)]
mod tests {
    use super::*;

    const G1: KernelSpec = KernelSpec::GaussianScalar { sigma2: 0.5 };

    #[test]
    fn gram_small_cases() {
        assert_eq!(gram(&G1, &[vec![0.3, 1.0]]).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let k = gram(&G1, &[vec![0.3], vec![0.3]]).unwrap();
        assert_eq!(k, DMatrix::from_element(2, 2, 1.0));
        assert!(gram(&KernelSpec::GaussianScalar { sigma2: 0.0 }, &[vec![0.0]]).is_err());
    }

    #[test]
    fn eval_basics() {
        let mut m = KernelModel::new(G1, 0.1, None, vec![vec![0.0, 0.0], vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(m.eval(&[0.4, -2.0]).unwrap(), vec![0.0, 0.0]);
        m.set_coefficients(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(m.eval(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let id = KernelModel::new(G1, 0.1, Some(1.0), vec![vec![0.0, 0.0]], 2).unwrap();
        assert_eq!(id.eval(&[0.4, -2.0]).unwrap(), vec![0.4, -2.0]);
    }

    #[test]
    fn norm_of_single_center() {
        let mut m = KernelModel::new(G1, 0.1, None, vec![vec![2.0]], 3).unwrap();
        m.set_coefficients(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])).unwrap();
        let k = gram(&G1, m.centers()).unwrap();
        assert_eq!(m.rkhs_norm_sq(&k), 1.0);
    }

    #[test]
    fn offset_identity_on_equal_measures_costs_nothing() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let m = KernelModel::new(G1, 0.01, Some(1.0), mu.points().to_vec(), 1).unwrap();
        let c = CostFunction::SquaredEuclidean;
        let p = KernelProblem::new(&G1, &mu, &mu, &c).unwrap();
        assert_eq!(p.objective(&m).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut m = KernelModel::new(G1, 0.01, Some(1.0), vec![vec![0.0, 1.0], vec![2.0, 3.0]], 2).unwrap();
        m.set_coefficients(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let mut buf = Vec::new();
        m.to_json_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"coefficients\":[1.0,2.0,3.0,4.0]"), "{text}");
        assert!(text.contains("\"offsetScale\":1.0") && text.contains("\"sigma2\":0.5"));
        assert_eq!(KernelModel::from_json_reader(&buf[..]).unwrap(), m);
    }
}
