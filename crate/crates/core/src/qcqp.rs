//! Convex QCQP: convex quadratic (or linear) objective under concave quadratic
//! constraints `Q_k(z) ≥ 0`.
//!
//! Augmented Lagrangian outer loop on `h_k = −Q_k ≤ 0`:
//!
//! ```text
//! L_ρ(z, λ) = f(z) + 1/(2ρ) Σ_k ( max(0, λ_k + ρ h_k(z))² − λ_k² )
//! ```
//!
//! `L_ρ` is convex and `C¹`, so the inner minimisation uses a semismooth
//! Newton method with Levenberg damping and an Armijo search (an accelerated
//! gradient inner solver is also available). A log-barrier method is the
//! alternative for problems whose constraints live on very different scales.
//! Quadratics are written `zᵀ M z + qᵀ z + c` throughout, without a factor ½.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod barrier;

/// Largest eigenvalue tolerated in a constraint's quadratic part (and the
/// most negative one in the objective's).
const CURVATURE_TOL: f64 = 1e-8;
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_MAX: f64 = 1e12;
const STALL_LEVEL: f64 = 1e-4;
const STALL_ROUNDS: usize = 5;
const MAX_REFINEMENTS: usize = 8;
const SHORT_STEP: f64 = 1e-2;

/// `Q(z) = z_Iᵀ A z_I + bᵀ z_I + c ≥ 0` on the variables `I`, with `A ⪯ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstraintRecord", into = "ConstraintRecord")]
pub struct ConcaveQuadraticConstraint {
    vars: Vec<usize>,
    quad: DMatrix<f64>,
    lin: Vec<f64>,
    constant: f64,
}

#[derive(Serialize, Deserialize)]
struct ConstraintRecord {
    vars: Vec<usize>,
    quad: Vec<Vec<f64>>,
    lin: Vec<f64>,
    constant: f64,
}

impl TryFrom<ConstraintRecord> for ConcaveQuadraticConstraint {
    type Error = Error;

    fn try_from(r: ConstraintRecord) -> Result<Self> {
        let k = r.vars.len();
        if r.quad.len() != k || r.quad.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch {
                context: "constraint quadratic part",
                expected: k,
                found: r.quad.len(),
            });
        }
        let quad = DMatrix::from_fn(k, k, |i, j| r.quad[i][j]);
        Self::new(r.vars, quad, r.lin, r.constant)
    }
}

impl From<ConcaveQuadraticConstraint> for ConstraintRecord {
    fn from(c: ConcaveQuadraticConstraint) -> Self {
        let k = c.vars.len();
        ConstraintRecord {
            quad: (0..k).map(|i| (0..k).map(|j| c.quad[(i, j)]).collect()).collect(),
            vars: c.vars,
            lin: c.lin,
            constant: c.constant,
        }
    }
}

fn symmetric_check(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidParameter(format!("{what} not symmetric (asymmetry {asym:e})")));
    }
    Ok(())
}

impl ConcaveQuadraticConstraint {
    pub fn new(vars: Vec<usize>, quad: DMatrix<f64>, lin: Vec<f64>, constant: f64) -> Result<Self> {
        let k = vars.len();
        if quad.shape() != (k, k) || lin.len() != k {
            return Err(Error::DimensionMismatch {
                context: "constraint local block",
                expected: k,
                found: lin.len(),
            });
        }
        let mut seen = vars.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("repeated variable in constraint".into()));
        }
        symmetric_check(&quad, "constraint quadratic part")?;
        if lin.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(Error::NonFinite("constraint".into()));
        }
        if k > 0 {
            let top = quad.clone().symmetric_eigenvalues().max();
            if top > CURVATURE_TOL * (1.0 + quad.amax()) {
                return Err(Error::InvalidParameter(format!(
                    "constraint has positive curvature {top:e}"
                )));
            }
        }
        Ok(Self {
            vars,
            quad,
            lin,
            constant,
        })
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    fn local(&self, z: &[f64]) -> Vec<f64> {
        self.vars.iter().map(|&v| z[v]).collect()
    }

    /// `Q(z)`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let zl = self.local(z);
        let k = zl.len();
        let mut v = self.constant;
        for a in 0..k {
            let mut row = 0.0;
            for b in 0..k {
                row += self.quad[(a, b)] * zl[b];
            }
            v += zl[a] * row + self.lin[a] * zl[a];
        }
        v
    }

    /// `∇Q` on the local variables.
    fn grad_local(&self, zl: &[f64]) -> Vec<f64> {
        let k = zl.len();
        (0..k)
            .map(|a| 2.0 * (0..k).map(|b| self.quad[(a, b)] * zl[b]).sum::<f64>() + self.lin[a])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `zᵀ M z + qᵀ z + c`, to be minimised (or maximised when `M` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    /// Row-major `dim × dim`, positive semidefinite.
    pub quad: Option<Vec<f64>>,
    pub lin: Vec<f64>,
    pub constant: f64,
    pub sense: Sense,
}

impl QuadraticObjective {
    pub fn linear(lin: Vec<f64>, sense: Sense) -> Self {
        Self {
            quad: None,
            lin,
            constant: 0.0,
            sense,
        }
    }

    pub fn quadratic(quad: &DMatrix<f64>, lin: Vec<f64>, constant: f64) -> Self {
        let n = quad.nrows();
        let mut rm = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rm.push(quad[(i, j)]);
            }
        }
        Self {
            quad: Some(rm),
            lin,
            constant,
            sense: Sense::Minimize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRecord", into = "ProblemRecord")]
pub struct QcqpProblem {
    dim: usize,
    objective: QuadraticObjective,
    constraints: Vec<ConcaveQuadraticConstraint>,
}

#[derive(Serialize, Deserialize)]
struct ProblemRecord {
    dim: usize,
    objective: QuadraticObjective,
    constraints: Vec<ConcaveQuadraticConstraint>,
}

impl TryFrom<ProblemRecord> for QcqpProblem {
    type Error = Error;

    fn try_from(r: ProblemRecord) -> Result<Self> {
        QcqpProblem::new(r.dim, r.objective, r.constraints)
    }
}

impl From<QcqpProblem> for ProblemRecord {
    fn from(p: QcqpProblem) -> Self {
        ProblemRecord {
            dim: p.dim,
            objective: p.objective,
            constraints: p.constraints,
        }
    }
}

impl QcqpProblem {
    pub fn new(dim: usize, objective: QuadraticObjective, constraints: Vec<ConcaveQuadraticConstraint>) -> Result<Self> {
        if objective.lin.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "objective linear part",
                expected: dim,
                found: objective.lin.len(),
            });
        }
        if objective.lin.iter().any(|v| !v.is_finite()) || !objective.constant.is_finite() {
            return Err(Error::NonFinite("objective".into()));
        }
        if let Some(q) = &objective.quad {
            if objective.sense == Sense::Maximize {
                return Err(Error::InvalidParameter("maximisation is only supported for linear objectives".into()));
            }
            if q.len() != dim * dim {
                return Err(Error::DimensionMismatch {
                    context: "objective quadratic part",
                    expected: dim * dim,
                    found: q.len(),
                });
            }
            let m = DMatrix::from_row_slice(dim, dim, q);
            symmetric_check(&m, "objective quadratic part")?;
            if dim > 0 {
                let low = m.clone().symmetric_eigenvalues().min();
                if low < -CURVATURE_TOL * (1.0 + m.amax()) {
                    return Err(Error::InvalidParameter(format!("objective not convex (eigenvalue {low:e})")));
                }
            }
        }
        for c in &constraints {
            if let Some(&v) = c.vars.iter().find(|&&v| v >= dim) {
                return Err(Error::DimensionMismatch {
                    context: "constraint variable index",
                    expected: dim,
                    found: v,
                });
            }
        }
        Ok(Self {
            dim,
            objective,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[ConcaveQuadraticConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    /// Objective in its own sense.
    pub fn objective_value(&self, z: &[f64]) -> f64 {
        let mut v = self.objective.constant;
        v += self.objective.lin.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        if let Some(q) = &self.objective.quad {
            let n = self.dim;
            for i in 0..n {
                let row = &q[i * n..(i + 1) * n];
                v += z[i] * row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        v
    }

    /// Minimisation form `f`: the objective, negated when maximising.
    fn f_value(&self, z: &[f64]) -> f64 {
        match self.objective.sense {
            Sense::Minimize => self.objective_value(z),
            Sense::Maximize => -self.objective_value(z),
        }
    }

    fn f_grad(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let sign = match self.objective.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut g: Vec<f64> = self.objective.lin.iter().map(|v| sign * v).collect();
        if let Some(q) = &self.objective.quad {
            for i in 0..n {
                let row = &q[i * n..(i + 1) * n];
                // (M + Mᵀ) z = 2 M z for symmetric M.
                g[i] += 2.0 * row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        g
    }

    fn add_f_hessian(&self, h: &mut DMatrix<f64>) {
        if let Some(q) = &self.objective.quad {
            let n = self.dim;
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += 2.0 * q[i * n + j];
                }
            }
        }
    }

    /// Largest constraint violation `max_k max(0, −Q_k(z))`.
    pub fn violation(&self, z: &[f64]) -> f64 {
        self.constraints.iter().fold(0.0, |m, c| m.max(-c.eval(z)))
    }

    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// All constraints `≥ −tol` at `z`.
pub fn check_feasible(problem: &QcqpProblem, z: &[f64], tol: f64) -> Result<bool> {
    if z.len() != problem.dim {
        return Err(Error::DimensionMismatch {
            context: "feasibility point",
            expected: problem.dim,
            found: z.len(),
        });
    }
    Ok(problem.constraints.iter().all(|c| c.eval(z) >= -tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SolveStatus {
    Optimal,
    MaxIterReached,
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterReached => "reached the iteration limit",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InnerSolver {
    /// Semismooth Newton with Levenberg damping.
    Newton,
    /// Accelerated projected gradient with adaptive restart.
    Apg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    /// Augmented Lagrangian outer loop around the `inner` solver.
    AugmentedLagrangian,
    /// Log-barrier path following. Unaffected by rescaling individual
    /// constraints, which the penalty method is not.
    Barrier,
}

/// `max_outer` counts penalty updates or barrier rounds, `max_inner` the
/// steps within one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub method: Method,
    pub inner: InnerSolver,
    pub initial_penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_outer: 60,
            max_inner: 200,
            method: Method::AugmentedLagrangian,
            inner: InnerSolver::Newton,
            initial_penalty: 1.0,
        }
    }
}

/// Initial point and multipliers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub z: Vec<f64>,
    pub multipliers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    pub z: Vec<f64>,
    /// Objective at `z`, in the problem's sense.
    pub value: f64,
    pub status: SolveStatus,
    pub multipliers: Vec<f64>,
    pub violation: f64,
    /// `‖∇f + Σ λ_k ∇h_k‖∞ / max(1, ‖∇f‖∞)`.
    pub stationarity: f64,
    /// `max_k |min(λ_k, −h_k)|`.
    pub complementarity: f64,
    pub outer_iterations: usize,
}

struct Lagrangian<'a> {
    p: &'a QcqpProblem,
    lambda: &'a [f64],
    rho: f64,
}

impl Lagrangian<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.p.f_value(z);
        for (c, &l) in self.p.constraints.iter().zip(self.lambda) {
            // (s² − λ²)/2ρ with s = max(0, λ − ρh), expanded to avoid cancellation.
            let h = c.eval(z);
            v += if l - self.rho * h > 0.0 {
                h * (0.5 * self.rho * h - l)
            } else {
                -l * l / (2.0 * self.rho)
            };
        }
        v
    }

    fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.p.f_grad(z);
        for (c, &l) in self.p.constraints.iter().zip(self.lambda) {
            let s = (l - self.rho * c.eval(z)).max(0.0);
            if s > 0.0 {
                let gl = c.grad_local(&c.local(z));
                for (a, &v) in c.vars.iter().enumerate() {
                    g[v] -= s * gl[a];
                }
            }
        }
        g
    }

    fn shifted(&self, z: &[f64]) -> Vec<f64> {
        self.p.constraints.iter().zip(self.lambda).map(|(c, &l)| l - self.rho * c.eval(z)).collect()
    }

    /// Generalised Hessian over the pieces flagged in `active`.
    fn hessian(&self, z: &[f64], active: &[bool]) -> DMatrix<f64> {
        let n = self.p.dim;
        let mut h = DMatrix::zeros(n, n);
        self.p.add_f_hessian(&mut h);
        for ((c, &l), &on) in self.p.constraints.iter().zip(self.lambda).zip(active) {
            let s = (l - self.rho * c.eval(z)).max(0.0);
            if on {
                let gl = c.grad_local(&c.local(z));
                for (a, &va) in c.vars.iter().enumerate() {
                    for (b, &vb) in c.vars.iter().enumerate() {
                        h[(va, vb)] += self.rho * gl[a] * gl[b] - 2.0 * s * c.quad[(a, b)];
                    }
                }
            }
        }
        h
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale of the terms summed in a Lagrangian gradient: the objective
/// gradient and each weighted constraint gradient.
fn residual_scale(p: &QcqpProblem, z: &[f64], weight: impl Fn(usize, &ConcaveQuadraticConstraint) -> f64) -> f64 {
    let mut scale = inf_norm(&p.f_grad(z)).max(1.0);
    for (k, c) in p.constraints.iter().enumerate() {
        let w = weight(k, c);
        if w > 0.0 {
            scale = scale.max(w * inf_norm(&c.grad_local(&c.local(z))));
        }
    }
    scale
}

fn grad_scale(lag: &Lagrangian, z: &[f64]) -> f64 {
    residual_scale(lag.p, z, |k, c| (lag.lambda[k] - lag.rho * c.eval(z)).max(0.0))
}

/// Damped Newton direction over the pieces flagged in `active`; `None` once
/// the damping gives out.
fn damped_direction(lag: &Lagrangian, z: &[f64], active: &[bool], rhs: &DVector<f64>, mu: &mut f64) -> Option<DVector<f64>> {
    let n = z.len();
    let h = lag.hessian(z, active);
    let floor = 1e-12 * (0..n).fold(1.0f64, |m, i| m.max(h[(i, i)].abs())).sqrt();
    loop {
        let mut hd = h.clone();
        for i in 0..n {
            hd[(i, i)] += *mu * h[(i, i)].abs() + floor;
        }
        if let Some(ch) = hd.cholesky() {
            return Some(ch.solve(rhs));
        }
        *mu *= 100.0;
        if *mu > 1e6 {
            return None;
        }
    }
}

/// Armijo backtracking along `d`: accepted step and value.
fn armijo(lag: &Lagrangian, z: &[f64], d: &DVector<f64>, f0: f64, slope: f64) -> Option<(f64, f64)> {
    let mut t = 1.0;
    let mut trial = vec![0.0; z.len()];
    for _ in 0..60 {
        for (i, v) in trial.iter_mut().enumerate() {
            *v = z[i] + t * d[i];
        }
        let ft = lag.value(&trial);
        if ft <= f0 + 1e-4 * t * slope {
            return Some((t, ft));
        }
        t *= 0.5;
    }
    None
}

fn newton_inner(lag: &Lagrangian, z: &mut [f64], tol: f64, max_iter: usize) {
    let n = z.len();
    // Relative Marquardt damping, adapted to the line search. Scaling by the
    // gradient norm instead would stall tangential progress at large penalties.
    let mut mu = 1e-8;
    for _ in 0..max_iter {
        let g = lag.grad(z);
        let gn = inf_norm(&g);
        if gn <= tol * grad_scale(lag, z) {
            return;
        }
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let mut active: Vec<bool> = lag.shifted(z).iter().map(|&a| a > 0.0).collect();
        let Some(d) = damped_direction(lag, z, &active, &rhs, &mut mu) else {
            return;
        };
        let slope = dot(&g, d.as_slice());
        if slope >= 0.0 {
            return;
        }
        let f0 = lag.value(z);
        let mut best = armijo(lag, z, &d, f0, slope).map(|(t, f)| (t, f, d.clone()));
        if best.as_ref().is_none_or(|b| b.0 < SHORT_STEP) {
            // The step ran past kinks of inactive pieces: put the pieces it
            // switches on into the model and try again.
            let mut dr = d;
            let mut grew_any = false;
            for _ in 0..MAX_REFINEMENTS {
                let ahead: Vec<f64> = z.iter().zip(dr.iter()).map(|(a, b)| a + b).collect();
                let mut grew = false;
                for (on, a) in active.iter_mut().zip(lag.shifted(&ahead)) {
                    if !*on && a > 0.0 {
                        *on = true;
                        grew = true;
                    }
                }
                if !grew {
                    break;
                }
                grew_any = true;
                match damped_direction(lag, z, &active, &rhs, &mut mu) {
                    Some(next) => dr = next,
                    None => break,
                }
            }
            let slope_r = dot(&g, dr.as_slice());
            if grew_any && slope_r < 0.0 {
                if let Some((t, f)) = armijo(lag, z, &dr, f0, slope_r) {
                    if best.as_ref().is_none_or(|b| f < b.1) {
                        best = Some((t, f, dr));
                    }
                }
            }
        }
        let Some((t, _, d)) = best else {
            return;
        };
        if t < 0.1 {
            mu = (mu * 10.0).min(1e2);
        } else if t == 1.0 {
            mu = (mu * 0.1).max(1e-12);
        }
        let moved = t * inf_norm(d.as_slice());
        for (v, dv) in z.iter_mut().zip(d.iter()) {
            *v += t * dv;
        }
        if moved <= 1e-16 * (1.0 + inf_norm(z)) {
            return;
        }
    }
}

fn apg_inner(lag: &Lagrangian, z: &mut [f64], tol: f64, max_iter: usize) {
    let n = z.len();
    let mut step = 1.0;
    let mut y = z.to_vec();
    let mut prev = z.to_vec();
    let mut theta = 1.0f64;
    let mut f_prev = lag.value(z);
    for _ in 0..max_iter * 50 {
        let g = lag.grad(&y);
        if inf_norm(&lag.grad(z)) <= tol * grad_scale(lag, z) {
            return;
        }
        let fy = lag.value(&y);
        let gg = dot(&g, &g);
        // Backtracking on the local Lipschitz estimate.
        let mut next = vec![0.0; n];
        loop {
            for i in 0..n {
                next[i] = y[i] - step * g[i];
            }
            if lag.value(&next) <= fy - 0.5 * step * gg || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let f_next = lag.value(&next);
        if f_next > f_prev {
            // Adaptive restart.
            theta = 1.0;
            y.copy_from_slice(z);
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        prev.copy_from_slice(z);
        z.copy_from_slice(&next);
        for i in 0..n {
            y[i] = z[i] + beta * (z[i] - prev[i]);
        }
        theta = theta_next;
        f_prev = f_next;
        step *= 2.0;
    }
}

fn kkt(p: &QcqpProblem, z: &[f64], lambda: &[f64]) -> (f64, f64, f64) {
    let mut g = p.f_grad(z);
    let scale = residual_scale(p, z, |k, _| lambda[k]);
    let mut viol: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (c, &l) in p.constraints.iter().zip(lambda) {
        let q = c.eval(z);
        viol = viol.max(-q);
        comp = comp.max(l.min(q).abs());
        if l > 0.0 {
            let gl = c.grad_local(&c.local(z));
            for (a, &v) in c.vars.iter().enumerate() {
                g[v] -= l * gl[a];
            }
        }
    }
    (viol, inf_norm(&g) / scale, comp)
}

/// Solves the problem from `warm` (or the origin).
pub fn solve(problem: &QcqpProblem, opts: &SolverOptions, warm: Option<&WarmStart>) -> Result<QcqpSolution> {
    if !(opts.tol > 0.0) || opts.max_outer == 0 || !(opts.initial_penalty > 0.0) {
        return Err(Error::InvalidParameter("solver options must be positive".into()));
    }
    let n = problem.dim;
    let k = problem.constraints.len();
    let mut z = match warm {
        Some(w) if w.z.len() == n => w.z.clone(),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                context: "warm start",
                expected: n,
                found: w.z.len(),
            })
        }
        None => vec![0.0; n],
    };
    if opts.method == Method::Barrier {
        return barrier::solve(problem, opts, Some(&WarmStart { z, multipliers: None }));
    }
    let mut lambda = match warm.and_then(|w| w.multipliers.clone()) {
        Some(l) if l.len() == k => l.into_iter().map(|v| v.max(0.0)).collect(),
        _ => vec![0.0; k],
    };
    let mut rho = opts.initial_penalty;
    let inner_tol = opts.tol / 10.0;
    let mut prev_viol = f64::INFINITY;
    let mut best_viol = f64::INFINITY;
    let mut stalled = 0usize;
    let mut status = SolveStatus::MaxIterReached;
    let mut outer = 0;
    let mut report = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut frozen = 0usize;

    while outer < opts.max_outer {
        outer += 1;
        let before = z.clone();
        {
            let lag = Lagrangian {
                p: problem,
                lambda: &lambda,
                rho,
            };
            match opts.inner {
                InnerSolver::Newton => newton_inner(&lag, &mut z, inner_tol, opts.max_inner),
                InnerSolver::Apg => apg_inner(&lag, &mut z, inner_tol, opts.max_inner),
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("QCQP iterate at outer iteration {outer}")));
        }
        for (c, l) in problem.constraints.iter().zip(lambda.iter_mut()) {
            *l = (*l - rho * c.eval(&z)).max(0.0);
        }
        report = kkt(problem, &z, &lambda);
        let (viol, stat, comp) = report;
        if viol <= opts.tol && stat <= opts.tol && comp <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Only a maxed-out penalty makes a persistent violation evidence of infeasibility.
        if viol > STALL_LEVEL && viol >= 0.99 * best_viol && rho >= PENALTY_MAX {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best_viol = best_viol.min(viol);
        if stalled >= STALL_ROUNDS {
            status = SolveStatus::Infeasible;
            break;
        }
        if viol > opts.tol && viol > 0.25 * prev_viol {
            rho = (rho * PENALTY_GROWTH).min(PENALTY_MAX);
        }
        prev_viol = viol;
        // Feasible and no longer moving: more rounds only inflate the multipliers.
        let moved = z.iter().zip(&before).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if viol <= opts.tol && moved <= 1e-12 * (1.0 + inf_norm(&z)) {
            frozen += 1;
            if frozen >= STALL_ROUNDS {
                break;
            }
        } else {
            frozen = 0;
        }
    }
    Ok(QcqpSolution {
        value: problem.objective_value(&z),
        z,
        status,
        multipliers: lambda,
        violation: report.0,
        stationarity: report.1,
        complementarity: report.2,
        outer_iterations: outer,
    })
}
