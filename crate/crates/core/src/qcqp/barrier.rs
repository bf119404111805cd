//! Log-barrier path following.
//!
//! Centring minimises `F_t(z) = t f(z) − Σ_k log Q_k(z)` by damped Newton.
//! Each `−log Q_k` is self-concordant for concave quadratic `Q_k`, so the
//! Newton decrement is a scale-free stopping test and the method does not
//! care how individual constraints are scaled. Starts that are not strictly
//! feasible first go through a phase-I solve of `min s` subject to
//! `Q_k(z) + s ≥ 0`.

use nalgebra::{DMatrix, DVector};

use super::{
    kkt, ConcaveQuadraticConstraint, QcqpProblem, QcqpSolution, QuadraticObjective, Sense, SolveStatus,
    SolverOptions, WarmStart,
};
use crate::{Error, Result};

const T_GROWTH: f64 = 10.0;
/// Centring stops at `λ²/2` below this, `λ` the Newton decrement.
const DECREMENT_TOL: f64 = 1e-12;
const ARMIJO: f64 = 0.01;

enum Centring {
    Centred,
    /// The caller's early-exit test fired.
    Stopped,
    /// Step budget spent or no acceptable step.
    Incomplete,
}

/// `f(z + αd) − f(z)` for the minimisation form, exact for quadratics.
struct LineModel {
    slope: f64,
    curvature: f64,
}

fn line_model(p: &QcqpProblem, z: &[f64], d: &[f64]) -> LineModel {
    let slope = p.f_grad(z).iter().zip(d).map(|(a, b)| a * b).sum();
    let mut curvature = 0.0;
    if let Some(m) = &p.objective.quad {
        let n = p.dim;
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            curvature += d[i] * row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    LineModel { slope, curvature }
}

/// `Q(z + αd) = q + α a + α² b`.
fn constraint_line(c: &ConcaveQuadraticConstraint, z: &[f64], d: &[f64]) -> (f64, f64) {
    let dl = c.local(d);
    let gl = c.grad_local(&c.local(z));
    let a = gl.iter().zip(&dl).map(|(x, y)| x * y).sum();
    let k = dl.len();
    let mut b = 0.0;
    for i in 0..k {
        for j in 0..k {
            b += dl[i] * c.quad[(i, j)] * dl[j];
        }
    }
    (a, b)
}

fn newton_system(p: &QcqpProblem, t: f64, z: &[f64], q: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = p.dim;
    let mut g: Vec<f64> = p.f_grad(z).into_iter().map(|v| t * v).collect();
    let mut h = DMatrix::zeros(n, n);
    p.add_f_hessian(&mut h);
    h *= t;
    for (c, &qk) in p.constraints.iter().zip(q) {
        let gl = c.grad_local(&c.local(z));
        for (a, &va) in c.vars.iter().enumerate() {
            g[va] -= gl[a] / qk;
            for (b, &vb) in c.vars.iter().enumerate() {
                h[(va, vb)] += gl[a] * gl[b] / (qk * qk) - 2.0 * c.quad[(a, b)] / qk;
            }
        }
    }
    (g, h)
}

/// Newton direction with a ridge grown only as far as Cholesky needs.
fn direction(h: &DMatrix<f64>, g: &[f64]) -> Option<DVector<f64>> {
    let n = g.len();
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    let top = (0..n).fold(0.0f64, |m, i| m.max(h[(i, i)].abs())).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hd = h.clone();
        for i in 0..n {
            hd[(i, i)] += ridge;
        }
        if let Some(ch) = hd.cholesky() {
            return Some(ch.solve(&rhs));
        }
        ridge = if ridge == 0.0 { 1e-14 * top } else { ridge * 100.0 };
    }
    None
}

fn centre(
    p: &QcqpProblem,
    t: f64,
    z: &mut [f64],
    q: &mut [f64],
    max_steps: usize,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Centring {
    for _ in 0..max_steps {
        if stop(z) {
            return Centring::Stopped;
        }
        let (g, h) = newton_system(p, t, z, q);
        let Some(d) = direction(&h, &g) else {
            return Centring::Incomplete;
        };
        let d = d.as_slice();
        let dec2 = -g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
        if dec2.is_nan() {
            return Centring::Incomplete;
        }
        if dec2 <= 2.0 * DECREMENT_TOL {
            return Centring::Centred;
        }
        let model = line_model(p, z, d);
        let lines: Vec<(f64, f64)> = p.constraints.iter().map(|c| constraint_line(c, z, d)).collect();
        let mut alpha = 1.0;
        let mut trial = z.to_vec();
        let mut accepted = false;
        for _ in 0..80 {
            for (v, (zi, di)) in trial.iter_mut().zip(z.iter().zip(d)) {
                *v = zi + alpha * di;
            }
            let inside = p.constraints.iter().all(|c| c.eval(&trial) > 0.0);
            if inside {
                // Differences from the line models: F_t itself is too large to
                // resolve the final decrements.
                let mut change = t * alpha * (model.slope + alpha * model.curvature);
                for (&(a, b), &qk) in lines.iter().zip(q.iter()) {
                    change -= (alpha * (a + alpha * b) / qk).ln_1p();
                }
                if change <= -ARMIJO * alpha * dec2 {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Centring::Incomplete;
        }
        z.copy_from_slice(&trial);
        for (qk, c) in q.iter_mut().zip(&p.constraints) {
            *qk = c.eval(z);
        }
    }
    if stop(z) {
        Centring::Stopped
    } else {
        Centring::Incomplete
    }
}

struct PathEnd {
    t: f64,
    /// Duality gap `K/t` reached with every centring complete.
    converged: bool,
    stopped: bool,
    rounds: usize,
}

/// Follows the central path from the strictly feasible `z` until the gap
/// `K/t` is below `tol`, or `stop` fires.
fn follow(p: &QcqpProblem, opts: &SolverOptions, z: &mut [f64], stop: &dyn Fn(&[f64]) -> bool) -> PathEnd {
    let k = p.constraints.len() as f64;
    let mut q: Vec<f64> = p.constraints.iter().map(|c| c.eval(z)).collect();
    let mut t = k.max(1.0) / (1.0 + p.f_value(z).abs());
    let mut complete = true;
    for round in 1..=opts.max_outer {
        match centre(p, t, z, &mut q, opts.max_inner, stop) {
            Centring::Stopped => {
                return PathEnd {
                    t,
                    converged: false,
                    stopped: true,
                    rounds: round,
                }
            }
            Centring::Centred => {}
            Centring::Incomplete => complete = false,
        }
        if k / t <= opts.tol {
            return PathEnd {
                t,
                converged: complete,
                stopped: false,
                rounds: round,
            };
        }
        t *= T_GROWTH;
    }
    PathEnd {
        t: t / T_GROWTH,
        converged: false,
        stopped: false,
        rounds: opts.max_outer,
    }
}

/// `min s` subject to `Q_k(z) + s ≥ 0` and `s ≥ −1`, in `(z, s)`.
fn phase_one(p: &QcqpProblem) -> QcqpProblem {
    let n = p.dim;
    let mut constraints: Vec<ConcaveQuadraticConstraint> = p
        .constraints
        .iter()
        .map(|c| {
            let k = c.vars.len();
            let mut quad = DMatrix::zeros(k + 1, k + 1);
            quad.view_mut((0, 0), (k, k)).copy_from(&c.quad);
            let mut vars = c.vars.clone();
            vars.push(n);
            let mut lin = c.lin.clone();
            lin.push(1.0);
            ConcaveQuadraticConstraint {
                vars,
                quad,
                lin,
                constant: c.constant,
            }
        })
        .collect();
    constraints.push(ConcaveQuadraticConstraint {
        vars: vec![n],
        quad: DMatrix::zeros(1, 1),
        lin: vec![1.0],
        constant: 1.0,
    });
    let mut lin = vec![0.0; n + 1];
    lin[n] = 1.0;
    QcqpProblem {
        dim: n + 1,
        objective: QuadraticObjective::linear(lin, Sense::Minimize),
        constraints,
    }
}

fn finish(p: &QcqpProblem, z: Vec<f64>, lambda: Vec<f64>, status: SolveStatus, rounds: usize, tol: f64) -> QcqpSolution {
    let (violation, stationarity, complementarity) = kkt(p, &z, &lambda);
    let status = match status {
        SolveStatus::Optimal if violation > tol || stationarity > tol => SolveStatus::MaxIterReached,
        s => s,
    };
    QcqpSolution {
        value: p.objective_value(&z),
        z,
        status,
        multipliers: lambda,
        violation,
        stationarity,
        complementarity,
        outer_iterations: rounds,
    }
}

pub(super) fn solve(p: &QcqpProblem, opts: &SolverOptions, warm: Option<&WarmStart>) -> Result<QcqpSolution> {
    let n = p.dim;
    let mut z = warm.map_or_else(|| vec![0.0; n], |w| w.z.clone());
    let mut rounds = 0;
    let worst = p.constraints.iter().fold(f64::NEG_INFINITY, |m, c| m.max(-c.eval(&z)));
    if worst >= 0.0 {
        let aux = phase_one(p);
        let mut y = z.clone();
        y.push(worst + worst.max(1.0));
        let end = follow(&aux, opts, &mut y, &|y: &[f64]| y[n] < 0.0);
        rounds += end.rounds;
        y.truncate(n);
        if !end.stopped {
            let s = p.constraints.iter().fold(0.0f64, |m, c| m.max(-c.eval(&y)));
            // Lower bound on min s from the gap; positive certifies infeasibility.
            let status = if end.converged && s - aux.constraints.len() as f64 / end.t > opts.tol {
                SolveStatus::Infeasible
            } else {
                SolveStatus::MaxIterReached
            };
            let k = p.constraints.len();
            return Ok(finish(p, y, vec![0.0; k], status, rounds, opts.tol));
        }
        z = y;
    }
    let end = follow(p, opts, &mut z, &|_: &[f64]| false);
    rounds += end.rounds;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("QCQP barrier iterate after {rounds} rounds")));
    }
    let lambda = p.constraints.iter().map(|c| 1.0 / (end.t * c.eval(&z))).collect();
    let status = if end.converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterReached
    };
    Ok(finish(p, z, lambda, status, rounds, opts.tol))
}
