//! Maps `g = ∇φ` with `φ` ℓ-strongly convex and `∇φ` L-Lipschitz on each
//! cell of a partition.
//!
//! On data the class is described by pairwise interpolation inequalities
//! `Q ≥ 0`, so fitting reduces to a QCQP over values `(φ_i, g_i)`. Atoms that
//! coincide (same point, same cell) share one variable block: the constraint
//! between them would pin `g_i = g_j` anyway, and the grouping keeps the
//! quadratic-potential point `z₀` strictly feasible, which the witness repair
//! relies on.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycentric::L2Projector;
use crate::config::TOLERANCES;
use crate::measure::{Coupling, DiscreteMeasure, PointMap};
use crate::otcore::{solve_kantorovich, CostFunction, CostMatrix};
use crate::qcqp::{
    self, ConcaveQuadraticConstraint, Method, QcqpProblem, QuadraticObjective, Sense, SolveStatus, SolverOptions, WarmStart,
};
use crate::{Error, Result};

/// Strong convexity `ell` and gradient Lipschitz constant `lip`, `0 ≤ ell < lip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParams {
    pub ell: f64,
    #[serde(rename = "L")]
    pub lip: f64,
}

impl SmoothnessParams {
    pub fn new(ell: f64, lip: f64) -> Result<Self> {
        let p = Self { ell, lip };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell.is_finite() && self.lip.is_finite()) {
            return Err(Error::NonFinite("smoothness parameters".into()));
        }
        if self.ell < 0.0 || self.ell >= self.lip {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= ell < L, got ell = {}, L = {}",
                self.ell, self.lip
            )));
        }
        Ok(())
    }

    fn ratio(&self) -> f64 {
        1.0 - self.ell / self.lip
    }

    pub fn c1(&self) -> f64 {
        1.0 / (2.0 * self.lip * self.ratio())
    }

    pub fn c2(&self) -> f64 {
        self.ell / (2.0 * self.ratio())
    }

    pub fn c3(&self) -> f64 {
        self.ell / (self.lip * self.ratio())
    }

    /// Curvature of the quadratic potential used as a strictly feasible point.
    fn mid(&self) -> f64 {
        0.5 * (self.ell + self.lip)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The pairwise interpolation quantity `Q(x, x′, φ, φ′, g, g′)`.
pub fn taylor_q(x: &[f64], xp: &[f64], phi: f64, phip: f64, g: &[f64], gp: &[f64], params: &SmoothnessParams) -> f64 {
    let mut inner_gp = 0.0;
    let mut cross = 0.0;
    for k in 0..x.len() {
        let dx = x[k] - xp[k];
        inner_gp += gp[k] * dx;
        cross += (gp[k] - g[k]) * (xp[k] - x[k]);
    }
    phi - phip - inner_gp - params.c1() * sq_dist(g, gp) - params.c2() * sq_dist(x, xp) + params.c3() * cross
}

/// Rule assigning points to cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum CellRule {
    Whole,
    /// Slabs cut along one coordinate at strictly increasing thresholds.
    AxisThresholds { axis: usize, thresholds: Vec<f64> },
}

impl CellRule {
    pub fn cell_count(&self) -> usize {
        match self {
            CellRule::Whole => 1,
            CellRule::AxisThresholds { thresholds, .. } => thresholds.len() + 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if let CellRule::AxisThresholds { thresholds, .. } = self {
            if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter("thresholds must be finite and strictly increasing".into()));
            }
        }
        Ok(())
    }

    /// Cell of `x`; points on a cut are rejected.
    pub fn cell_of(&self, x: &[f64]) -> Result<usize> {
        match self {
            CellRule::Whole => Ok(0),
            CellRule::AxisThresholds { axis, thresholds } => {
                let v = *x.get(*axis).ok_or(Error::DimensionMismatch {
                    context: "partition axis",
                    expected: axis + 1,
                    found: x.len(),
                })?;
                if thresholds.contains(&v) {
                    return Err(Error::InvalidParameter(format!("point lies on the cell boundary {axis} = {v}")));
                }
                Ok(thresholds.iter().filter(|&&t| t < v).count())
            }
        }
    }
}

/// One cell label per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
    rule: Option<CellRule>,
}

impl Partition {
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            count: 1,
            rule: Some(CellRule::Whole),
        }
    }

    pub fn from_labels(labels: Vec<usize>) -> Self {
        let count = labels.iter().max().map_or(1, |m| m + 1);
        Self {
            labels,
            count,
            rule: None,
        }
    }

    pub fn from_rule(rule: CellRule, points: &[Vec<f64>]) -> Result<Self> {
        rule.validate()?;
        let labels = points.iter().map(|p| rule.cell_of(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels,
            count: rule.cell_count(),
            rule: Some(rule),
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cell_count(&self) -> usize {
        self.count
    }

    pub fn rule(&self) -> Option<&CellRule> {
        self.rule.as_ref()
    }
}

/// Values `(φ_i, g_i)` at the atoms, with the class parameters and cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WitnessRecord", into = "WitnessRecord")]
pub struct TaylorWitness {
    atoms: Vec<Vec<f64>>,
    gradients: Vec<Vec<f64>>,
    potentials: Vec<f64>,
    params: SmoothnessParams,
    partition: Partition,
}

#[derive(Serialize, Deserialize)]
struct WitnessRecord {
    atoms: Vec<Vec<f64>>,
    gradients: Vec<Vec<f64>>,
    potentials: Vec<f64>,
    ell: f64,
    #[serde(rename = "L")]
    lip: f64,
    cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rule: Option<CellRule>,
}

impl TryFrom<WitnessRecord> for TaylorWitness {
    type Error = Error;

    fn try_from(r: WitnessRecord) -> Result<Self> {
        let partition = match r.rule {
            Some(rule) => {
                let p = Partition::from_rule(rule, &r.atoms)?;
                if p.labels != r.cells {
                    return Err(Error::InvalidParameter("cell labels disagree with the partition rule".into()));
                }
                p
            }
            None => Partition::from_labels(r.cells),
        };
        TaylorWitness::new(r.atoms, r.gradients, r.potentials, SmoothnessParams::new(r.ell, r.lip)?, partition)
    }
}

impl From<TaylorWitness> for WitnessRecord {
    fn from(w: TaylorWitness) -> Self {
        WitnessRecord {
            atoms: w.atoms,
            gradients: w.gradients,
            potentials: w.potentials,
            ell: w.params.ell,
            lip: w.params.lip,
            cells: w.partition.labels,
            rule: w.partition.rule,
        }
    }
}

impl TaylorWitness {
    pub fn new(
        atoms: Vec<Vec<f64>>,
        gradients: Vec<Vec<f64>>,
        potentials: Vec<f64>,
        params: SmoothnessParams,
        partition: Partition,
    ) -> Result<Self> {
        params.validate()?;
        let n = atoms.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty witness".into()));
        }
        let d = atoms[0].len();
        for (context, len) in [
            ("witness gradients", gradients.len()),
            ("witness potentials", potentials.len()),
            ("witness cells", partition.labels.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(bad) = atoms.iter().chain(&gradients).find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch {
                context: "witness vectors",
                expected: d,
                found: bad.len(),
            });
        }
        if atoms.iter().chain(&gradients).flatten().chain(&potentials).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("witness".into()));
        }
        Ok(Self {
            atoms,
            gradients,
            potentials,
            params,
            partition,
        })
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }

    pub fn params(&self) -> &SmoothnessParams {
        &self.params
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    fn same_cell_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        let labels = &self.partition.labels;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i && labels[i] == labels[j]).map(move |j| (i, j)))
    }

    /// Smallest within-cell `Q(i, j)` (0 for a single atom per cell).
    pub fn min_q(&self) -> f64 {
        self.same_cell_pairs().fold(0.0, |m, (i, j)| {
            m.min(taylor_q(
                &self.atoms[i],
                &self.atoms[j],
                self.potentials[i],
                self.potentials[j],
                &self.gradients[i],
                &self.gradients[j],
                &self.params,
            ))
        })
    }

    /// Smallest within-cell `⟨g_i − g_j, x_i − x_j⟩ − ell‖x_i − x_j‖²`.
    pub fn strong_monotonicity_gap(&self) -> f64 {
        self.same_cell_pairs().fold(0.0, |m, (i, j)| {
            let (xi, xj, gi, gj) = (&self.atoms[i], &self.atoms[j], &self.gradients[i], &self.gradients[j]);
            let ip: f64 = (0..xi.len()).map(|k| (gi[k] - gj[k]) * (xi[k] - xj[k])).sum();
            m.min(ip - self.params.ell * sq_dist(xi, xj))
        })
    }

    pub fn to_json_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// True iff every within-cell `Q(i, j) ≥ −1e-9`.
pub fn check_interpolable(witness: &TaylorWitness) -> bool {
    witness.min_q() >= -TOLERANCES.interpolation
}

/// Variable blocks `(φ_b, g_b)`, one per group of coincident same-cell atoms.
struct BlockLayout {
    d: usize,
    block_of: Vec<usize>,
    points: Vec<Vec<f64>>,
    cells: Vec<usize>,
}

impl BlockLayout {
    fn new(points: &[Vec<f64>], labels: &[usize]) -> Self {
        let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        let mut layout = Self {
            d: points[0].len(),
            block_of: Vec::with_capacity(points.len()),
            points: Vec::new(),
            cells: Vec::new(),
        };
        for (p, &c) in points.iter().zip(labels) {
            // +0.0 normalises −0.0 so that equal coordinates share a key.
            let key = (c, p.iter().map(|v| (v + 0.0).to_bits()).collect());
            let b = *index.entry(key).or_insert_with(|| {
                layout.points.push(p.clone());
                layout.cells.push(c);
                layout.points.len() - 1
            });
            layout.block_of.push(b);
        }
        layout
    }

    fn blocks(&self) -> usize {
        self.points.len()
    }

    fn var_count(&self) -> usize {
        self.blocks() * (self.d + 1)
    }

    fn phi(&self, b: usize) -> usize {
        b * (self.d + 1)
    }

    fn g(&self, b: usize) -> usize {
        b * (self.d + 1) + 1
    }

    /// `Q(x_b, x_c, φ_b, φ_c, g_b, g_c) ≥ 0` for ordered pairs in a cell.
    fn constraints(&self, params: &SmoothnessParams) -> Result<Vec<ConcaveQuadraticConstraint>> {
        let d = self.d;
        let (c1, c2, c3) = (params.c1(), params.c2(), params.c3());
        let mut quad = DMatrix::zeros(2 * d + 2, 2 * d + 2);
        for k in 0..d {
            let (a, b) = (1 + k, d + 2 + k);
            quad[(a, a)] = -c1;
            quad[(b, b)] = -c1;
            quad[(a, b)] = c1;
            quad[(b, a)] = c1;
        }
        let mut out = Vec::new();
        for b in 0..self.blocks() {
            for c in 0..self.blocks() {
                if b == c || self.cells[b] != self.cells[c] {
                    continue;
                }
                let delta: Vec<f64> = (0..d).map(|k| self.points[b][k] - self.points[c][k]).collect();
                let mut vars = vec![self.phi(b)];
                vars.extend((0..d).map(|k| self.g(b) + k));
                vars.push(self.phi(c));
                vars.extend((0..d).map(|k| self.g(c) + k));
                let mut lin = vec![0.0; 2 * d + 2];
                lin[0] = 1.0;
                lin[d + 1] = -1.0;
                for k in 0..d {
                    lin[1 + k] = c3 * delta[k];
                    lin[d + 2 + k] = -(1.0 + c3) * delta[k];
                }
                // Scaled by 1/‖Δ‖² so that solver tolerances are relative to the
                // pair's own scale; Q vanishes quadratically as atoms approach.
                let scale = 1.0 / dot(&delta, &delta);
                let lin = lin.into_iter().map(|v| v * scale).collect();
                out.push(ConcaveQuadraticConstraint::new(vars, &quad * scale, lin, -c2)?);
            }
        }
        Ok(out)
    }

    /// The quadratic potential `m/2‖x‖²`, `m = (ell + L)/2`: strictly
    /// feasible for distinct blocks.
    fn centre(&self, params: &SmoothnessParams) -> Vec<f64> {
        let m = params.mid();
        let mut z = vec![0.0; self.var_count()];
        for (b, p) in self.points.iter().enumerate() {
            z[self.phi(b)] = 0.5 * m * dot(p, p);
            for k in 0..self.d {
                z[self.g(b) + k] = m * p[k];
            }
        }
        z
    }

    fn expand(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let phi = self.block_of.iter().map(|&b| z[self.phi(b)]).collect();
        let g = self
            .block_of
            .iter()
            .map(|&b| z[self.g(b)..self.g(b) + self.d].to_vec())
            .collect();
        (phi, g)
    }
}

/// Moves `z` toward the strictly feasible `centre` just far enough that every
/// constraint holds exactly; concavity makes the step size explicit.
fn repair(constraints: &[ConcaveQuadraticConstraint], z: &mut [f64], centre: &[f64]) {
    let mut s: f64 = 0.0;
    for c in constraints {
        let v = -c.eval(z);
        if v > 0.0 {
            let q0 = c.eval(centre);
            s = s.max(v / (v + q0));
        }
    }
    if s == 0.0 {
        return;
    }
    let mut s = (s * (1.0 + 1e-6) + 1e-15).min(1.0);
    let base = z.to_vec();
    loop {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (1.0 - s) * base[k] + s * centre[k];
        }
        if s >= 1.0 || constraints.iter().all(|c| c.eval(z) >= 0.0) {
            return;
        }
        s = (2.0 * s).min(1.0);
    }
}

/// Weighted least-squares data of the fixed-plan step:
/// minimise `Σ_b a_b g_bᵀPg_b − 2 r_bᵀP g_b + constant`.
struct BlockObjective {
    mass: Vec<f64>,
    pull: Vec<Vec<f64>>,
    constant: f64,
}

fn build_problem(
    layout: &BlockLayout,
    obj: &BlockObjective,
    p: &DMatrix<f64>,
    constraints: Vec<ConcaveQuadraticConstraint>,
) -> Result<QcqpProblem> {
    let n = layout.var_count();
    let d = layout.d;
    let mut quad = DMatrix::zeros(n, n);
    let mut lin = vec![0.0; n];
    for b in 0..layout.blocks() {
        let g0 = layout.g(b);
        let pr = p * nalgebra::DVector::from_column_slice(&obj.pull[b]);
        for r in 0..d {
            lin[g0 + r] = -2.0 * pr[r];
            for c in 0..d {
                quad[(g0 + r, g0 + c)] = obj.mass[b] * p[(r, c)];
            }
        }
    }
    QcqpProblem::new(n, QuadraticObjective::quadratic(&quad, lin, obj.constant), constraints)
}

fn checked_solve(
    problem: &QcqpProblem,
    opts: &SolverOptions,
    warm: &WarmStart,
    iteration: usize,
) -> Result<qcqp::QcqpSolution> {
    let sol = qcqp::solve(problem, opts, Some(warm))?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        // The repair restores exact feasibility; a near-feasible point at the
        // iteration cap is still usable.
        SolveStatus::MaxIterReached if sol.violation <= 1e-6 => Ok(sol),
        status => Err(Error::Qcqp {
            status,
            iteration,
            violation: sol.violation,
        }),
    }
}

/// Pair constraints scaled by `1/‖Δ‖²` differ in size by orders of
/// magnitude when atoms nearly coincide; a penalty method cannot serve them
/// all with one penalty, a barrier is unaffected.
pub fn map_qcqp_options() -> SolverOptions {
    SolverOptions {
        method: Method::Barrier,
        ..SolverOptions::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_outer: usize,
    /// Stop once an outer step decreases the objective by less than this.
    pub min_decrease: f64,
    pub qcqp: SolverOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            min_decrease: 1e-8,
            qcqp: map_qcqp_options(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub witness: TaylorWitness,
    /// Objective `min_π Σ π_ij c(g_i, y_j)` after each accepted outer step.
    pub trace: Vec<f64>,
    pub plan: Coupling,
}

fn quadratic_cost_matrix(cost: &CostFunction, d: usize) -> Result<DMatrix<f64>> {
    cost.validate()?;
    let p = cost
        .quadratic_matrix(d)
        .ok_or_else(|| Error::InvalidParameter("alternating solver needs a quadratic cost".into()))?;
    if p.nrows() != d {
        return Err(Error::DimensionMismatch {
            context: "quadratic cost",
            expected: d,
            found: p.nrows(),
        });
    }
    Ok(p)
}

/// Alternating minimisation over the witness (a QCQP with the plan fixed)
/// and the plan (exact OT with the witness fixed), for a quadratic cost.
pub fn fit_map(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFunction,
    params: &SmoothnessParams,
    partition: &Partition,
    opts: &FitOptions,
) -> Result<FitResult> {
    params.validate()?;
    let d = mu.dim();
    if nu.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "target measure",
            expected: d,
            found: nu.dim(),
        });
    }
    if partition.labels.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            context: "partition labels",
            expected: mu.len(),
            found: partition.labels.len(),
        });
    }
    let p = quadratic_cost_matrix(cost, d)?;
    let layout = BlockLayout::new(mu.points(), &partition.labels);
    let constraints = layout.constraints(params)?;
    let centre = layout.centre(params);

    let (mut plan, _) = solve_kantorovich(mu.weights(), nu.weights(), CostMatrix::build(mu.points(), nu.points(), cost)?.entries())?;
    let mut warm = WarmStart {
        z: centre.clone(),
        multipliers: None,
    };
    let mut best: Option<(TaylorWitness, Coupling, f64)> = None;
    let mut trace = Vec::new();

    for it in 0..opts.max_outer {
        let obj = plan_objective(&layout, &plan, nu, &p);
        let problem = build_problem(&layout, &obj, &p, constraints.clone())?;
        let sol = checked_solve(&problem, &opts.qcqp, &warm, it)?;
        let mut z = sol.z.clone();
        repair(&constraints, &mut z, &centre);
        let (phi, g) = layout.expand(&z);
        let cm = CostMatrix::build(&g, nu.points(), cost)?;
        let (next_plan, value) = solve_kantorovich(mu.weights(), nu.weights(), cm.entries())?;

        let prev = best.as_ref().map(|b| b.2);
        if let Some(pv) = prev {
            if value > pv {
                break;
            }
        }
        let witness = TaylorWitness::new(mu.points().to_vec(), g, phi, *params, partition.clone())?;
        trace.push(value);
        best = Some((witness, next_plan.clone(), value));
        // Multipliers from a solve stopped at the cap are unreliable; keep only the point.
        let optimal = sol.status == SolveStatus::Optimal;
        warm = WarmStart {
            z,
            multipliers: optimal.then_some(sol.multipliers),
        };
        plan = next_plan;
        if let Some(pv) = prev {
            if pv - value < opts.min_decrease {
                break;
            }
        }
    }
    let (witness, plan, _) = best.ok_or_else(|| Error::InvalidParameter("max_outer must be positive".into()))?;
    Ok(FitResult { witness, trace, plan })
}

fn plan_objective(layout: &BlockLayout, plan: &Coupling, nu: &DiscreteMeasure, p: &DMatrix<f64>) -> BlockObjective {
    let d = layout.d;
    let mut mass = vec![0.0; layout.blocks()];
    let mut pull = vec![vec![0.0; d]; layout.blocks()];
    let mut constant = 0.0;
    let mat = plan.matrix();
    for (i, &b) in layout.block_of.iter().enumerate() {
        for (j, y) in nu.points().iter().enumerate() {
            let w = mat[(i, j)];
            if w == 0.0 {
                continue;
            }
            mass[b] += w;
            for k in 0..d {
                pull[b][k] += w * y[k];
            }
            let py = p * nalgebra::DVector::from_column_slice(y);
            constant += w * dot(y, py.as_slice());
        }
    }
    BlockObjective { mass, pull, constant }
}

/// `L²(μ)` projection onto the class, used with a fixed plan's barycentre.
#[derive(Debug, Clone)]
pub struct ConvexGradientProjector {
    pub params: SmoothnessParams,
    pub partition: Partition,
    pub qcqp: SolverOptions,
}

impl ConvexGradientProjector {
    pub fn new(params: SmoothnessParams, partition: Partition) -> Self {
        Self {
            params,
            partition,
            qcqp: map_qcqp_options(),
        }
    }

    /// Projected witness.
    pub fn project_witness(&self, mu: &DiscreteMeasure, values: &[Vec<f64>]) -> Result<TaylorWitness> {
        if values.len() != mu.len() || self.partition.labels.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                context: "projection targets",
                expected: mu.len(),
                found: values.len(),
            });
        }
        let d = mu.dim();
        let layout = BlockLayout::new(mu.points(), &self.partition.labels);
        let mut obj = BlockObjective {
            mass: vec![0.0; layout.blocks()],
            pull: vec![vec![0.0; d]; layout.blocks()],
            constant: 0.0,
        };
        for (i, &b) in layout.block_of.iter().enumerate() {
            let a = mu.weights()[i];
            obj.mass[b] += a;
            for k in 0..d {
                obj.pull[b][k] += a * values[i][k];
            }
            obj.constant += a * dot(&values[i], &values[i]);
        }
        let constraints = layout.constraints(&self.params)?;
        let centre = layout.centre(&self.params);
        let problem = build_problem(&layout, &obj, &DMatrix::identity(d, d), constraints.clone())?;
        let warm = WarmStart {
            z: centre.clone(),
            multipliers: None,
        };
        let sol = checked_solve(&problem, &self.qcqp, &warm, 0)?;
        let mut z = sol.z;
        repair(&constraints, &mut z, &centre);
        let (phi, g) = layout.expand(&z);
        TaylorWitness::new(mu.points().to_vec(), g, phi, self.params, self.partition.clone())
    }
}

impl L2Projector for ConvexGradientProjector {
    fn project(&self, mu: &DiscreteMeasure, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.project_witness(mu, values)?.gradients)
    }
}

/// Bounding potentials and their gradients at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub phi_l: f64,
    pub grad_l: Vec<f64>,
    pub phi_u: f64,
    pub grad_u: Vec<f64>,
}

fn bound_options() -> SolverOptions {
    SolverOptions {
        tol: 1e-9,
        max_outer: 80,
        ..SolverOptions::default()
    }
}

/// Lower and upper bounding potentials at `x` from the data of cell `cell`.
/// Values are made exactly feasible after the solve, so `φ_l` and `φ_u` are
/// attained by valid interpolations.
pub fn eval_bounds(witness: &TaylorWitness, x: &[f64], cell: usize) -> Result<Bounds> {
    let d = witness.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            context: "bound evaluation point",
            expected: d,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bound evaluation point".into()));
    }
    let members: Vec<usize> = (0..witness.len()).filter(|&i| witness.partition.labels[i] == cell).collect();
    if members.is_empty() {
        return Err(Error::InvalidParameter(format!("cell {cell} holds no data")));
    }
    let prm = &witness.params;
    let (c1, c2, c3) = (prm.c1(), prm.c2(), prm.c3());
    let quad = {
        let mut q = DMatrix::zeros(d + 1, d + 1);
        for k in 0..d {
            q[(k + 1, k + 1)] = -c1;
        }
        q
    };
    let vars: Vec<usize> = (0..=d).collect();
    let mut lower = Vec::with_capacity(members.len());
    let mut upper = Vec::with_capacity(members.len());
    for &j in &members {
        let (xj, gj, pj) = (&witness.atoms[j], &witness.gradients[j], witness.potentials[j]);
        // Lower: Q(x, x_j, t, φ_j, g, g_j) ≥ 0 with Δ = x − x_j.
        let delta: Vec<f64> = (0..d).map(|k| x[k] - xj[k]).collect();
        let mut lin = vec![1.0];
        lin.extend((0..d).map(|k| 2.0 * c1 * gj[k] + c3 * delta[k]));
        let constant = -pj - (1.0 + c3) * dot(gj, &delta) - c1 * dot(gj, gj) - c2 * dot(&delta, &delta);
        lower.push(ConcaveQuadraticConstraint::new(vars.clone(), quad.clone(), lin, constant)?);
        // Upper: Q(x_i, x, φ_i, t, g_i, g) ≥ 0 with Δ = x_i − x.
        let delta: Vec<f64> = delta.iter().map(|v| -v).collect();
        let mut lin = vec![-1.0];
        lin.extend((0..d).map(|k| 2.0 * c1 * gj[k] - (1.0 + c3) * delta[k]));
        let constant = pj - c1 * dot(gj, gj) - c2 * dot(&delta, &delta) + c3 * dot(gj, &delta);
        upper.push(ConcaveQuadraticConstraint::new(vars.clone(), quad.clone(), lin, constant)?);
    }
    let nearest = *members
        .iter()
        .min_by(|&&a, &&b| sq_dist(x, &witness.atoms[a]).total_cmp(&sq_dist(x, &witness.atoms[b])))
        .expect("nonempty cell");
    let mut start = vec![witness.potentials[nearest] + dot(&witness.gradients[nearest], &(0..d).map(|k| x[k] - witness.atoms[nearest][k]).collect::<Vec<_>>())];
    start.extend_from_slice(&witness.gradients[nearest]);
    let warm = WarmStart {
        z: start,
        multipliers: None,
    };
    let mut e_lin = vec![0.0; d + 1];
    e_lin[0] = 1.0;

    let low = QcqpProblem::new(d + 1, QuadraticObjective::linear(e_lin.clone(), Sense::Minimize), lower)?;
    let s = checked_solve(&low, &bound_options(), &warm, 0)?;
    // Smallest feasible t for this g: every lower constraint is t + (rest).
    let slack = low.constraints().iter().map(|c| c.eval(&s.z)).fold(f64::INFINITY, f64::min);
    let phi_l = s.z[0] - slack;
    let grad_l = s.z[1..].to_vec();

    let up = QcqpProblem::new(d + 1, QuadraticObjective::linear(e_lin, Sense::Maximize), upper)?;
    let s = checked_solve(&up, &bound_options(), &warm, 0)?;
    let slack = up.constraints().iter().map(|c| c.eval(&s.z)).fold(f64::INFINITY, f64::min);
    let phi_u = s.z[0] + slack;
    let grad_u = s.z[1..].to_vec();
    Ok(Bounds {
        phi_l,
        grad_l,
        phi_u,
        grad_u,
    })
}

/// Which bounding potential defines out-of-sample values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BoundChoice {
    Lower,
    #[default]
    Upper,
}

/// A fitted witness evaluated anywhere through its bounding potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexGradientMap {
    pub witness: TaylorWitness,
    #[serde(default)]
    pub bound: BoundChoice,
}

impl ConvexGradientMap {
    pub fn new(witness: TaylorWitness) -> Self {
        Self {
            witness,
            bound: BoundChoice::Upper,
        }
    }

    fn cell_of(&self, x: &[f64]) -> Result<usize> {
        match &self.witness.partition.rule {
            Some(rule) => rule.cell_of(x),
            None if self.witness.partition.count == 1 => Ok(0),
            None => Err(Error::InvalidParameter("witness has labelled cells but no rule for new points".into())),
        }
    }

    /// Evaluates many points in parallel.
    pub fn eval_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }
}

impl PointMap for ConvexGradientMap {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let b = eval_bounds(&self.witness, x, self.cell_of(x)?)?;
        Ok(match self.bound {
            BoundChoice::Lower => b.grad_l,
            BoundChoice::Upper => b.grad_u,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(ell: f64, lip: f64) -> SmoothnessParams {
        SmoothnessParams::new(ell, lip).unwrap()
    }

    #[test]
    fn constants_and_rejections() {
        let p = params(0.0, 1.0);
        assert_eq!((p.c1(), p.c2(), p.c3()), (0.5, 0.0, 0.0));
        let p = params(0.5, 2.0);
        assert!((p.c1() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.c2() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.c3() - 1.0 / 3.0).abs() < 1e-15);
        assert!(SmoothnessParams::new(1.0, 1.0).is_err());
        assert!(SmoothnessParams::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn q_on_quadratic_data() {
        let p = params(0.0, 1.0);
        assert_eq!(taylor_q(&[0.0], &[1.0], 0.0, 0.5, &[0.0], &[1.0], &p), 0.0);
        assert_eq!(taylor_q(&[0.3], &[0.3], 1.0, 1.0, &[2.0], &[2.0], &p), 0.0);
    }

    #[test]
    fn single_triple_upper_bound() {
        let w = TaylorWitness::new(vec![vec![0.0]], vec![vec![0.0]], vec![0.0], params(0.0, 1.0), Partition::single(1)).unwrap();
        assert!(check_interpolable(&w));
        let b = eval_bounds(&w, &[1.0], 0).unwrap();
        assert!((b.phi_u - 0.5).abs() < 1e-8, "{b:?}");
        assert!((b.grad_u[0] - 1.0).abs() < 1e-4);
        assert!(b.phi_l <= b.phi_u + 1e-8);
    }

    #[test]
    fn cell_rule_rejects_boundary_points() {
        let rule = CellRule::AxisThresholds {
            axis: 0,
            thresholds: vec![0.0, 1.0],
        };
        assert_eq!(rule.cell_of(&[-1.0, 5.0]).unwrap(), 0);
        assert_eq!(rule.cell_of(&[0.5, 5.0]).unwrap(), 1);
        assert_eq!(rule.cell_of(&[2.0]).unwrap(), 2);
        assert!(rule.cell_of(&[1.0]).is_err());
        assert!(Partition::from_rule(rule, &[vec![0.0]]).is_err());
    }

    #[test]
    fn coincident_atoms_share_a_block() {
        let layout = BlockLayout::new(&[vec![0.0], vec![1.0], vec![0.0], vec![-0.0]], &[0, 0, 0, 1]);
        assert_eq!(layout.block_of, vec![0, 1, 0, 2]);
        assert_eq!(layout.constraints(&params(0.0, 1.0)).unwrap().len(), 2);
    }

    #[test]
    fn repair_restores_feasibility() {
        let prm = params(0.5, 2.0);
        let layout = BlockLayout::new(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.3, 0.2]], &[0, 0, 0]);
        let cons = layout.constraints(&prm).unwrap();
        let centre = layout.centre(&prm);
        assert!(cons.iter().all(|c| c.eval(&centre) > 0.0));
        let mut z: Vec<f64> = (0..layout.var_count()).map(|k| (k as f64).sin() * 3.0).collect();
        assert!(cons.iter().any(|c| c.eval(&z) < 0.0));
        repair(&cons, &mut z, &centre);
        assert!(cons.iter().all(|c| c.eval(&z) >= 0.0));
    }

    #[test]
    fn witness_json_round_trip() {
        let w = TaylorWitness::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            params(0.0, 1.5),
            Partition::single(2),
        )
        .unwrap();
        let mut buf = Vec::new();
        w.to_json_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"L\":1.5") && text.contains("\"cells\""));
        assert_eq!(TaylorWitness::from_json_reader(&buf[..]).unwrap(), w);
    }

    #[test]
    fn identity_is_optimal_for_equal_measures() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![-0.5, 0.7]]).unwrap();
        let r = fit_map(&mu, &mu, &CostFunction::SquaredEuclidean, &params(0.5, 2.0), &Partition::single(3), &FitOptions::default())
            .unwrap();
        assert!(*r.trace.last().unwrap() <= 1e-7, "{:?}", r.trace);
        assert!(check_interpolable(&r.witness));
    }

    #[test]
    fn non_quadratic_costs_are_rejected() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let c = CostFunction::norm_power(1.0, crate::otcore::Norm::L2).unwrap();
        assert!(fit_map(&mu, &mu, &c, &params(0.0, 1.0), &Partition::single(2), &FitOptions::default()).is_err());
    }
}
