//! One-dimensional transport: CDFs, pseudo-inverses, the quantile formula for
//! `W₂`, and the closed-form map problem over slope-constrained nondecreasing
//! maps.
//!
//! The projection onto `{g : ell·Δx ≤ Δg ≤ L·Δx}` is solved exactly by dynamic
//! programming over convex piecewise-quadratic value functions.

use std::io::Write;

use nalgebra::DMatrix;

use crate::barycentric::barycentric_projection;
use crate::config::TOLERANCES;
use crate::measure::{pushforward, Coupling, DiscreteMeasure, PointMap};
use crate::{Error, Result};

/// A real number or one of the two infinities.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Nondecreasing step function: `levels[0]` left of the first breakpoint,
/// `levels[r]` from breakpoint `r − 1` on. At a breakpoint the function takes
/// the right level if `right_continuous`, else the left one.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
    right_continuous: bool,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>, right_continuous: bool) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "step function levels",
                expected: breakpoints.len() + 1,
                found: levels.len(),
            });
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("breakpoints must be strictly increasing".into()));
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("levels must be nondecreasing".into()));
        }
        if breakpoints.iter().chain(&levels).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step function".into()));
        }
        Ok(Self {
            breakpoints,
            levels,
            right_continuous,
        })
    }

    /// The constant function.
    pub fn constant(level: f64) -> Self {
        Self {
            breakpoints: vec![],
            levels: vec![level],
            right_continuous: true,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = if self.right_continuous {
            self.breakpoints.partition_point(|&b| b <= x)
        } else {
            self.breakpoints.partition_point(|&b| b < x)
        };
        self.levels[r]
    }

    /// `inf {x : F(x) ≥ p}`.
    pub fn right_inverse(&self, p: f64) -> ExtendedReal {
        if self.levels[0] >= p {
            return ExtendedReal::NegInf;
        }
        match self.levels.iter().position(|&l| l >= p) {
            Some(r) => ExtendedReal::Finite(self.breakpoints[r - 1]),
            None => ExtendedReal::PosInf,
        }
    }

    /// `sup {x : G(x) ≤ p}`.
    pub fn left_inverse(&self, p: f64) -> ExtendedReal {
        if *self.levels.last().unwrap() <= p {
            return ExtendedReal::PosInf;
        }
        match self.levels.iter().position(|&l| l > p) {
            Some(0) | None => ExtendedReal::NegInf,
            Some(r) => ExtendedReal::Finite(self.breakpoints[r - 1]),
        }
    }
}

/// Cumulative distribution function of a 1D discrete measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    atoms: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Cdf {
    /// Sorts atoms, merges equal ones and drops zero-weight ones.
    pub fn from_measure(mu: &DiscreteMeasure) -> Result<Self> {
        let xs = mu.scalars()?;
        Self::from_atoms(&xs, mu.weights())
    }

    pub fn from_atoms(xs: &[f64], w: &[f64]) -> Result<Self> {
        let mut idx: Vec<usize> = (0..xs.len()).filter(|&i| w[i] > 0.0).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut atoms: Vec<f64> = Vec::with_capacity(idx.len());
        let mut mass: Vec<f64> = Vec::with_capacity(idx.len());
        for i in idx {
            if atoms.last() == Some(&xs[i]) {
                *mass.last_mut().unwrap() += w[i];
            } else {
                atoms.push(xs[i]);
                mass.push(w[i]);
            }
        }
        let mut cumulative = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for m in mass {
            acc += m;
            cumulative.push(acc);
        }
        let total = acc;
        if (total - 1.0).abs() > TOLERANCES.weight_normalise {
            return Err(Error::InvalidMeasure(format!("cdf total {total}")));
        }
        // Renormalise so the final level is exactly 1.
        for c in &mut cumulative {
            *c /= total;
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self { atoms, cumulative })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `F(x) = μ((−∞, x])`.
    pub fn eval(&self, x: f64) -> f64 {
        let r = self.atoms.partition_point(|&a| a <= x);
        if r == 0 {
            0.0
        } else {
            self.cumulative[r - 1]
        }
    }

    /// `F` as a right-continuous step function.
    pub fn to_step(&self) -> StepFunction {
        let mut levels = vec![0.0];
        levels.extend_from_slice(&self.cumulative);
        StepFunction {
            breakpoints: self.atoms.clone(),
            levels,
            right_continuous: true,
        }
    }

    /// `G(x) = μ((−∞, x))`, the left-continuous version.
    pub fn strict_step(&self) -> StepFunction {
        StepFunction {
            right_continuous: false,
            ..self.to_step()
        }
    }

    /// Quantile `F⁻¹(p) = inf {x : F(x) ≥ p}` for `p ∈ (0, 1]`.
    pub fn right_inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level {p} outside (0, 1]")));
        }
        let r = self.cumulative.partition_point(|&c| c < p);
        Ok(self.atoms[r.min(self.atoms.len() - 1)])
    }
}

/// `inf {x : F(x) ≥ p}` of a CDF.
pub fn right_inverse(f: &Cdf, p: f64) -> Result<f64> {
    f.right_inverse(p)
}

/// `sup {x : G(x) ≤ p}`; `+∞`/`−∞` are returned as sentinels.
pub fn left_inverse(g: &StepFunction, p: f64) -> Result<ExtendedReal> {
    if !p.is_finite() {
        return Err(Error::InvalidParameter(format!("level {p} not finite")));
    }
    Ok(g.left_inverse(p))
}

/// Exact `W₂²` between 1D measures by integrating `|F⁻¹ − G⁻¹|²` over the
/// merged cumulative breakpoints.
pub fn w2_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let f = Cdf::from_measure(mu)?;
    let g = Cdf::from_measure(nu)?;
    let (mut i, mut j) = (0, 0);
    let mut prev = 0.0;
    let mut total = 0.0;
    while i < f.atoms.len() && j < g.atoms.len() {
        let next = f.cumulative[i].min(g.cumulative[j]);
        let d = f.atoms[i] - g.atoms[j];
        total += (next - prev).max(0.0) * d * d;
        prev = next;
        if f.cumulative[i] <= next {
            i += 1;
        }
        if g.cumulative[j] <= next {
            j += 1;
        }
    }
    Ok(total)
}

/// The monotone (north-west corner) coupling between two 1D measures; it is
/// optimal for every convex cost of `x − y`.
pub fn monotone_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
    let xs = mu.scalars()?;
    let ys = nu.scalars()?;
    let mut ix: Vec<usize> = (0..xs.len()).collect();
    let mut iy: Vec<usize> = (0..ys.len()).collect();
    ix.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    iy.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut s: Vec<f64> = mu.weights().to_vec();
    let mut d: Vec<f64> = nu.weights().to_vec();
    let mut plan = DMatrix::zeros(xs.len(), ys.len());
    let (mut p, mut q) = (0, 0);
    while p < ix.len() && q < iy.len() {
        let (i, j) = (ix[p], iy[q]);
        let x = s[i].min(d[j]);
        plan[(i, j)] += x;
        s[i] -= x;
        d[j] -= x;
        if s[i] <= 0.0 {
            p += 1;
        } else {
            q += 1;
        }
    }
    // Rounding leftovers go to the last cell touched.
    if q == iy.len() && p < ix.len() {
        let j = iy[iy.len() - 1];
        for &i in &ix[p..] {
            plan[(i, j)] += s[i];
        }
    }
    Coupling::new(plan, mu.weights(), nu.weights())
}

/// Result of [`quantile_pushforward_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileReport {
    pub max_deviation: f64,
    pub levels_checked: usize,
}

/// Compares `F⁻¹_{g#μ}(p)` with `g(F⁻¹_μ(p))` on a grid of levels avoiding
/// the cumulative breakpoints of `μ`.
pub fn quantile_pushforward_check(mu: &DiscreteMeasure, g: &dyn PointMap) -> Result<QuantileReport> {
    let xs = mu.scalars()?;
    let mut order: Vec<usize> = (0..xs.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let gx: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let y = g.eval(&[*x]).map_err(|e| Error::MapEvaluation {
                index: i,
                reason: e.to_string(),
            })?;
            Ok(y[0])
        })
        .collect::<Result<_>>()?;
    for w in order.windows(2) {
        if xs[w[0]] < xs[w[1]] && gx[w[0]] > gx[w[1]] {
            return Err(Error::NotMonotone(w[0], w[1]));
        }
    }
    let f = Cdf::from_measure(mu)?;
    let image = pushforward(mu, g)?;
    let fg = Cdf::from_measure(&image)?;
    let mut levels: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
    let mut lo = 0.0;
    for &c in f.cumulative() {
        levels.push(0.5 * (lo + c));
        lo = c;
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for p in levels {
        if f.cumulative().iter().any(|&c| (c - p).abs() < 1e-12) {
            continue;
        }
        let lhs = fg.right_inverse(p)?;
        let rhs = g.eval(&[f.right_inverse(p)?])?[0];
        worst = worst.max((lhs - rhs).abs());
        checked += 1;
    }
    Ok(QuantileReport {
        max_deviation: worst,
        levels_checked: checked,
    })
}

/// Convex quadratic piece `A (v − m)² + K`, valid from `start` to the next
/// piece's start.
#[derive(Debug, Clone, Copy)]
struct Piece {
    start: f64,
    a: f64,
    m: f64,
    k: f64,
}

impl Piece {
    fn add_quadratic(&mut self, w: f64, t: f64) {
        let a2 = self.a + w;
        if a2 > 0.0 {
            self.k += self.a * w / a2 * (self.m - t) * (self.m - t);
            self.m = (self.a * self.m + w * t) / a2;
        }
        self.a = a2;
    }
}

/// Argmin interval of a convex piecewise quadratic.
fn argmin(pieces: &[Piece]) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for (p, pc) in pieces.iter().enumerate() {
        let end = pieces.get(p + 1).map_or(f64::INFINITY, |n| n.start);
        let (v, at) = if pc.a > 0.0 {
            let u = pc.m.clamp(pc.start, end);
            (pc.a * (u - pc.m) * (u - pc.m) + pc.k, u)
        } else {
            (pc.k, pc.start)
        };
        if v < best.0 {
            best = (v, p, at);
        }
    }
    let (val, p, at) = best;
    if pieces[p].a > 0.0 {
        return (at, at, val);
    }
    // Flat minimum: it spans the whole piece.
    let end = pieces.get(p + 1).map_or(f64::INFINITY, |n| n.start);
    (pieces[p].start, end, val)
}

/// Weighted least squares on a chain: minimises `Σ a_i (g_i − t_i)²` subject
/// to `lo_i ≤ g_{i+1} − g_i ≤ hi_i`.
pub fn project_chain(a: &[f64], t: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if a.len() != n || lo.len() + 1 != n.max(1) || hi.len() != lo.len() {
        return Err(Error::DimensionMismatch {
            context: "chain projection",
            expected: n,
            found: a.len(),
        });
    }
    if n == 0 {
        return Ok(vec![]);
    }
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::InvalidParameter(format!("empty increment range at {i}")));
    }
    let mut pieces = vec![Piece {
        start: f64::NEG_INFINITY,
        a: 0.0,
        m: t[0],
        k: 0.0,
    }];
    pieces[0].add_quadratic(a[0], t[0]);
    let mut intervals = Vec::with_capacity(n);
    for k in 0..n - 1 {
        let (ulo, uhi, val) = argmin(&pieces);
        intervals.push((ulo, uhi));
        let mut next: Vec<Piece> = Vec::with_capacity(pieces.len() + 2);
        // Left of the argmin the window's best point is its right end: shift by lo.
        for pc in pieces.iter().take_while(|pc| pc.start < ulo) {
            next.push(Piece {
                start: pc.start + lo[k],
                m: pc.m + lo[k],
                ..*pc
            });
        }
        next.push(Piece {
            start: ulo + lo[k],
            a: 0.0,
            m: 0.0,
            k: val,
        });
        // Right of the argmin: shift by hi.
        if uhi.is_finite() {
            let first = pieces.partition_point(|pc| pc.start <= uhi) - 1;
            for pc in pieces.iter().skip(first) {
                next.push(Piece {
                    start: pc.start.max(uhi) + hi[k],
                    m: pc.m + hi[k],
                    ..*pc
                });
            }
        }
        for pc in &mut next {
            pc.add_quadratic(a[k + 1], t[k + 1]);
        }
        // Drop zero-width pieces.
        next.dedup_by(|later, earlier| later.start <= earlier.start && {
            *earlier = *later;
            true
        });
        pieces = next;
    }
    let (ulo, uhi, _) = argmin(&pieces);
    let mut g = vec![0.0; n];
    g[n - 1] = t[n - 1].clamp(ulo, uhi);
    for k in (0..n - 1).rev() {
        let (ulo, uhi) = intervals[k];
        let best = t[k].clamp(ulo, uhi);
        g[k] = best.clamp(g[k + 1] - hi[k], g[k + 1] - lo[k]);
    }
    Ok(g)
}

/// Weighted `L²(μ)` projection of target values onto maps with
/// `ell·(x_{i+1} − x_i) ≤ g_{i+1} − g_i ≤ L·(x_{i+1} − x_i)` on the sorted
/// atoms. Values are returned in the atom order of `mu`.
pub fn project_monotone_lipschitz(mu: &DiscreteMeasure, t: &[f64], lip: f64, ell: f64) -> Result<Vec<f64>> {
    if !(ell >= 0.0 && ell <= lip && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 <= ell <= L, got ell={ell}, L={lip}")));
    }
    let xs = mu.scalars()?;
    if t.len() != xs.len() {
        return Err(Error::DimensionMismatch {
            context: "projection targets",
            expected: xs.len(),
            found: t.len(),
        });
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let a: Vec<f64> = order.iter().map(|&i| mu.weights()[i]).collect();
    let ts: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    let dx: Vec<f64> = order.windows(2).map(|w| xs[w[1]] - xs[w[0]]).collect();
    let lo: Vec<f64> = dx.iter().map(|d| ell * d).collect();
    let hi: Vec<f64> = dx.iter().map(|d| lip * d).collect();
    let gs = project_chain(&a, &ts, &lo, &hi)?;
    let mut out = vec![0.0; xs.len()];
    for (r, &i) in order.iter().enumerate() {
        out[i] = gs[r];
    }
    Ok(out)
}

/// Piecewise-linear map through `(x_k, g_k)`, extended linearly beyond the
/// end atoms with the end slopes; all slopes clipped to `[ell, L]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OneDMap {
    pub xs: Vec<f64>,
    pub gs: Vec<f64>,
    pub ell: f64,
    pub lip: f64,
}

impl OneDMap {
    /// Builds from atom values; coincident atoms must share a value (kept first).
    pub fn new(xs: &[f64], gs: &[f64], ell: f64, lip: f64) -> Result<Self> {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut bx: Vec<f64> = Vec::new();
        let mut bg: Vec<f64> = Vec::new();
        for i in order {
            if bx.last() != Some(&xs[i]) {
                bx.push(xs[i]);
                bg.push(gs[i]);
            }
        }
        if bx.is_empty() {
            return Err(Error::InvalidParameter("no breakpoints".into()));
        }
        Ok(Self { xs: bx, gs: bg, ell, lip })
    }

    fn slope(&self, k: usize) -> f64 {
        ((self.gs[k + 1] - self.gs[k]) / (self.xs[k + 1] - self.xs[k])).clamp(self.ell, self.lip)
    }

    pub fn eval_scalar(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.gs[0] + 1.0f64.clamp(self.ell, self.lip) * (x - self.xs[0]);
        }
        let r = self.xs.partition_point(|&b| b <= x);
        if r == 0 {
            self.gs[0] + self.slope(0) * (x - self.xs[0])
        } else if r >= n {
            self.gs[n - 1] + self.slope(n - 2) * (x - self.xs[n - 1])
        } else {
            self.gs[r - 1] + self.slope(r - 1) * (x - self.xs[r - 1])
        }
    }

    /// Breakpoint CSV `x,g`.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.xs.iter().zip(&self.gs).map(|(x, g)| vec![*x, *g]).collect();
        crate::io::write_table_csv(&["x", "g"], &rows, writer)
    }
}

impl PointMap for OneDMap {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 1 {
            return Err(Error::DimensionMismatch {
                context: "1D map input",
                expected: 1,
                found: x.len(),
            });
        }
        Ok(vec![self.eval_scalar(x[0])])
    }
}

/// Solution of the 1D constrained map problem.
#[derive(Debug, Clone)]
pub struct Map1dSolution {
    /// Values at the atoms of `μ`, in input order.
    pub values: Vec<f64>,
    pub map: OneDMap,
    /// `W₂²(g#μ, ν)`.
    pub objective: f64,
}

/// Projects the barycentric projection of the monotone plan onto the
/// `[ell, L]`-slope class; this is a global solution of the 1D map problem
/// under the squared cost.
pub fn solve_map_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, lip: f64, ell: f64) -> Result<Map1dSolution> {
    let plan = monotone_plan(mu, nu)?;
    let bar = barycentric_projection(&plan, nu.points())?;
    let t: Vec<f64> = (0..mu.len()).map(|i| bar.value(i).map_or(0.0, |v| v[0])).collect();
    let values = project_monotone_lipschitz(mu, &t, lip, ell)?;
    let image = DiscreteMeasure::new(values.iter().map(|&v| vec![v]).collect(), mu.weights().to_vec())?;
    let objective = w2_1d(&image, nu)?;
    let map = OneDMap::new(&mu.scalars()?, &values, ell, lip)?;
    Ok(Map1dSolution { values, map, objective })
}
