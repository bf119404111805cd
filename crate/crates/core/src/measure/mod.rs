//! Discrete probability measures, couplings and pushforwards.
//!
//! A [`DiscreteMeasure`] is a weighted point cloud `Σ a_i δ_{x_i}`; it is the
//! carrier of both the source `μ` and the target `ν` everywhere in the crate.
//! Measures are immutable once built. Duplicate atoms are allowed (pushforwards
//! produce them); merging them is always an explicit call to
//! [`merge_duplicates`].

mod sampling;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::TOLERANCES;
use crate::{Error, Result};

pub use sampling::{DistributionSpec, MixtureComponent, Sampler};

/// Weighted point cloud in `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRecord", into = "MeasureRecord")]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct MeasureRecord {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRecord> for DiscreteMeasure {
    type Error = Error;

    fn try_from(rec: MeasureRecord) -> Result<Self> {
        let mu = DiscreteMeasure::new(rec.points, rec.weights)?;
        if mu.dim != rec.dim {
            return Err(Error::DimensionMismatch {
                context: "measure record",
                expected: rec.dim,
                found: mu.dim,
            });
        }
        Ok(mu)
    }
}

impl From<DiscreteMeasure> for MeasureRecord {
    fn from(mu: DiscreteMeasure) -> Self {
        MeasureRecord {
            dim: mu.dim,
            points: mu.points,
            weights: mu.weights,
        }
    }
}

impl DiscreteMeasure {
    /// Builds a measure, renormalising weights whose sum is within `1e-6` of 1.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "measure weights",
                expected: points.len(),
                found: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional atoms".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "measure atom",
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("measure atom {i}")));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("measure weight {i}")));
            }
            if w < 0.0 {
                return Err(Error::InvalidMeasure(format!("negative weight {w} at atom {i}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > TOLERANCES.weight_normalise {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights, dim })
    }

    /// Uniform weights `1/n` on the given atoms.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Builds a 1D measure from scalar atoms.
    pub fn from_scalars(values: &[f64], weights: Vec<f64>) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// First coordinates of a 1D measure.
    pub fn scalars(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                context: "1D measure",
                expected: 1,
                found: self.dim,
            });
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (mk, pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Reads the `{dim, points, weights}` JSON record.
    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// One row per atom, coordinates then weight. No header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidMeasure(format!("row {row}: {e}")))?;
            if vals.len() < 2 {
                return Err(Error::InvalidMeasure(format!(
                    "row {row}: need at least one coordinate and a weight"
                )));
            }
            let (coords, w) = vals.split_at(vals.len() - 1);
            points.push(coords.to_vec());
            weights.push(w[0]);
        }
        Self::new(points, weights)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (p, w) in self.points.iter().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{w:e}"));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A map evaluated pointwise on atoms.
pub trait PointMap: Sync {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<F> PointMap for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self(x))
    }
}

/// The identity map.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl PointMap for Identity {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
}

/// Evaluates `g` on every atom, failing with the atom index on error.
pub fn map_atoms(mu: &DiscreteMeasure, g: &dyn PointMap) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(mu.len());
    for (i, x) in mu.points.iter().enumerate() {
        let y = g.eval(x).map_err(|e| Error::MapEvaluation {
            index: i,
            reason: e.to_string(),
        })?;
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::MapEvaluation {
                index: i,
                reason: "empty or non-finite output".into(),
            });
        }
        if let Some(first) = out.first() {
            if first.len() != y.len() {
                return Err(Error::MapEvaluation {
                    index: i,
                    reason: format!("output dimension {} differs from {}", y.len(), first.len()),
                });
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// `g#μ`: atoms `g(x_i)` with the weights of `μ` untouched.
pub fn pushforward(mu: &DiscreteMeasure, g: &dyn PointMap) -> Result<DiscreteMeasure> {
    let points = map_atoms(mu, g)?;
    let dim = points[0].len();
    Ok(DiscreteMeasure {
        points,
        weights: mu.weights.clone(),
        dim,
    })
}

/// `m₂(ρ) = Σ_i w_i ‖p_i‖²`.
pub fn second_moment(rho: &DiscreteMeasure) -> f64 {
    rho.points
        .iter()
        .zip(&rho.weights)
        .map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>())
        .sum()
}

/// Coalesces atoms connected by Euclidean distance `≤ tol` (single linkage)
/// into their weighted centroid. Output order follows first appearance.
pub fn merge_duplicates(mu: &DiscreteMeasure, tol: f64) -> DiscreteMeasure {
    let n = mu.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let tol2 = tol.max(0.0).powi(2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = mu.points[i]
                .iter()
                .zip(&mu.points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 <= tol2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = members.len();
            members.push(Vec::new());
        }
        members[slot[r]].push(i);
    }
    let mut points = Vec::with_capacity(members.len());
    let mut weights = Vec::with_capacity(members.len());
    for group in members {
        if group.len() == 1 {
            points.push(mu.points[group[0]].clone());
            weights.push(mu.weights[group[0]]);
            continue;
        }
        let w: f64 = group.iter().map(|&i| mu.weights[i]).sum();
        let mut c = vec![0.0; mu.dim];
        for &i in &group {
            let coef = if w > 0.0 {
                mu.weights[i] / w
            } else {
                1.0 / group.len() as f64
            };
            for (ck, pk) in c.iter_mut().zip(&mu.points[i]) {
                *ck += coef * pk;
            }
        }
        points.push(c);
        weights.push(w);
    }
    DiscreteMeasure {
        points,
        weights,
        dim: mu.dim,
    }
}

/// A transport plan `π ∈ Π(a, b)` stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    matrix: DMatrix<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

/// Sparse plan entry for the `{i, j, mass}` JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

impl Coupling {
    /// Validates nonnegativity and both marginals (within `1e-8`).
    pub fn new(matrix: DMatrix<f64>, row_marginal: &[f64], col_marginal: &[f64]) -> Result<Self> {
        let (n, m) = matrix.shape();
        if n != row_marginal.len() {
            return Err(Error::DimensionMismatch {
                context: "coupling rows",
                expected: row_marginal.len(),
                found: n,
            });
        }
        if m != col_marginal.len() {
            return Err(Error::DimensionMismatch {
                context: "coupling columns",
                expected: col_marginal.len(),
                found: m,
            });
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coupling entry {v}")));
        }
        if let Some(v) = matrix.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidCoupling(format!("negative entry {v}")));
        }
        let tol = TOLERANCES.marginal;
        for i in 0..n {
            let s: f64 = matrix.row(i).sum();
            if (s - row_marginal[i]).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "row {i} sums to {s}, expected {}",
                    row_marginal[i]
                )));
            }
        }
        for j in 0..m {
            let s: f64 = matrix.column(j).sum();
            if (s - col_marginal[j]).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "column {j} sums to {s}, expected {}",
                    col_marginal[j]
                )));
            }
        }
        Ok(Self {
            matrix,
            row_marginal: row_marginal.to_vec(),
            col_marginal: col_marginal.to_vec(),
        })
    }

    /// The independent coupling `a ⊗ b`.
    pub fn product(a: &[f64], b: &[f64]) -> Result<Self> {
        let matrix = DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j]);
        Self::new(matrix, a, b)
    }

    pub fn from_triplets(n: usize, m: usize, entries: &[PlanEntry], a: &[f64], b: &[f64]) -> Result<Self> {
        let mut matrix = DMatrix::zeros(n, m);
        for e in entries {
            if e.i >= n || e.j >= m {
                return Err(Error::InvalidCoupling(format!(
                    "entry ({}, {}) outside {n}x{m}",
                    e.i, e.j
                )));
            }
            matrix[(e.i, e.j)] += e.mass;
        }
        Self::new(matrix, a, b)
    }

    /// Nonzero entries in row-major order.
    pub fn to_triplets(&self) -> Vec<PlanEntry> {
        let (n, m) = self.matrix.shape();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let mass = self.matrix[(i, j)];
                if mass > 0.0 {
                    out.push(PlanEntry { i, j, mass });
                }
            }
        }
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    /// `π · M = Σ_ij π_ij M_ij`.
    pub fn dot(&self, cost: &DMatrix<f64>) -> f64 {
        self.matrix.iter().zip(cost.iter()).map(|(p, c)| p * c).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.matrix.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        crate::io::write_matrix_csv(&self.matrix, writer)
    }

    /// `{rows, cols, entries: [{i, j, mass}]}`.
    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        let (rows, cols) = self.shape();
        let rec = CouplingRecord {
            rows,
            cols,
            entries: self.to_triplets(),
        };
        serde_json::to_writer(writer, &rec)?;
        Ok(())
    }

    /// Reads the triplet form and validates it against the marginals `a`, `b`.
    pub fn from_json_reader<R: Read>(reader: R, a: &[f64], b: &[f64]) -> Result<Self> {
        let rec: CouplingRecord = serde_json::from_reader(reader)?;
        Self::from_triplets(rec.rows, rec.cols, &rec.entries, a, b)
    }
}

#[derive(Serialize, Deserialize)]
struct CouplingRecord {
    rows: usize,
    cols: usize,
    entries: Vec<PlanEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn construction_normalises_small_errors_and_rejects_large_ones() {
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5 + 5e-7]).unwrap();
        assert!(approx(mu.weights().iter().sum::<f64>(), 1.0, 1e-15));
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![-0.5, 1.5]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![], vec![]).is_err());
    }

    #[test]
    fn identity_pushforward_is_the_same_measure() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![2.0, -1.0]], vec![0.25, 0.75]).unwrap();
        assert_eq!(pushforward(&mu, &Identity).unwrap(), mu);
    }

    #[test]
    fn square_map_collapses_symmetric_atoms() {
        let mu = DiscreteMeasure::uniform(vec![vec![-1.0], vec![1.0]]).unwrap();
        let img = pushforward(&mu, &|x: &[f64]| vec![x[0] * x[0]]).unwrap();
        assert_eq!(img.points(), &[vec![1.0], vec![1.0]]);
        let merged = merge_duplicates(&img, 0.0);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.points()[0], vec![1.0]);
        assert_eq!(merged.weights()[0], 1.0);
    }

    #[test]
    fn pushforward_of_piecewise_existence_map() {
        // g_{1/3}: x-1 below -1/3, 4x on [-1/3, 1/3], x+1 above 1/3.
        let eps = 1.0 / 3.0;
        let g = move |x: &[f64]| {
            let t = x[0];
            vec![if t <= -eps {
                t - 1.0
            } else if t >= eps {
                t + 1.0
            } else {
                (1.0 + eps) / eps * t
            }]
        };
        let mu = DiscreteMeasure::uniform(vec![vec![-1.0], vec![-1.0 / 3.0], vec![1.0 / 3.0], vec![1.0]]).unwrap();
        let img = pushforward(&mu, &g).unwrap();
        let expect = [-2.0, -4.0 / 3.0, 4.0 / 3.0, 2.0];
        for (p, e) in img.points().iter().zip(expect) {
            assert!(approx(p[0], e, 1e-15), "{} vs {e}", p[0]);
        }
    }

    #[test]
    fn pushforward_reports_failing_index() {
        struct Fails;
        impl PointMap for Fails {
            fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
                if x[0] > 0.5 {
                    Err(Error::InvalidParameter("out of domain".into()))
                } else {
                    Ok(x.to_vec())
                }
            }
        }
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![0.2], vec![0.9]]).unwrap();
        match pushforward(&mu, &Fails) {
            Err(Error::MapEvaluation { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap()), 0.0);
        let mu = DiscreteMeasure::uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(approx(second_moment(&mu), 1.0, 1e-15));
        // Independent re-summation: coordinates squared, weighted, in a different order.
        let pts = vec![
            vec![0.3, -1.2, 2.0],
            vec![1.5, 0.0, -0.7],
            vec![-2.2, 0.4, 0.1],
            vec![0.9, 0.9, 0.9],
            vec![-0.5, 3.1, -1.0],
        ];
        let w = vec![0.1, 0.3, 0.2, 0.15, 0.25];
        let mu = DiscreteMeasure::new(pts.clone(), w.clone()).unwrap();
        let mut oracle = 0.0;
        for k in 0..3 {
            for i in (0..5).rev() {
                oracle += w[i] * pts[i][k].powi(2);
            }
        }
        assert!(approx(second_moment(&mu), oracle, 1e-13));
    }

    #[test]
    fn merge_examples() {
        let mu = DiscreteMeasure::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![0.3, 0.7]).unwrap();
        let m = merge_duplicates(&mu, 0.0);
        assert_eq!(m.len(), 1);
        assert!(approx(m.weights()[0], 1.0, 1e-15));

        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(merge_duplicates(&mu, 0.0), mu);

        // Cluster {0, 0.05, 0.1} at tol 0.06 (chain linkage) plus an isolated atom.
        let mu = DiscreteMeasure::new(
            vec![vec![0.0], vec![0.05], vec![0.1], vec![5.0]],
            vec![0.2, 0.3, 0.1, 0.4],
        )
        .unwrap();
        let m = merge_duplicates(&mu, 0.06);
        assert_eq!(m.len(), 2);
        // centroid = (0.2*0 + 0.3*0.05 + 0.1*0.1) / 0.6 = 0.025 / 0.6
        assert!(approx(m.points()[0][0], 0.025 / 0.6, 1e-15));
        assert!(approx(m.weights()[0], 0.6, 1e-15));
        assert_eq!(m.points()[1], vec![5.0]);
    }

    #[test]
    fn coupling_rejects_bad_marginals() {
        let a = [0.5, 0.5];
        let ok = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        assert!(Coupling::new(ok, &a, &a).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        assert!(Coupling::new(bad, &a, &a).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[0.6, -0.1, -0.1, 0.6]);
        assert!(Coupling::new(neg, &a, &a).is_err());
    }

    #[test]
    fn json_and_csv_forms() {
        let mu = DiscreteMeasure::new(vec![vec![0.5, -1.0], vec![2.0, 3.25]], vec![0.25, 0.75]).unwrap();
        let mut buf = Vec::new();
        mu.to_json_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"dim\""));
        assert_eq!(DiscreteMeasure::from_json_reader(&buf[..]).unwrap(), mu);
        let mut buf = Vec::new();
        mu.to_csv_writer(&mut buf).unwrap();
        assert_eq!(DiscreteMeasure::from_csv_reader(&buf[..]).unwrap(), mu);
        let bad = br#"{"dim": 3, "points": [[1.0, 2.0]], "weights": [1.0]}"#;
        assert!(DiscreteMeasure::from_json_reader(&bad[..]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn measure() -> impl Strategy<Value = DiscreteMeasure> {
            (1usize..8, 1usize..4).prop_flat_map(|(n, d)| {
                (
                    proptest::collection::vec(proptest::collection::vec(-10.0..10.0f64, d), n),
                    proptest::collection::vec(0.01..1.0f64, n),
                )
                    .prop_map(|(pts, w)| {
                        let s: f64 = w.iter().sum();
                        DiscreteMeasure::new(pts, w.iter().map(|v| v / s).collect()).unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn pushforward_preserves_mass_and_scales_moment(mu in measure(), c in -3.0..3.0f64) {
                let img = pushforward(&mu, &move |x: &[f64]| x.iter().map(|v| c * v).collect()).unwrap();
                prop_assert_eq!(img.weights(), mu.weights());
                let lhs = second_moment(&img);
                let rhs = c * c * second_moment(&mu);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }

            #[test]
            fn merging_preserves_mass(mu in measure(), tol in 0.0..5.0f64) {
                let m = merge_duplicates(&mu, tol);
                let total: f64 = m.weights().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(m.len() <= mu.len());
            }
        }
    }
}
