//! Tolerance constants shared across modules.

/// Numerical tolerances used for validation and identity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Weights summing to 1 within this are renormalised; beyond it they are rejected.
    pub weight_normalise: f64,
    /// Post-normalisation invariant on the weight sum.
    pub weight_sum: f64,
    /// Coupling marginal deviation.
    pub marginal: f64,
    /// Absolute part of value comparisons.
    pub value_abs: f64,
    /// Relative part of value comparisons.
    pub value_rel: f64,
    /// Slack accepted by the interpolability test `Q ≥ -tol`.
    pub interpolation: f64,
    /// Witness invariant slack.
    pub witness: f64,
    /// Diagonal jitter added before Cholesky validation of Gram matrices.
    pub gram_jitter: f64,
    /// Cumulative weights of a CDF must end at 1 within this.
    pub cdf_total: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    weight_normalise: 1e-6,
    weight_sum: 1e-9,
    marginal: 1e-8,
    value_abs: 1e-9,
    value_rel: 1e-9,
    interpolation: 1e-9,
    witness: 1e-8,
    gram_jitter: 1e-10,
    cdf_total: 1e-12,
};

impl Tolerances {
    /// `|a - b| ≤ abs + rel·max(|a|, |b|)`.
    pub fn values_agree(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.value_abs + self.value_rel * a.abs().max(b.abs())
    }
}
