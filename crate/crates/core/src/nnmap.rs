//! Feed-forward maps with parameters confined to the box `[−w, w]^p`,
//! trained by projected minibatch SGD on the discrete OT loss.
//!
//! Layer `n` computes `a_n(W_n h_{n−1} + b_n [+ x])`, the optional `+ x`
//! being an identity skip from the input. With `offset` the network output is
//! `x + h_N`. Parameters are laid out layer by layer, `W_n` row-major then
//! `b_n`. The network always evaluates `P_Θ(θ)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measure::{DistributionSpec, PointMap, Sampler};
use crate::otcore::{solve_kantorovich, CostFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative, with `ReLU′(0) = 0`.
    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - v.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// Coordinatewise clamp onto `[−w, w]`.
pub fn project_params(theta: &[f64], w: f64) -> Vec<f64> {
    theta.iter().map(|t| t.clamp(-w, w)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct NeuralMap {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    skips: Vec<bool>,
    w: Option<f64>,
    offset: bool,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    #[serde(default)]
    skips: Vec<bool>,
    /// `null` for an unclipped network.
    w: Option<f64>,
    offset: bool,
    theta: Vec<f64>,
}

impl TryFrom<NetworkRecord> for NeuralMap {
    type Error = Error;

    fn try_from(r: NetworkRecord) -> Result<Self> {
        let layers = r.activations.len();
        let skips = if r.skips.is_empty() { vec![false; layers] } else { r.skips };
        let mut m = NeuralMap::new(r.dims, r.activations, skips, r.w, r.offset)?;
        m.set_theta(r.theta)?;
        Ok(m)
    }
}

impl From<NeuralMap> for NetworkRecord {
    fn from(m: NeuralMap) -> Self {
        NetworkRecord {
            dims: m.dims,
            activations: m.activations,
            skips: m.skips,
            w: m.w,
            offset: m.offset,
            theta: m.theta,
        }
    }
}

/// Layer inputs and pre-activations of one forward pass.
struct Cache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl NeuralMap {
    /// A network with zero parameters.
    pub fn new(dims: Vec<usize>, activations: Vec<Activation>, skips: Vec<bool>, w: Option<f64>, offset: bool) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter("need at least two positive layer widths".into()));
        }
        let layers = dims.len() - 1;
        if activations.len() != layers || skips.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "activations and skips per layer",
                expected: layers,
                found: activations.len().min(skips.len()),
            });
        }
        for (n, &s) in skips.iter().enumerate() {
            if s && dims[n + 1] != dims[0] {
                return Err(Error::DimensionMismatch {
                    context: "identity skip width",
                    expected: dims[0],
                    found: dims[n + 1],
                });
            }
        }
        if offset && dims[layers] != dims[0] {
            return Err(Error::DimensionMismatch {
                context: "identity offset needs equal input and output widths",
                expected: dims[0],
                found: dims[layers],
            });
        }
        if let Some(w) = w {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!("box radius must be > 0, got {w}")));
            }
        }
        let p = (0..layers).map(|n| dims[n + 1] * (dims[n] + 1)).sum();
        Ok(Self {
            dims,
            activations,
            skips,
            w,
            offset,
            theta: vec![0.0; p],
        })
    }

    /// `din → hidden… → dout` with `act` on hidden layers and a linear output.
    pub fn mlp(din: usize, hidden: &[usize], dout: usize, act: Activation, w: Option<f64>, offset: bool) -> Result<Self> {
        let mut dims = vec![din];
        dims.extend_from_slice(hidden);
        dims.push(dout);
        let mut acts = vec![act; hidden.len()];
        acts.push(Activation::Identity);
        let layers = acts.len();
        Self::new(dims, acts, vec![false; layers], w, offset)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn box_radius(&self) -> Option<f64> {
        self.w
    }

    pub fn has_offset(&self) -> bool {
        self.offset
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("validated")
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                context: "network parameters",
                expected: self.theta.len(),
                found: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        self.theta = theta;
        Ok(())
    }

    /// Uniform draws in `[−s_n, s_n]` per layer, `s_n = min(w, 1/√fan_in)`.
    pub fn init_params<R: Rng>(&mut self, rng: &mut R) {
        let mut k = 0;
        for n in 0..self.dims.len() - 1 {
            let s = (1.0 / (self.dims[n] as f64).sqrt()).min(self.w.unwrap_or(f64::INFINITY));
            for _ in 0..self.dims[n + 1] * (self.dims[n] + 1) {
                self.theta[k] = s * (2.0 * rng.random::<f64>() - 1.0);
                k += 1;
            }
        }
    }

    fn projected(&self, theta: &[f64]) -> Vec<f64> {
        match self.w {
            Some(w) => project_params(theta, w),
            None => theta.to_vec(),
        }
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                context: "network parameters",
                expected: self.theta.len(),
                found: theta.len(),
            });
        }
        if x.len() != self.dims[0] {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.dims[0],
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Runs the recursion with already-projected parameters.
    fn run(&self, tp: &[f64], x: &[f64]) -> (Vec<f64>, Cache) {
        let layers = self.dims.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
        };
        let mut h = x.to_vec();
        let mut k = 0;
        for n in 0..layers {
            let (din, dout) = (self.dims[n], self.dims[n + 1]);
            let wmat = &tp[k..k + dout * din];
            let bias = &tp[k + dout * din..k + dout * (din + 1)];
            k += dout * (din + 1);
            let mut z: Vec<f64> = (0..dout)
                .map(|r| bias[r] + wmat[r * din..(r + 1) * din].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if self.skips[n] {
                for (zr, xr) in z.iter_mut().zip(x) {
                    *zr += xr;
                }
            }
            let next = z.iter().map(|&v| self.activations[n].apply(v)).collect();
            cache.inputs.push(std::mem::replace(&mut h, next));
            cache.pre.push(z);
        }
        if self.offset {
            for (o, xr) in h.iter_mut().zip(x) {
                *o += xr;
            }
        }
        (h, cache)
    }

    /// `g_{P_Θ(θ)}(x)`.
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        Ok(self.run(&self.projected(theta), x).0)
    }

    /// Adds `∂⟨grad_out, g(x)⟩/∂P_Θ(θ)` into `acc`.
    fn backward(&self, tp: &[f64], cache: &Cache, grad_out: &[f64], acc: &mut [f64]) {
        let layers = self.dims.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut k = 0;
        for n in 0..layers {
            offsets.push(k);
            k += self.dims[n + 1] * (self.dims[n] + 1);
        }
        let mut delta = grad_out.to_vec();
        for n in (0..layers).rev() {
            let (din, dout) = (self.dims[n], self.dims[n + 1]);
            for (dr, &z) in delta.iter_mut().zip(&cache.pre[n]) {
                *dr *= self.activations[n].derivative(z);
            }
            let k = offsets[n];
            let input = &cache.inputs[n];
            for r in 0..dout {
                if delta[r] == 0.0 {
                    continue;
                }
                let row = &mut acc[k + r * din..k + (r + 1) * din];
                for (a, hv) in row.iter_mut().zip(input) {
                    *a += delta[r] * hv;
                }
                acc[k + dout * din + r] += delta[r];
            }
            if n > 0 {
                let wmat = &tp[k..k + dout * din];
                delta = (0..din).map(|c| (0..dout).map(|r| wmat[r * din + c] * delta[r]).sum()).collect();
            }
        }
    }

    /// Smallest `|pre-activation|` over ReLU units at `x`; infinite without
    /// ReLU layers. Positive means `θ ↦ g_θ(x)` is smooth near `θ`.
    pub fn relu_margin(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        let (_, cache) = self.run(&self.projected(theta), x);
        let mut m = f64::INFINITY;
        for (n, z) in cache.pre.iter().enumerate() {
            if self.activations[n] == Activation::Relu {
                m = z.iter().fold(m, |m, v| m.min(v.abs()));
            }
        }
        Ok(m)
    }

    /// `K_N` with `K_0 = 1`, `K_n = ‖W_n‖ K_{n−1} (+1 with a skip)`, `+1` for
    /// the offset; `‖W_n‖ ≤ w √(d_n d_{n−1})` from the box alone.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_with(|n| match self.w {
            Some(w) => w * ((self.dims[n] * self.dims[n + 1]) as f64).sqrt(),
            None => f64::INFINITY,
        })
    }

    /// The same recursion with the Frobenius norms of the projected weights.
    pub fn lipschitz_bound_at(&self, theta: &[f64]) -> f64 {
        let tp = self.projected(theta);
        let mut k = 0;
        let mut norms = Vec::new();
        for n in 0..self.dims.len() - 1 {
            let (din, dout) = (self.dims[n], self.dims[n + 1]);
            norms.push(tp[k..k + din * dout].iter().map(|v| v * v).sum::<f64>().sqrt());
            k += dout * (din + 1);
        }
        self.lipschitz_with(|n| norms[n])
    }

    fn lipschitz_with(&self, layer_norm: impl Fn(usize) -> f64) -> f64 {
        let mut k: f64 = 1.0;
        for n in 0..self.dims.len() - 1 {
            k = layer_norm(n) * k + if self.skips[n] { 1.0 } else { 0.0 };
        }
        if self.offset {
            k += 1.0;
        }
        k
    }

    pub fn to_json_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

impl PointMap for NeuralMap {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(&self.theta, x)
    }
}

fn batch_outputs(map: &NeuralMap, tp: &[f64], xs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Cache)>> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("empty source batch".into()));
    }
    for x in xs {
        map.check(tp, x)?;
    }
    Ok(xs.par_iter().map(|x| map.run(tp, x)).collect())
}

fn batch_plan(outs: &[Vec<f64>], ys: &[Vec<f64>], c: &CostFunction) -> Result<(crate::Coupling, f64)> {
    if ys.is_empty() {
        return Err(Error::InvalidParameter("empty target batch".into()));
    }
    let cm = crate::otcore::CostMatrix::build(outs, ys, c)?;
    let a = vec![1.0 / outs.len() as f64; outs.len()];
    let b = vec![1.0 / ys.len() as f64; ys.len()];
    solve_kantorovich(&a, &b, cm.entries())
}

/// `T_c(δ_{h(θ,X)}, δ_Y)` with uniform batch weights.
pub fn minibatch_loss(map: &NeuralMap, theta: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>], c: &CostFunction) -> Result<f64> {
    let tp = map.projected(theta);
    let outs: Vec<Vec<f64>> = batch_outputs(map, &tp, xs)?.into_iter().map(|o| o.0).collect();
    Ok(batch_plan(&outs, ys, c)?.1)
}

/// Loss and subgradient `Σ_ij π_ij ∂_θ c(h(θ, x_i), y_j)` through the Danskin
/// plan. Per-sample contributions are summed in index order.
pub fn loss_and_subgradient(
    map: &NeuralMap,
    theta: &[f64],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    c: &CostFunction,
) -> Result<(f64, Vec<f64>)> {
    let tp = map.projected(theta);
    let runs = batch_outputs(map, &tp, xs)?;
    let outs: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let (plan, loss) = batch_plan(&outs, ys, c)?;
    let pm = plan.matrix();
    let p = map.param_count();
    let parts: Vec<Vec<f64>> = runs
        .par_iter()
        .enumerate()
        .map(|(i, (out, cache))| {
            let mut g_out = vec![0.0; out.len()];
            for (j, y) in ys.iter().enumerate() {
                let w = pm[(i, j)];
                if w != 0.0 {
                    for (g, d) in g_out.iter_mut().zip(c.grad_x(out, y)) {
                        *g += w * d;
                    }
                }
            }
            let mut acc = vec![0.0; p];
            map.backward(&tp, cache, &g_out, &mut acc);
            acc
        })
        .collect();
    let mut grad = vec![0.0; p];
    for part in &parts {
        for (g, v) in grad.iter_mut().zip(part) {
            *g += v;
        }
    }
    // Chain through the clamp: 1 strictly inside, 0 outside, and at the
    // boundary 0 only when descent would push further out.
    if let Some(w) = map.w {
        for (g, &t) in grad.iter_mut().zip(theta) {
            let outward = (t >= w && *g < 0.0) || (t <= -w && *g > 0.0);
            if t.abs() > w || outward {
                *g = 0.0;
            }
        }
    }
    if let Some(k) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("subgradient entry {k}")));
    }
    Ok((loss, grad))
}

pub fn sgd_subgradient(map: &NeuralMap, theta: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>], c: &CostFunction) -> Result<Vec<f64>> {
    Ok(loss_and_subgradient(map, theta, xs, ys, c)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SgdConfig {
    pub batch_source: usize,
    pub batch_target: usize,
    pub alpha0: f64,
    pub tau: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            batch_source: 64,
            batch_target: 64,
            alpha0: 0.05,
            tau: 500.0,
            steps: 1000,
            seed: 0,
        }
    }
}

impl SgdConfig {
    /// `α_t = α₀ / (1 + t/τ)`.
    pub fn step(&self, t: usize) -> f64 {
        self.alpha0 / (1.0 + t as f64 / self.tau)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_source == 0 || self.batch_target == 0 {
            return Err(Error::InvalidParameter("batch sizes must be positive".into()));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite() && self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter("step schedule needs alpha0 > 0 and tau > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub step_size: f64,
    /// `‖θ_{t+1}‖∞` after projection.
    pub param_sup: f64,
}

/// Projected SGD from the map's current parameters. Each step draws a source
/// and a target batch from one seeded stream, records the batch loss at `θ_t`,
/// then sets `θ_{t+1} = P_Θ(θ_t − α_t φ_t)`.
pub fn train(
    map: &NeuralMap,
    mu: &dyn Sampler,
    nu: &dyn Sampler,
    c: &CostFunction,
    config: &SgdConfig,
) -> Result<(NeuralMap, Vec<TrainRecord>)> {
    config.validate()?;
    if mu.dim() != map.in_dim() || nu.dim() != map.out_dim() {
        return Err(Error::DimensionMismatch {
            context: "sampler dimensions vs network",
            expected: map.in_dim(),
            found: mu.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = map.clone();
    let mut theta = map.projected(&map.theta);
    let mut trace = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        let xs = mu.draw(config.batch_source, &mut rng);
        let ys = nu.draw(config.batch_target, &mut rng);
        let (loss, grad) = loss_and_subgradient(map, &theta, &xs, &ys, c).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFiniteGradient(t),
            e => Error::SolverStep {
                solver: "network SGD",
                iteration: t,
                source: Box::new(e),
            },
        })?;
        let alpha = config.step(t);
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th -= alpha * g;
        }
        theta = map.projected(&theta);
        trace.push(TrainRecord {
            step: t,
            loss,
            step_size: alpha,
            param_sup: theta.iter().fold(0.0, |m, v| m.max(v.abs())),
        });
    }
    out.set_theta(theta)?;
    Ok((out, trace))
}

/// Equal mixture of isotropic Gaussians centred at `(±a, ±a)`.
pub fn corner_mixture(a: f64, std: f64) -> DistributionSpec {
    let parts = [(-a, -a), (-a, a), (a, -a), (a, a)]
        .iter()
        .map(|&(u, v)| DistributionSpec::Gaussian {
            mean: vec![u, v],
            std: vec![std, std],
        })
        .collect();
    DistributionSpec::even_mixture(parts)
}

/// Standard 2D Gaussian pushed onto a four-mode mixture by `x + h(θ, x)`,
/// with `h` a ReLU network `2→16→16→16→2` and weights in `[−½, ½]`.
#[derive(Debug, Clone)]
pub struct Preset {
    pub map: NeuralMap,
    pub source: DistributionSpec,
    pub target: DistributionSpec,
    pub config: SgdConfig,
}

impl Preset {
    pub fn four_modes(seed: u64) -> Self {
        let mut map = NeuralMap::mlp(2, &[16, 16, 16], 2, Activation::Relu, Some(0.5), true).expect("valid architecture");
        map.init_params(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        Self {
            map,
            source: DistributionSpec::standard_gaussian(2),
            target: corner_mixture(2.0, 0.5),
            config: SgdConfig { seed, ..SgdConfig::default() },
        }
    }
}

/// Training log as CSV `step,loss,step_size`.
pub fn write_training_log<W: std::io::Write>(trace: &[TrainRecord], writer: W) -> Result<()> {
    let rows: Vec<Vec<f64>> = trace.iter().map(|r| vec![r.step as f64, r.loss, r.step_size]).collect();
    crate::io::write_table_csv(&["step", "loss", "step_size"], &rows, writer)
}

/// Moving average over the trailing `window` losses.
pub fn smoothed_losses(trace: &[TrainRecord], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(trace.len());
    let mut sum = 0.0;
    for (t, r) in trace.iter().enumerate() {
        sum += r.loss;
        if t >= window {
            sum -= trace[t - window].loss;
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters() {
        let m = NeuralMap::mlp(2, &[4], 2, Activation::Relu, Some(0.5), false).unwrap();
        assert_eq!(m.eval(&[0.3, -1.0]).unwrap(), vec![0.0, 0.0]);
        let m = NeuralMap::mlp(2, &[4], 2, Activation::Relu, Some(0.5), true).unwrap();
        assert_eq!(m.eval(&[0.3, -1.0]).unwrap(), vec![0.3, -1.0]);
    }

    #[test]
    fn one_linear_layer_by_hand() {
        let mut m = NeuralMap::new(vec![2, 2], vec![Activation::Identity], vec![false], None, false).unwrap();
        // W = [[1, 2], [3, 4]], b = [0.5, -1].
        m.set_theta(vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.0]).unwrap();
        assert_eq!(m.eval(&[1.0, -1.0]).unwrap(), vec![-0.5, -2.0]);
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let t = vec![0.1, 1.2, -3.0, -0.5];
        let p = project_params(&t, 0.5);
        assert_eq!(p, vec![0.1, 0.5, -0.5, -0.5]);
        assert_eq!(project_params(&p, 0.5), p);
    }

    #[test]
    fn forward_uses_projected_parameters() {
        let mut m = NeuralMap::new(vec![1, 1], vec![Activation::Identity], vec![false], Some(0.5), false).unwrap();
        m.set_theta(vec![3.0, 0.0]).unwrap();
        assert_eq!(m.eval(&[2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn skip_adds_the_input_inside_the_activation() {
        let m = NeuralMap::new(vec![2, 2], vec![Activation::Relu], vec![true], Some(1.0), false).unwrap();
        assert_eq!(m.eval(&[0.5, -0.5]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(m.lipschitz_bound(), 1.0 * 2.0 + 1.0);
    }

    #[test]
    fn single_pair_loss_is_the_cost() {
        let mut m = NeuralMap::mlp(1, &[3], 1, Activation::Tanh, Some(1.0), true).unwrap();
        m.init_params(&mut ChaCha8Rng::seed_from_u64(3));
        let x = vec![vec![0.4]];
        let y = vec![vec![-1.0]];
        let l = minibatch_loss(&m, m.theta(), &x, &y, &CostFunction::SquaredEuclidean).unwrap();
        let hx = m.eval(&x[0]).unwrap();
        assert!((l - (hx[0] + 1.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_map_onto_origin_has_zero_gradient() {
        let m = NeuralMap::mlp(2, &[3], 2, Activation::Relu, Some(0.5), false).unwrap();
        let xs = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        let ys = vec![vec![0.0, 0.0]];
        let g = sgd_subgradient(&m, m.theta(), &xs, &ys, &CostFunction::SquaredEuclidean).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_coordinates_follow_the_clamp_convention() {
        let mut m = NeuralMap::new(vec![1, 1], vec![Activation::Identity], vec![false], Some(0.5), false).unwrap();
        m.set_theta(vec![0.5, 0.0]).unwrap();
        let xs = vec![vec![1.0]];
        // Target far above: raw gradient on the weight is negative (outward).
        let up = sgd_subgradient(&m, m.theta(), &xs, &[vec![10.0]], &CostFunction::SquaredEuclidean).unwrap();
        assert_eq!(up[0], 0.0);
        assert!(up[1] < 0.0);
        // Target below: inward gradient passes through.
        let down = sgd_subgradient(&m, m.theta(), &xs, &[vec![-10.0]], &CostFunction::SquaredEuclidean).unwrap();
        assert!(down[0] > 0.0);
    }

    #[test]
    fn json_round_trip_and_null_radius() {
        let mut m = NeuralMap::mlp(2, &[3], 2, Activation::Relu, None, true).unwrap();
        m.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        let mut buf = Vec::new();
        m.to_json_writer(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"w\":null"));
        assert_eq!(NeuralMap::from_json_reader(&buf[..]).unwrap(), m);
    }

    #[test]
    fn smoothing_window() {
        let tr: Vec<TrainRecord> = (0..5).map(|t| TrainRecord { step: t, loss: t as f64, step_size: 1.0, param_sup: 0.0 }).collect();
        assert_eq!(smoothed_losses(&tr, 2), vec![0.0, 0.5, 1.5, 2.5, 3.5]);
    }
}
