use catmap::qcqp::{solve, ConcaveQuadraticConstraint, Method, QcqpProblem, QuadraticObjective, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `zᵀMz + qᵀz` under `c_k − zᵀA_k z + b_kᵀz ≥ 0`, the first being the ball of radius 2.
struct Instance {
    m: DMatrix<f64>,
    q: DVector<f64>,
    cons: Vec<(DMatrix<f64>, DVector<f64>, f64)>,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=6usize);
        let mut mat = |scale: f64| DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
        let b = mat(1.0);
        let m = b.transpose() * &b + DMatrix::identity(n, n) * 0.1;
        let q = DVector::from_fn(n, |_, _| rng.random_range(-6.0..6.0));
        let mut cons = vec![(DMatrix::identity(n, n), DVector::zeros(n), 4.0)];
        for _ in 0..rng.random_range(0..=3usize) {
            let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let lin = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            cons.push((c.transpose() * c, lin, rng.random_range(0.2..2.0)));
        }
        Self { m, q, cons }
    }

    fn problem(&self) -> QcqpProblem {
        let n = self.q.len();
        let cons = self
            .cons
            .iter()
            .map(|(a, b, c)| ConcaveQuadraticConstraint::new((0..n).collect(), -a, b.iter().copied().collect(), *c).unwrap())
            .collect();
        QcqpProblem::new(n, QuadraticObjective::quadratic(&self.m, self.q.iter().copied().collect(), 0.0), cons).unwrap()
    }

    fn f(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.m * z)) + self.q.dot(z)
    }

    fn feasible(&self, z: &DVector<f64>) -> bool {
        self.cons.iter().all(|(a, b, c)| c - z.dot(&(a * z)) + b.dot(z) >= 0.0)
    }

    /// Lagrangian dual function, a lower bound on the optimum for every λ ≥ 0.
    fn dual(&self, lambda: &[f64]) -> f64 {
        let mut h = self.m.clone();
        let mut r = self.q.clone();
        let mut k = 0.0;
        for (l, (a, b, c)) in lambda.iter().zip(&self.cons) {
            h += a * *l;
            r -= b * *l;
            k -= l * c;
        }
        let sol = h.clone().cholesky().unwrap().solve(&r);
        k - 0.25 * r.dot(&sol)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Coordinate ascent on the concave dual; tight by Slater's condition.
fn dual_optimum(inst: &Instance) -> f64 {
    let k = inst.cons.len();
    let mut lambda = vec![0.0; k];
    for _ in 0..300 {
        for i in 0..k {
            let at = |v: f64| {
                let mut l = lambda.clone();
                l[i] = v;
                inst.dual(&l)
            };
            let mut hi = 1.0;
            while at(hi) > at(hi / 2.0) && hi < 1e9 {
                hi *= 2.0;
            }
            lambda[i] = golden_max(at, 0.0, hi);
        }
    }
    inst.dual(&lambda)
}

/// Best objective over a grid of the radius-2 box and random feasible points.
fn sampled_upper(inst: &Instance, rng: &mut ChaCha8Rng) -> f64 {
    let n = inst.q.len();
    let per = (2e5f64.powf(1.0 / n as f64).floor() as usize).clamp(3, 401);
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let z = DVector::from_fn(n, |i, _| -2.0 + 4.0 * idx[i] as f64 / (per - 1) as f64);
        if inst.feasible(&z) {
            best = best.min(inst.f(&z));
        }
        let mut i = 0;
        while i < n {
            idx[i] += 1;
            if idx[i] < per {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    let mut found = 0;
    while found < 100 {
        let z = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        if inst.feasible(&z) {
            best = best.min(inst.f(&z));
            found += 1;
        }
    }
    best
}

#[test]
fn random_instances_match_the_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..40 {
        let inst = Instance::random(&mut rng);
        let p = inst.problem();
        let lower = dual_optimum(&inst);
        let upper = sampled_upper(&inst, &mut rng);
        assert!(lower <= upper + 1e-9, "case {case}: dual {lower} above a feasible value {upper}");
        for method in [Method::AugmentedLagrangian, Method::Barrier] {
            let opts = SolverOptions {
                method,
                ..Default::default()
            };
            let s = solve(&p, &opts, None).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal, "case {case} {method:?}");
            assert!(s.violation <= 1e-7, "case {case} {method:?}");
            assert!((s.value - lower).abs() <= 1e-4 * (1.0 + lower.abs()), "case {case} {method:?}: {} vs dual {lower}", s.value);
            assert!(s.value <= upper + 1e-7, "case {case} {method:?}: {} above sampled {upper}", s.value);
        }
    }
}
