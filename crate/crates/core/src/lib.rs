//! # catmap
//!
//! Constrained approximate transport maps: find a map `g` in a structured
//! class `G` minimising the optimal transport cost `T_c(g#μ, ν)` between the
//! image of a source measure and a target measure.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Role |
//! |--------|------|
//! | [`measure`] | Discrete measures, couplings, pushforwards, samplers |
//! | [`otcore`] | Exact discrete Kantorovich solver, costs, Danskin subgradients |
//! | [`quantile1d`] | CDFs, pseudo-inverses, 1D `W₂`, closed-form 1D map problem |
//! | [`barycentric`] | Barycentric projection and the L² decomposition identity |
//! | [`qcqp`] | Convex QCQP solver (augmented Lagrangian) |
//! | [`cvxgrad`] | Lipschitz gradients of strongly convex potentials (alternating minimisation) |
//! | [`kernelmap`] | RKHS maps fitted by subgradient descent |
//! | [`nnmap`] | Box-constrained neural maps trained by minibatch OT SGD |
//! | [`planapprox`] | Approximating a coupling by a deterministic plan `(I, g)#μ` |
//! | [`repro`] | Scripted constructions and counterexamples as checkable experiments |
//!
//! ## Quick start
//!
//! ```rust
//! use catmap::measure::DiscreteMeasure;
//! use catmap::otcore::{transport_cost, CostFunction};
//!
//! let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
//! let nu = DiscreteMeasure::uniform(vec![vec![1.0], vec![2.0]]).unwrap();
//! let w2 = transport_cost(&mu, &nu, &CostFunction::SquaredEuclidean).unwrap();
//! assert!((w2 - 1.0).abs() < 1e-12);
//! ```

pub mod barycentric;
pub mod config;
pub mod cvxgrad;
mod error;
pub mod io;
pub mod kernelmap;
pub mod measure;
pub mod model;
pub mod nnmap;
pub mod otcore;
pub mod planapprox;
pub mod qcqp;
pub mod quantile1d;
pub mod repro;

pub use error::{Error, Result};
pub use measure::{Coupling, DiscreteMeasure, PointMap};
pub use otcore::CostFunction;
