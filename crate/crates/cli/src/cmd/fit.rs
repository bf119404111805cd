use std::path::PathBuf;

use catmap::cvxgrad::{fit_map, ConvexGradientMap, FitOptions, Partition, SmoothnessParams};
use catmap::kernelmap::{descend, DescentOptions, KernelModel, KernelProblem, KernelSpec};
use catmap::measure::Sampler;
use catmap::model::MapModel;
use catmap::nnmap::{train, Activation, NeuralMap, Preset, SgdConfig};
use catmap::quantile1d::solve_map_1d;
use catmap::{CostFunction, DiscreteMeasure};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{load_measure, Context};
use crate::error::{CliError, CliResult};
use crate::settings::{ActivationArg, FitSettings, Solver};

pub const DEFAULT_LIP: f64 = 2.0;
pub const DEFAULT_ELL: f64 = 0.0;
pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_SIGMA2: f64 = 1.0;
pub const DEFAULT_HIDDEN: [usize; 3] = [16, 16, 16];
pub const DEFAULT_W: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// Gaussian to four corner modes with a 2-16-16-16-2 ReLU network.
    FourModes,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Source measure (JSON, or CSV with the weight in the last column).
    #[arg(long, required_unless_present = "preset")]
    pub source: Option<PathBuf>,
    /// Target measure, same formats.
    #[arg(long, required_unless_present = "preset")]
    pub target: Option<PathBuf>,
    /// Sampled source/target laws and network for the nn solver.
    #[arg(long, value_enum, conflicts_with_all = ["source", "target"])]
    pub preset: Option<PresetArg>,
    #[command(flatten)]
    pub settings: FitSettings,
}

/// A trained model with its convergence log.
pub struct Trained {
    pub models: Vec<MapModel>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub objective: f64,
    /// Hyperparameters actually used, marking which came from defaults.
    pub resolved: Value,
}

#[derive(Serialize)]
struct Used<T: Serialize> {
    value: T,
    default: bool,
}

fn pick<T: Serialize + Clone>(v: Option<T>, fallback: T) -> (T, Value) {
    let default = v.is_none();
    let value = v.unwrap_or(fallback);
    let rec = serde_json::to_value(Used {
        value: value.clone(),
        default,
    })
    .expect("plain values serialise");
    (value, rec)
}

fn check_squared(cost: &CostFunction, solver: &str) -> CliResult<()> {
    if cost.quadratic_matrix(1).is_none() {
        return Err(CliError::Usage(format!("the {solver} solver needs a quadratic cost")));
    }
    Ok(())
}

pub fn fit_1d(s: &FitSettings, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> CliResult<Trained> {
    let cost = s.cost.clone().unwrap_or(CostFunction::SquaredEuclidean);
    if cost != CostFunction::SquaredEuclidean {
        return Err(CliError::Usage("the 1d solver is exact for the squared cost only".into()));
    }
    let (lip, lip_rec) = pick(s.lip, DEFAULT_LIP);
    let (ell, ell_rec) = pick(s.ell, DEFAULT_ELL);
    let sol = solve_map_1d(mu, nu, lip, ell)?;
    Ok(Trained {
        models: vec![MapModel::OneD(sol.map)],
        header: vec!["step", "objective"],
        rows: vec![vec![0.0, sol.objective]],
        objective: sol.objective,
        resolved: json!({ "lip": lip_rec, "ell": ell_rec }),
    })
}

pub fn fit_cvx(s: &FitSettings, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> CliResult<Trained> {
    let cost = s.cost.clone().unwrap_or(CostFunction::SquaredEuclidean);
    check_squared(&cost, "cvx")?;
    let (lip, lip_rec) = pick(s.lip, DEFAULT_LIP);
    let (ell, ell_rec) = pick(s.ell, DEFAULT_ELL);
    let defaults = FitOptions::default();
    let (max_outer, outer_rec) = pick(s.max_outer, defaults.max_outer);
    let prm = SmoothnessParams::new(ell, lip)?;
    let opts = FitOptions { max_outer, ..defaults };
    let fit = fit_map(mu, nu, &cost, &prm, &Partition::single(mu.len()), &opts)?;
    let objective = *fit.trace.last().expect("fit records at least one step");
    let rows = fit.trace.iter().enumerate().map(|(k, v)| vec![k as f64, *v]).collect();
    Ok(Trained {
        models: vec![MapModel::ConvexGradient(ConvexGradientMap::new(fit.witness))],
        header: vec!["step", "objective"],
        rows,
        objective,
        resolved: json!({ "lip": lip_rec, "ell": ell_rec, "maxOuter": outer_rec }),
    })
}

pub fn fit_kernel(s: &FitSettings, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> CliResult<Trained> {
    let cost = s.cost.clone().unwrap_or(CostFunction::SquaredEuclidean);
    let (lambda, lambda_rec) = pick(s.lambda, DEFAULT_LAMBDA);
    let (grid, grid_rec) = pick(s.sigma2.clone(), vec![DEFAULT_SIGMA2]);
    if grid.is_empty() {
        return Err(CliError::Usage("--sigma2 needs at least one value".into()));
    }
    let base = DescentOptions::default();
    let (alpha0, a_rec) = pick(s.alpha0, base.alpha0);
    let (tau, t_rec) = pick(s.tau, base.tau);
    let (steps, s_rec) = pick(s.steps, base.steps);
    let opts = DescentOptions { alpha0, tau, steps };
    let mut models = Vec::new();
    let mut rows = Vec::new();
    let mut best = f64::INFINITY;
    for &sigma2 in &grid {
        let spec = KernelSpec::GaussianScalar { sigma2 };
        let problem = KernelProblem::new(&spec, mu, nu, &cost)?;
        let init = KernelModel::new(spec, lambda, s.offset_scale, mu.points().to_vec(), nu.dim())?;
        let (model, trace) = descend(&problem, &init, &opts)?;
        rows.extend(trace.iter().map(|r| vec![sigma2, r.step as f64, r.objective, r.step_size]));
        best = best.min(trace.last().map_or(f64::INFINITY, |r| r.objective));
        models.push(MapModel::Kernel(model));
    }
    Ok(Trained {
        models,
        header: vec!["sigma2", "step", "objective", "step_size"],
        rows,
        objective: best,
        resolved: json!({
            "lambda": lambda_rec, "sigma2": grid_rec, "offsetScale": s.offset_scale,
            "alpha0": a_rec, "tau": t_rec, "steps": s_rec,
        }),
    })
}

/// Network from the settings; unset fields fall back to the defaults.
pub fn build_network(s: &FitSettings, din: usize, dout: usize, seed: u64) -> CliResult<(NeuralMap, Value)> {
    let (hidden, h_rec) = pick(s.hidden.clone(), DEFAULT_HIDDEN.to_vec());
    let (act, act_rec) = pick(s.activation, ActivationArg::Relu);
    let clip = !s.no_clip.unwrap_or(false);
    let (w, w_rec) = pick(s.w, DEFAULT_W);
    let (offset, o_rec) = pick(s.offset, din == dout);
    let mut map = NeuralMap::mlp(din, &hidden, dout, Activation::from(act), clip.then_some(w), offset)?;
    map.init_params(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let rec = json!({
        "hidden": h_rec, "activation": act_rec, "w": if clip { w_rec } else { Value::Null },
        "offset": o_rec, "parameters": map.param_count(),
    });
    Ok((map, rec))
}

fn sgd_config(s: &FitSettings, base: SgdConfig, seed: u64) -> (SgdConfig, Value) {
    let (alpha0, a) = pick(s.alpha0, base.alpha0);
    let (tau, t) = pick(s.tau, base.tau);
    let (steps, st) = pick(s.steps, base.steps);
    let (batch_source, bs) = pick(s.batch_source, base.batch_source);
    let (batch_target, bt) = pick(s.batch_target, base.batch_target);
    let cfg = SgdConfig {
        batch_source,
        batch_target,
        alpha0,
        tau,
        steps,
        seed,
    };
    (cfg, json!({ "alpha0": a, "tau": t, "steps": st, "batchSource": bs, "batchTarget": bt }))
}

pub fn fit_nn(s: &FitSettings, map: &NeuralMap, mu: &dyn Sampler, nu: &dyn Sampler, base: SgdConfig, seed: u64) -> CliResult<Trained> {
    let cost = s.cost.clone().unwrap_or(CostFunction::SquaredEuclidean);
    let (cfg, rec) = sgd_config(s, base, seed);
    let (trained, trace) = train(map, mu, nu, &cost, &cfg)?;
    let window = 100.min(trace.len()).max(1);
    let smoothed = catmap::nnmap::smoothed_losses(&trace, window);
    let rows = trace
        .iter()
        .zip(&smoothed)
        .map(|(r, sm)| vec![r.step as f64, r.loss, *sm, r.step_size, r.param_sup])
        .collect();
    Ok(Trained {
        models: vec![MapModel::Neural(trained)],
        header: vec!["step", "loss", "smoothed_loss", "step_size", "param_sup"],
        rows,
        objective: smoothed.last().copied().unwrap_or(f64::NAN),
        resolved: rec,
    })
}

/// Trains the configured solver on two discrete measures.
pub fn fit_measures(s: &FitSettings, solver: Solver, mu: &DiscreteMeasure, nu: &DiscreteMeasure, seed: u64) -> CliResult<Trained> {
    match solver {
        Solver::OneD => fit_1d(s, mu, nu),
        Solver::Cvx => fit_cvx(s, mu, nu),
        Solver::Kernel => fit_kernel(s, mu, nu),
        Solver::Nn => {
            let (map, arch) = build_network(s, mu.dim(), nu.dim(), seed)?;
            let mut t = fit_nn(s, &map, mu, nu, SgdConfig::default(), seed)?;
            t.resolved["architecture"] = arch;
            Ok(t)
        }
    }
}

pub fn write_outputs(ctx: &Context, t: &Trained, solver: &str, extra: Value) -> CliResult<()> {
    if t.models.len() == 1 {
        ctx.out.write_with("model.json", |w| Ok(t.models[0].to_json_writer(w)?))?;
    } else {
        for (k, m) in t.models.iter().enumerate() {
            ctx.out.write_with(&format!("model_{k}.json"), |w| Ok(m.to_json_writer(w)?))?;
        }
    }
    ctx.out
        .write_with("trace.csv", |w| Ok(catmap::io::write_table_csv(&t.header, &t.rows, w)?))?;
    let mut summary = json!({
        "solver": solver,
        "seed": ctx.seed,
        "objective": t.objective,
        "models": t.models.len(),
        "hyperparameters": t.resolved,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, extra) {
        dst.extend(src);
    }
    ctx.out.write_json("fit.json", &summary)?;
    Ok(())
}

pub fn run(ctx: &Context, args: &FitArgs) -> CliResult<()> {
    let s = ctx.config.fit.clone().overlay(&args.settings);
    let (trained, name, extra) = if let Some(PresetArg::FourModes) = args.preset {
        if !matches!(s.solver, None | Some(Solver::Nn)) {
            return Err(CliError::Usage("the four-modes preset trains the nn solver".into()));
        }
        let p = Preset::four_modes(ctx.seed);
        let has_arch = s.hidden.is_some() || s.activation.is_some() || s.w.is_some() || s.no_clip.is_some() || s.offset.is_some();
        let (map, arch) = if has_arch {
            build_network(&s, 2, 2, ctx.seed)?
        } else {
            (p.map.clone(), json!("four-modes preset"))
        };
        let mut t = fit_nn(&s, &map, &p.source, &p.target, p.config, ctx.seed)?;
        t.resolved["architecture"] = arch;
        (t, "nn", json!({ "preset": "four-modes", "source": p.source, "target": p.target }))
    } else {
        let (Some(src), Some(tgt)) = (&args.source, &args.target) else {
            return Err(CliError::Usage("fit needs --source and --target, or --preset".into()));
        };
        let mu = load_measure(src)?;
        let nu = load_measure(tgt)?;
        let solver = s.solver.ok_or_else(|| CliError::Usage("fit needs --solver".into()))?;
        let name = match solver {
            Solver::Cvx => "cvx",
            Solver::Kernel => "kernel",
            Solver::Nn => "nn",
            Solver::OneD => "1d",
        };
        (fit_measures(&s, solver, &mu, &nu, ctx.seed)?, name, json!({ "n": mu.len(), "m": nu.len() }))
    };
    write_outputs(ctx, &trained, name, extra)?;
    println!("{}", trained.objective);
    Ok(())
}
