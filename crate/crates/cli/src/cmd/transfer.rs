use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use catmap::model::MapModel;
use catmap::DiscreteMeasure;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::fit::{fit_measures, write_outputs};
use super::Context;
use crate::colour::ColourImage;
use crate::error::{io_err, CliError, CliResult};
use crate::settings::{Solver, TransferSettings};

pub const DEFAULT_BUDGET: usize = 4096;

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Training source image; also the evaluation image unless --eval is given.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Training target image whose colours the map should reproduce.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Apply a saved model instead of training.
    #[arg(long, conflicts_with_all = ["target", "identity"])]
    pub model: Option<PathBuf>,
    /// Apply the identity map.
    #[arg(long, conflicts_with = "target")]
    pub identity: bool,
    /// Image the map is applied to.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Output PNG; defaults to transfer.png in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TransferSettings,
}

fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; 3];
    for p in points {
        for (a, v) in m.iter_mut().zip(p) {
            *a += v;
        }
    }
    m.iter().map(|a| a / points.len().max(1) as f64).collect()
}

fn uniform(points: Vec<Vec<f64>>) -> CliResult<DiscreteMeasure> {
    let n = points.len();
    Ok(DiscreteMeasure::new(points, vec![1.0 / n as f64; n])?)
}

pub fn run(ctx: &Context, args: &TransferArgs) -> CliResult<()> {
    let s = ctx.config.transfer.clone().overlay(&args.settings);
    let eval_path = args
        .eval
        .as_ref()
        .or(args.source.as_ref())
        .ok_or_else(|| CliError::Usage("transfer needs --eval or --source".into()))?;
    let eval = ColourImage::load(eval_path)?;

    let (model, meta) = if args.identity {
        (MapModel::Identity { dim: 3 }, json!({ "model": "identity" }))
    } else if let Some(path) = &args.model {
        let f = BufReader::new(File::open(path).map_err(io_err(path))?);
        let m = MapModel::from_json_reader(f)?;
        if m.in_dim().is_some_and(|d| d != 3) {
            return Err(CliError::Usage(format!("{}: model does not act on RGB colours", path.display())));
        }
        (m, json!({ "model": path }))
    } else {
        let (Some(src), Some(tgt)) = (&args.source, &args.target) else {
            return Err(CliError::Usage("transfer needs --source and --target, --model, or --identity".into()));
        };
        let budget = s.budget.unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            return Err(CliError::Usage("--budget must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mu = uniform(ColourImage::load(src)?.subsample(budget, &mut rng))?;
        let nu = uniform(ColourImage::load(tgt)?.subsample(budget, &mut rng))?;
        let solver = s.fit.solver.unwrap_or(Solver::Nn);
        let mut trained = fit_measures(&s.fit, solver, &mu, &nu, ctx.seed)?;
        if trained.models.len() != 1 {
            return Err(CliError::Usage("transfer needs a single model; give one --sigma2".into()));
        }
        let meta = json!({
            "budget": { "value": budget, "default": s.budget.is_none() },
            "solver": { "value": format!("{solver:?}").to_lowercase(), "default": s.fit.solver.is_none() },
            "trainingPixels": [mu.len(), nu.len()],
            "hyperparameters": trained.resolved.clone(),
        });
        write_outputs(ctx, &trained, "transfer", Value::Null)?;
        (trained.models.pop().expect("one model"), meta)
    };

    let mapped = model.eval_many(&eval.pixels)?;
    let displacement = eval
        .pixels
        .iter()
        .zip(&mapped)
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b.clamp(0.0, 1.0)).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let out = ColourImage {
        width: eval.width,
        height: eval.height,
        pixels: mapped,
    };
    let out_path = args.output.clone().unwrap_or_else(|| ctx.out.path("transfer.png"));
    out.save(&out_path)?;
    let clamped: Vec<Vec<f64>> = out.pixels.iter().map(|p| p.iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect();
    ctx.out.write_json(
        "transfer.json",
        &json!({
            "seed": ctx.seed,
            "eval": eval_path,
            "output": out_path,
            "width": eval.width,
            "height": eval.height,
            "map": model.name(),
            "training": meta,
            "meanColourIn": mean(&eval.pixels),
            "meanColourOut": mean(&clamped),
            "maxDisplacement": displacement,
        }),
    )?;
    println!("{}", out_path.display());
    Ok(())
}
