use std::path::PathBuf;

use catmap::otcore::optimal_plan;
use catmap::CostFunction;
use clap::Args;
use serde_json::json;

use super::{load_measure, Context};
use crate::error::{CliError, CliResult};
use crate::settings::OtSettings;

#[derive(Debug, Args)]
pub struct OtArgs {
    /// Source measure (JSON, or CSV with the weight in the last column).
    #[arg(long)]
    pub source: PathBuf,
    /// Target measure, same formats.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub settings: OtSettings,
}

pub fn run(ctx: &Context, args: &OtArgs) -> CliResult<()> {
    let s = ctx.config.ot.clone().overlay(&args.settings);
    let cost = s.cost.unwrap_or(CostFunction::SquaredEuclidean);
    let mu = load_measure(&args.source)?;
    let nu = load_measure(&args.target)?;
    if mu.dim() != nu.dim() {
        return Err(CliError::Usage(format!(
            "source has dimension {} but target has {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let (plan, value) = optimal_plan(&mu, &nu, &cost)?;
    if s.plan.unwrap_or(false) {
        ctx.out.write_with("plan.csv", |w| Ok(plan.to_csv_writer(w)?))?;
    }
    ctx.out.write_json(
        "ot.json",
        &json!({ "value": value, "cost": cost, "n": mu.len(), "m": nu.len(), "planNonzeros": plan.nonzero_count() }),
    )?;
    println!("{value}");
    Ok(())
}
