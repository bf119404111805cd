use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::settings::{GenSettings, MeasureFormat};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub settings: GenSettings,
}

pub fn run(ctx: &Context, args: &GenArgs) -> CliResult<()> {
    let s = ctx.config.gen.clone().overlay(&args.settings);
    let dist = s.dist.ok_or_else(|| CliError::Usage("gen needs --dist".into()))?;
    let n = s.n.ok_or_else(|| CliError::Usage("gen needs --n".into()))?;
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let spec = dist.resolve()?;
    let mu = spec.sample_measure(n, &mut ChaCha8Rng::seed_from_u64(ctx.seed))?;
    let format = s.format.unwrap_or(MeasureFormat::Json);
    let name = s.name.unwrap_or_else(|| match format {
        MeasureFormat::Json => "measure.json".into(),
        MeasureFormat::Csv => "measure.csv".into(),
    });
    let path = ctx.out.write_with(&name, |w| {
        match format {
            MeasureFormat::Json => mu.to_json_writer(w)?,
            MeasureFormat::Csv => mu.to_csv_writer(w)?,
        }
        Ok(())
    })?;
    ctx.out.write_json(
        "gen.json",
        &json!({ "distribution": spec, "n": n, "seed": ctx.seed, "file": name }),
    )?;
    println!("{}", path.display());
    Ok(())
}
