use catmap::repro::{counterexample_2d, equivalence_1d_demo, existence_counterexample, lipschitz_levels_1d};
use clap::Args;
use serde_json::json;

use super::Context;
use crate::error::{CliError, CliResult};

pub const EXPERIMENTS: [&str; 3] = ["existence-1d", "counterexample-2d", "equivalence-1d"];

const EXISTENCE_EPS: [f64; 5] = [0.5, 0.25, 0.1, 0.05, 0.01];
const EXISTENCE_N: usize = 10_000;
const EQUIV_INSTANCES: usize = 50;
const EQUIV_MAX_ATOMS: usize = 50;
const EQUIV_LIP: f64 = 2.0;
const LEVELS_N: usize = 200;
const LEVELS: [f64; 2] = [1.0, 5.0];

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// One of existence-1d, counterexample-2d, equivalence-1d.
    pub name: String,
}

pub fn run(ctx: &Context, args: &ReproArgs) -> CliResult<()> {
    match args.name.as_str() {
        "existence-1d" => {
            let r = existence_counterexample(&EXISTENCE_EPS, EXISTENCE_N)?;
            ctx.out.write_with("existence-1d.csv", |w| Ok(r.to_csv_writer(w)?))?;
            ctx.out.write_json("existence-1d.json", &r)?;
            println!("eps\tW2^2\tcontinuum");
            for row in &r.rows {
                println!("{}\t{}\t{}", row.eps, row.w2, row.continuum);
            }
        }
        "counterexample-2d" => {
            let r = counterexample_2d(1.0, 10.0, 1.0)?;
            let rows = vec![
                vec![r.barycentric_cost, r.barycentric_expected],
                vec![r.alternative_cost, r.alternative_expected],
                vec![r.alternative_monotonicity, 0.0],
            ];
            ctx.out.write_with("counterexample-2d.csv", |w| {
                writeln!(w, "quantity,value,expected").map_err(crate::error::io_err("counterexample-2d.csv"))?;
                for (name, row) in ["barycentric_cost", "alternative_cost", "alternative_monotonicity"].iter().zip(&rows) {
                    writeln!(w, "{name},{},{}", row[0], row[1]).map_err(crate::error::io_err("counterexample-2d.csv"))?;
                }
                Ok(())
            })?;
            ctx.out.write_json("counterexample-2d.json", &r)?;
            println!("barycentric\t{}\t(expected {})", r.barycentric_cost, r.barycentric_expected);
            println!("alternative\t{}\t(expected {})", r.alternative_cost, r.alternative_expected);
        }
        "equivalence-1d" => {
            let r = equivalence_1d_demo(EQUIV_INSTANCES, EQUIV_MAX_ATOMS, EQUIV_MAX_ATOMS, EQUIV_LIP, 0.0, ctx.seed)?;
            let levels = lipschitz_levels_1d(LEVELS_N, &LEVELS, ctx.seed)?;
            ctx.out.write_with("equivalence-1d.csv", |w| Ok(r.to_csv_writer(w)?))?;
            ctx.out.write_with("lipschitz-levels.csv", |w| Ok(levels.to_csv_writer(w)?))?;
            ctx.out.write_json(
                "equivalence-1d.json",
                &json!({
                    "instances": r.rows.len(),
                    "maxAtoms": EQUIV_MAX_ATOMS,
                    "lip": r.lip,
                    "ell": r.ell,
                    "seed": r.seed,
                    "tolerance": r.tolerance,
                    "maxGap": r.max_gap(),
                    "levels": { "n": levels.n, "lips": levels.lips, "objectives": levels.objectives,
                                "barycentricCost": levels.barycentric_cost },
                }),
            )?;
            println!("max gap {} over {} instances", r.max_gap(), r.rows.len());
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown experiment {other:?}; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    }
    Ok(())
}
