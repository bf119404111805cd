use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use catmap::DiscreteMeasure;

use crate::error::{io_err, CliResult};
use crate::output::OutDir;
use crate::settings::ConfigFile;

pub mod fit;
pub mod gen;
pub mod ot;
pub mod repro;
pub mod transfer;

/// State resolved once from the shared flags.
pub struct Context {
    pub seed: u64,
    pub out: OutDir,
    pub config: ConfigFile,
}

/// `.csv` files hold one atom per row with the weight last; anything else is JSON.
pub fn load_measure(path: &Path) -> CliResult<DiscreteMeasure> {
    let f = BufReader::new(File::open(path).map_err(io_err(path))?);
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv {
        DiscreteMeasure::from_csv_reader(f)?
    } else {
        DiscreteMeasure::from_json_reader(f)?
    })
}
