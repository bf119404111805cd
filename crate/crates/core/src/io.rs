//! CSV helpers shared by the exporters.

use std::io::Write;

use nalgebra::DMatrix;

use crate::Result;

/// Dense matrix, one CSV row per matrix row, no header.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Header plus numeric rows.
pub fn write_table_csv<W: Write>(header: &[&str], rows: &[Vec<f64>], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for r in rows {
        let rec: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| crate::Error::InvalidParameter(format!("matrix csv: {e}")))?;
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(crate::Error::InvalidParameter("ragged matrix csv".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}
