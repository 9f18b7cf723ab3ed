//! CSV reading and writing of datasets and simulation truth.

use std::path::Path;

use crate::data::{Matrix, SurvivalDataset};
use crate::error::{Error, Result};
use crate::simgen::Generated;

/// Reads a dataset with header `y, delta, x1..xd[, z1..zq]`.
///
/// With `latency_columns`, the latency block is assembled from the named
/// columns (which may be incidence columns such as `x1`) and any `z*`
/// columns in the file are ignored.
pub fn read_dataset(path: &Path, latency_columns: Option<&[String]>) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let y_col = find("y").ok_or_else(|| Error::DimensionMismatch("missing column `y`".into()))?;
    let d_col = find("delta").ok_or_else(|| Error::DimensionMismatch("missing column `delta`".into()))?;
    let numbered = |prefix: char| -> Vec<usize> {
        (1..).map_while(|k| find(&format!("{prefix}{k}"))).collect()
    };
    let x_cols = numbered('x');
    let z_cols = match latency_columns {
        Some(names) => names
            .iter()
            .map(|n| find(n).ok_or_else(|| Error::Config(format!("latency column `{n}` not in {}", path.display()))))
            .collect::<Result<Vec<_>>>()?,
        None => numbered('z'),
    };
    if x_cols.is_empty() || z_cols.is_empty() {
        return Err(Error::DimensionMismatch("need at least one x and one z column".into()));
    }
    let (mut y, mut delta, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::NonFinite { row, column: header[c].clone() })
        };
        y.push(num(y_col)?);
        let d = num(d_col)?;
        if d != 0.0 && d != 1.0 {
            return Err(Error::NonBinaryIndicator(row));
        }
        delta.push(d as u8);
        for &c in &x_cols {
            x.push(num(c)?);
        }
        for &c in &z_cols {
            z.push(num(c)?);
        }
    }
    let n = y.len();
    SurvivalDataset::new(y, delta, Matrix::new(n, x_cols.len(), x)?, Matrix::new(n, z_cols.len(), z)?)
}

/// Writes `y, delta, x1..xd` and, when `with_z`, `z1..zq`.
pub fn write_dataset(path: &Path, ds: &SurvivalDataset, with_z: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string(), "delta".to_string()];
    header.extend((1..=ds.d()).map(|j| format!("x{j}")));
    if with_z {
        header.extend((1..=ds.q()).map(|j| format!("z{j}")));
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.y[i].to_string(), ds.delta[i].to_string()];
        rec.extend(ds.x.row(i).iter().map(f64::to_string));
        if with_z {
            rec.extend(ds.z.row(i).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Latent truth sidecar: `b` (1 = susceptible), `t` (`inf` when cured), `c`.
pub fn write_truth(path: &Path, g: &Generated) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["b", "t", "c"])?;
    for i in 0..g.uncured.len() {
        w.write_record([g.uncured[i].to_string(), g.event_time[i].to_string(), g.censor_time[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
