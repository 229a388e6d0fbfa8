use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::LabeledDataset;
use crate::error::{contract, Result, VieError};

pub const DATASET_HEADER: &str = "# vie-dataset v1";
pub const HISTORY_HEADER: &str = "# vie-history v1";
pub const SERIES_HEADER: &str = "# vie-series v1";
pub const TABLE_HEADER: &str = "# vie-ablation v1";

fn csv_error(path: &Path, e: csv::Error) -> VieError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => VieError::Io(io),
        kind => VieError::Parse { line, message: format!("{}: {kind:?}", path.display()) },
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| VieError::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| VieError::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display()))))
}

/// Header comment, a column-name row, then one row per record.
pub fn write_csv(path: &Path, comment: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{comment}")?;
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(file);
    w.write_record(columns).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric series: every value written as a shortest round-trip decimal.
pub fn write_series(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    write_csv(path, SERIES_HEADER, columns, &rows)
}

/// Columns `x0..x{d−1}`, `y`, and `oracle_risk` when present.
pub fn write_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let d = data.dim();
    let mut columns: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    columns.push("y".into());
    if data.oracle_risk.is_some() {
        columns.push("oracle_risk".into());
    }
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| {
            let mut r: Vec<String> = data.features.row_slice(i).iter().map(|v| v.to_string()).collect();
            r.push(data.labels[i].to_string());
            if let Some(o) = &data.oracle_risk {
                r.push(o[i].to_string());
            }
            r
        })
        .collect();
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_csv(path, DATASET_HEADER, &names, &rows)
}

/// Reads a dataset CSV. Lines starting with `#` are skipped; column `y`
/// holds integer labels, optional `oracle_risk` the true event probability,
/// and every other column is a feature in file order.
pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path)
        .map_err(|e| VieError::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display()))))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| VieError::Parse { line: 1, message: format!("{}: no 'y' column", path.display()) })?;
    let oracle_col = headers.iter().position(|h| h == "oracle_risk");
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != label_col && Some(j) != oracle_col).collect();
    if feature_cols.is_empty() {
        return contract(format!("{}: no feature columns", path.display()));
    }
    let (mut x, mut y, mut oracle) = (Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |col: &str, e: String| VieError::Parse { line, message: format!("{}: column {col}: {e}", path.display()) };
        for &j in &feature_cols {
            x.push(record[j].parse::<f64>().map_err(|e| bad(&headers[j], e.to_string()))?);
        }
        y.push(record[label_col].parse::<usize>().map_err(|e| bad("y", e.to_string()))?);
        if let Some(j) = oracle_col {
            oracle.push(record[j].parse::<f64>().map_err(|e| bad("oracle_risk", e.to_string()))?);
        }
    }
    let features = Tensor::new(vec![y.len(), feature_cols.len()], x)?;
    LabeledDataset::new(features, y, oracle_col.map(|_| oracle))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| VieError::Io(e.into()))?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_is_exact() {
        let x = Tensor::new(vec![3, 2], vec![0.1, -2.5e-7, 1.0 / 3.0, 4.0, f64::MIN_POSITIVE, -0.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 1, 0], Some(vec![0.2, 0.9, 1e-300])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, &d).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# vie-dataset v1\nx0,x1,y,oracle_risk\n"));
        assert_eq!(read_dataset(&p).unwrap(), d);
    }

    #[test]
    fn foreign_csv_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        fs::write(&p, "age,y,bmi\n40,0,22.5\n51,1,30\n").unwrap();
        let d = read_dataset(&p).unwrap();
        assert_eq!(d.features.data(), &[40.0, 22.5, 51.0, 30.0]);
        assert!(d.oracle_risk.is_none());
        fs::write(&p, "a,y\n1,0\n2,x\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(VieError::Parse { line: 3, .. })));
        fs::write(&p, "a,b\n1,0\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(VieError::Parse { .. })));
        assert!(matches!(read_dataset(&dir.path().join("missing.csv")), Err(VieError::Io(_))));
    }
}
