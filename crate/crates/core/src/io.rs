//! Point stream CSV: one point per line, `x1,...,xd`, arrival = line order.
//! A first line whose first field is not numeric is treated as a header.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn read_points<T: Scalar, R: Read>(reader: R) -> Result<Vec<Vec<T>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out: Vec<Vec<T>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && rec.get(0).map(|f| f.parse::<f64>().is_err()).unwrap_or(false) {
            continue;
        }
        let mut coords = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            coords.push(T::of(v));
        }
        match dim {
            None => dim = Some(coords.len()),
            Some(d) if d != coords.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {d} fields, found {}", coords.len()),
                })
            }
            _ => {}
        }
        out.push(coords);
    }
    Ok(out)
}

pub fn read_points_file<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Vec<T>>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_points(f)
}

pub fn write_points<T: Scalar, W: std::io::Write>(writer: W, points: &[Vec<T>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
