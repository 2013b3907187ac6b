//! CSV reading and writing of sampled paths (`path_id,t,value`).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::FouParams;
use crate::simulation::{Path, Process};

/// Writes paths as `path_id,t,value` rows, one row per grid point.
pub fn write_paths<W: Write>(out: W, paths: &[Path]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "t", "value"]).map_err(csv_error)?;
    for (id, p) in paths.iter().enumerate() {
        for (t, v) in p.grid().points().iter().zip(p.values()) {
            w.write_record(&[id.to_string(), t.to_string(), format!("{v:e}")]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse { line: pos.line(), msg: e.to_string() },
        None => Error::Io(e.to_string()),
    }
}

/// Reads `path_id,t,value` rows. Each path must be sampled on a uniform grid
/// starting at 0, with rows in time order.
pub fn read_paths<R: Read>(input: R, process: Process, params: Option<FouParams>) -> Result<Vec<Path>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().map(str::trim).ne(["path_id", "t", "value"]) {
        return Err(Error::Parse { line: 1, msg: format!("expected header path_id,t,value, got {}", header.iter().collect::<Vec<_>>().join(",")) });
    }
    let mut rows: BTreeMap<u64, (u64, Vec<(f64, f64)>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::Parse { line, msg };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let id: u64 = rec[0].trim().parse().map_err(|_| bad(format!("invalid path_id {:?}", &rec[0])))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let x: f64 = rec[i].trim().parse().map_err(|_| bad(format!("invalid {name} {:?}", &rec[i])))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(bad(format!("non-finite {name}")))
            }
        };
        let (t, v) = (num(1, "t")?, num(2, "value")?);
        let entry = rows.entry(id).or_insert((line, Vec::new()));
        if let Some(&(prev, _)) = entry.1.last() {
            if t <= prev {
                return Err(bad(format!("times of path {id} are not increasing")));
            }
        }
        entry.1.push((t, v));
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no paths".into() });
    }
    rows.into_iter()
        .map(|(id, (line, pts))| {
            let bad = |msg: String| Error::Parse { line, msg: format!("path {id}: {msg}") };
            let n = pts.len() - 1;
            let horizon = pts[n].0;
            if pts[0].0 != 0.0 {
                return Err(bad("first time must be 0".into()));
            }
            let grid = Grid::new(horizon, n).map_err(|e| bad(e.to_string()))?;
            if pts.iter().enumerate().any(|(i, (t, _))| grid.index_of(*t) != Some(i)) {
                return Err(bad("times are not a uniform grid".into()));
            }
            Path::new(grid, pts.into_iter().map(|p| p.1).collect(), process, params).map_err(|e| bad(e.to_string()))
        })
        .collect()
}
