//! CSV file formats.
//!
//! | file | header |
//! |------|--------|
//! | paths | `date_index,<dim names...>,path_id` (rows grouped by path, dates in order) |
//! | Heston truth | `path_id,kappa,theta,xi_vol,rho,r,v0` |
//! | loss trace | `outer,epoch,loss` |
//! | returns panel | `<instrument ids...>` (one row per date) |
//! | window targets | `window_id,<dim names...>` (0/1 labels) |
//!
//! Floats are written in shortest round-trip form, so a read after a write
//! reproduces every value exactly. Readers reject headers they do not
//! recognize.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::sbbts::EpochLoss;
use crate::stochastic::HestonParams;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Schema(format!("{}: {e}", path.display()))
    }
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::Data(format!("{}: line {line}: cannot parse {s:?} as a number", path.display()))
    })
}

fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| {
        Error::Data(format!("{}: line {line}: cannot parse {s:?} as an index", path.display()))
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn paths_to_csv(data: &TimeSeriesDataset) -> String {
    let mut s = String::from("date_index");
    for n in data.dim_names() {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",path_id\n");
    for m in 0..data.n_paths() {
        for i in 0..data.n_dates() {
            s.push_str(&i.to_string());
            for v in data.value(m, i) {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push(',');
            s.push_str(&m.to_string());
            s.push('\n');
        }
    }
    s
}

pub fn paths_from_csv(text: &[u8], path: &Path) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || header[0] != "date_index" || header[header.len() - 1] != "path_id" {
        return Err(Error::Schema(format!(
            "{}: expected header date_index,<dims...>,path_id, found {}",
            path.display(),
            header.join(",")
        )));
    }
    let names = header[1..header.len() - 1].to_vec();
    let d = names.len();
    let mut paths: Vec<Vec<f64>> = Vec::new();
    let mut ids: Vec<usize> = Vec::new();
    let mut n_dates: Option<usize> = None;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != d + 2 {
            return Err(Error::Schema(format!(
                "{}: line {line} has {} fields, expected {}",
                path.display(),
                rec.len(),
                d + 2
            )));
        }
        let date = parse_usize(&rec[0], path, line)?;
        let id = parse_usize(&rec[d + 1], path, line)?;
        if ids.last() != Some(&id) {
            if let Some(prev) = paths.last() {
                let len = prev.len() / d;
                match n_dates {
                    None => n_dates = Some(len),
                    Some(n) if n != len => {
                        return Err(Error::Data(format!(
                            "{}: path {} has {len} dates, earlier paths have {n}",
                            path.display(),
                            ids.last().expect("non-empty")
                        )))
                    }
                    _ => {}
                }
            }
            if ids.contains(&id) {
                return Err(Error::Data(format!(
                    "{}: line {line}: rows of path {id} are not contiguous",
                    path.display()
                )));
            }
            ids.push(id);
            paths.push(Vec::new());
        }
        let cur = paths.last_mut().expect("pushed above");
        if date != cur.len() / d {
            return Err(Error::Data(format!(
                "{}: line {line}: path {id} expected date_index {}, found {date}",
                path.display(),
                cur.len() / d
            )));
        }
        for j in 0..d {
            cur.push(parse_f64(&rec[j + 1], path, line)?);
        }
    }
    if paths.is_empty() {
        return Err(Error::Data(format!("{}: no paths", path.display())));
    }
    let n = paths[0].len() / d;
    let last = paths.last().expect("non-empty").len() / d;
    if last != n {
        return Err(Error::Data(format!(
            "{}: last path has {last} dates, earlier paths have {n}",
            path.display()
        )));
    }
    TimeSeriesDataset::from_paths(names, n, paths)
}

pub fn write_paths(path: &Path, data: &TimeSeriesDataset) -> Result<()> {
    write_file(path, paths_to_csv(data).as_bytes())
}

pub fn read_paths(path: &Path) -> Result<TimeSeriesDataset> {
    paths_from_csv(&read_file(path)?, path)
}

pub fn truth_to_csv(params: &[HestonParams]) -> String {
    let mut s = String::from("path_id,kappa,theta,xi_vol,rho,r,v0\n");
    for (m, p) in params.iter().enumerate() {
        s.push_str(&format!(
            "{m},{},{},{},{},{},{}\n",
            p.kappa, p.theta, p.xi_vol, p.rho, p.r, p.v0
        ));
    }
    s
}

pub fn losses_to_csv(losses: &[EpochLoss]) -> String {
    let mut s = String::from("outer,epoch,loss\n");
    for l in losses {
        s.push_str(&format!("{},{},{}\n", l.outer, l.epoch, l.loss));
    }
    s
}

/// Returns panel: `(instrument ids, N×d matrix)`.
pub fn returns_from_csv(text: &[u8], path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let ids: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if ids.is_empty() || ids.iter().any(|s| s.trim().is_empty()) {
        return Err(Error::Schema(format!("{}: missing instrument ids", path.display())));
    }
    let d = ids.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != d {
            return Err(Error::Schema(format!(
                "{}: line {} has {} fields, expected {d}",
                path.display(),
                k + 2,
                rec.len()
            )));
        }
        for f in rec.iter() {
            values.push(parse_f64(f, path, k + 2)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    Ok((ids, DMatrix::from_row_slice(n, d, &values)))
}

pub fn read_returns(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    returns_from_csv(&read_file(path)?, path)
}

pub fn matrix_to_csv(ids: &[String], m: &DMatrix<f64>) -> String {
    let mut s = ids.join(",");
    s.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn targets_to_csv(names: &[String], labels: &[Vec<u8>]) -> String {
    let mut s = String::from("window_id");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (w, l) in labels.iter().enumerate() {
        s.push_str(&w.to_string());
        for v in l {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_round_trip_exactly() {
        let ds = TimeSeriesDataset::new(
            2,
            3,
            2,
            vec!["X".into(), "v".into()],
            vec![0.1, 1.0 / 3.0, 1e-300, 2.5, -7.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let text = paths_to_csv(&ds);
        let back = paths_from_csv(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.values(), ds.values());
        assert_eq!(back.dim_names(), ds.dim_names());
    }

    #[test]
    fn rejects_unknown_header_and_ragged_paths() {
        let bad = "t,X,path_id\n0,1,0\n";
        assert!(matches!(paths_from_csv(bad.as_bytes(), Path::new("m")), Err(Error::Schema(_))));
        let ragged = "date_index,X,path_id\n0,1,0\n1,2,0\n0,1,1\n";
        assert!(matches!(paths_from_csv(ragged.as_bytes(), Path::new("m")), Err(Error::Data(_))));
        let empty = "date_index,X,path_id\n";
        assert!(matches!(paths_from_csv(empty.as_bytes(), Path::new("m")), Err(Error::Data(_))));
    }

    #[test]
    fn returns_panel_round_trip() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let m = DMatrix::from_row_slice(2, 2, &[0.01, -0.02, 0.03, 0.5]);
        let back = returns_from_csv(matrix_to_csv(&ids, &m).as_bytes(), Path::new("m")).unwrap();
        assert_eq!(back.0, ids);
        assert_eq!(back.1, m);
    }
}
