//! Plain-text dataset, parameter and draw-store files.
//!
//! Matrix files start with a header line `# <rows> <cols>` followed by one
//! whitespace-separated row per line. A logistic dataset stores `X` with the
//! response as one extra trailing column, so its header reads `# n d` while
//! each row carries `d + 1` numbers. Blank lines and further `#` lines are
//! skipped. Numbers are written with the shortest representation that parses
//! back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ising::{IsingData, IsingModel};
use crate::logistic::LogisticData;
use crate::sampler::{Draw, EdgeSummary};
use crate::types::SparseParam;

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Reads a matrix file; returns the header `(rows, cols)` and the rows.
fn read_rows(path: &Path, extra_cols: usize) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        let ln = i + 1;
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if header.is_none() {
                let v: Vec<usize> = rest
                    .split_whitespace()
                    .map(|s| {
                        s.parse()
                            .map_err(|_| parse_err(path, ln, format!("bad header field `{s}`")))
                    })
                    .collect::<Result<_>>()?;
                if v.len() != 2 {
                    return Err(parse_err(path, ln, "header must be `# <rows> <cols>`"));
                }
                header = Some((v[0], v[1]));
            }
            continue;
        }
        let (_, cols) = header
            .ok_or_else(|| parse_err(path, ln, "data before the `# <rows> <cols>` header"))?;
        let row: Vec<f64> = t
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| parse_err(path, ln, format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if row.len() != cols + extra_cols {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} values, found {}", cols + extra_cols, row.len()),
            ));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(path, ln, format!("non-finite value {v}")));
        }
        rows.push(row);
    }
    let (n, cols) = header.ok_or_else(|| parse_err(path, 0, "missing `# <rows> <cols>` header"))?;
    if rows.len() != n {
        return Err(parse_err(
            path,
            0,
            format!("header announces {n} rows, found {}", rows.len()),
        ));
    }
    Ok((n, cols, rows))
}

fn write_rows<'a>(
    path: &Path,
    rows: usize,
    cols: usize,
    row: impl Fn(usize) -> Box<dyn Iterator<Item = f64> + 'a>,
) -> Result<()> {
    let mut s = format!("# {rows} {cols}\n");
    for i in 0..rows {
        let mut first = true;
        for v in row(i) {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let (n, c, rows) = read_rows(path, 0)?;
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_rows(path, m.nrows(), m.ncols(), |i| {
        Box::new(m.row(i).iter().copied().collect::<Vec<_>>().into_iter())
    })
}

/// Logistic dataset: `X` with `y` as trailing column.
pub fn read_logistic_dataset(path: &Path) -> Result<LogisticData> {
    let (n, d, rows) = read_rows(path, 1)?;
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let y = rows.iter().map(|r| r[d]).collect();
    LogisticData::new(x, y, None)
}

pub fn write_logistic_dataset(path: &Path, data: &LogisticData) -> Result<()> {
    let x = data.x();
    let y = data.y();
    write_rows(path, data.n(), data.d(), |i| {
        Box::new(
            x.row(i)
                .iter()
                .copied()
                .chain([y[i]])
                .collect::<Vec<_>>()
                .into_iter(),
        )
    })
}

/// Binary Ising sample matrix, same layout as a design matrix.
pub fn read_ising_dataset(path: &Path, theta_star: Option<IsingModel>) -> Result<IsingData> {
    IsingData::new(read_matrix(path)?, theta_star)
}

pub fn write_ising_dataset(path: &Path, data: &IsingData) -> Result<()> {
    write_matrix(path, data.z())
}

/// Dense vector file: `# d 1` then one value per line.
pub fn read_vector(path: &Path) -> Result<SparseParam> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(parse_err(path, 1, "a vector file has exactly one column"));
    }
    Ok(SparseParam::from_dense(m.as_slice()))
}

pub fn write_vector(path: &Path, v: &SparseParam) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.dim(), 1, &v.to_dense()))
}

fn join<T: std::fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{x}").unwrap();
    }
    s
}

fn list(s: &str) -> Vec<&str> {
    if s.is_empty() {
        vec![]
    } else {
        s.split(',').collect()
    }
}

pub const DRAW_HEADER: &str = "iteration\tl0\tactive\tvalues";

/// Draw store: tab-separated `iteration, ‖θ‖₀, active indices, active values`
/// with comma-separated lists (empty when `‖θ‖₀ = 0`).
pub fn write_draw_store<W: Write>(w: &mut W, draws: &[Draw]) -> Result<()> {
    writeln!(w, "{DRAW_HEADER}")?;
    for d in draws {
        let t = &d.theta;
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            d.iteration,
            t.active().len(),
            join(t.active()),
            join(t.values())
        )?;
    }
    Ok(())
}

pub fn read_draw_store(path: &Path, d: usize) -> Result<Vec<Draw>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        if ln == 1 {
            if line != DRAW_HEADER {
                return Err(parse_err(path, ln, "missing draw-store header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(parse_err(path, ln, "expected 4 tab-separated fields"));
        }
        let bad = |what: &str| parse_err(path, ln, format!("bad {what}"));
        let iteration = f[0].parse().map_err(|_| bad("iteration"))?;
        let l0: usize = f[1].parse().map_err(|_| bad("l0"))?;
        let active: Vec<usize> = list(f[2])
            .iter()
            .map(|s| s.parse().map_err(|_| bad("index")))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = list(f[3])
            .iter()
            .map(|s| s.parse().map_err(|_| bad("value")))
            .collect::<Result<_>>()?;
        if active.len() != l0 || values.len() != l0 {
            return Err(parse_err(path, ln, "l0 disagrees with the active list"));
        }
        let entries: Vec<(usize, f64)> = active.into_iter().zip(values).collect();
        let theta = SparseParam::from_entries(d, &entries)
            .map_err(|e| parse_err(path, ln, e.to_string()))?;
        out.push(Draw { iteration, theta });
    }
    Ok(out)
}

/// Edge list `i,j,weight,pip`.
pub fn write_edge_list(path: &Path, edges: &[EdgeSummary]) -> Result<()> {
    let mut s = String::from("i,j,weight,pip\n");
    for e in edges {
        writeln!(s, "{},{},{},{}", e.i, e.j, e.weight, e.pip).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorSpec;
    use crate::sampler::{run_chain, ChainConfig, FlatLikelihood};

    #[test]
    fn logistic_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.txt");
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.1, 1.0 / 3.0, -2.5, 7.0]);
        let data = LogisticData::new(x, vec![1.0, 0.0, 1.0], None).unwrap();
        write_logistic_dataset(&p, &data).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# 3 2\n1 -1 1\n"));
        let back = read_logistic_dataset(&p).unwrap();
        assert_eq!(back.x(), data.x());
        assert_eq!(back.y(), data.y());
    }

    #[test]
    fn malformed_files_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        fs::write(&p, "# 2 2\n1 2 0\n1 x 1\n").unwrap();
        match read_logistic_dataset(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "1 2 0\n").unwrap();
        assert!(matches!(
            read_logistic_dataset(&p),
            Err(Error::Parse { .. })
        ));
        fs::write(&p, "# 2 2\n1 2 0\n").unwrap();
        assert!(matches!(
            read_logistic_dataset(&p),
            Err(Error::Parse { .. })
        ));
        fs::write(&p, "# 1 2\n1 2 0.5\n").unwrap();
        assert!(matches!(
            read_logistic_dataset(&p),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn draw_store_round_trip() {
        let prior = PriorSpec::beta_binomial(5, 2.0, 1.0).unwrap();
        let s = run_chain(
            &FlatLikelihood { d: 5 },
            &prior,
            ChainConfig::new(2000, 1),
            &SparseParam::zeros(5),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("draws.tsv");
        let mut f = fs::File::create(&p).unwrap();
        write_draw_store(&mut f, &s.draws).unwrap();
        drop(f);
        assert_eq!(read_draw_store(&p, 5).unwrap(), s.draws);
    }

    #[test]
    fn vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("theta.txt");
        let v = SparseParam::from_dense(&[0.0, 1.5, 0.0, -2.0]);
        write_vector(&p, &v).unwrap();
        assert_eq!(read_vector(&p).unwrap(), v);
    }
}
