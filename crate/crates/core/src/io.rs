//! Matrix file formats and the triplet ingester.
//!
//! Two interchangeable matrix formats:
//!
//! * **MCMX binary** — magic bytes `MCMX`, then `n_rows` and `n_cols` as
//!   little-endian `u64`, then `n_rows·n_cols` little-endian `f64` values
//!   in row-major order. Bit-exact round trip.
//! * **CSV** — one matrix row per line, comma-separated decimal floats.
//!   Values are written with shortest-round-trip formatting, so CSV round
//!   trips are exact as well.
//!
//! Rating data arrives as text triplets `user item rating` (1-based
//! indices, whitespace- or comma-separated) and is densified into a value
//! matrix plus an observation mask.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::Mat;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MCMX";
// Refuse to allocate matrices beyond this entry count when reading
// untrusted headers.
const MAX_ENTRIES: u64 = 1 << 30;

/// Write a matrix in the MCMX binary format.
pub fn write_mcmx(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(MAGIC)?;
    out.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    out.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    for &v in m.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a matrix in the MCMX binary format.
pub fn read_mcmx(path: impl AsRef<Path>) -> Result<Mat> {
    let path_str = path.as_ref().display().to_string();
    let mut file = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            path: path_str,
            msg: "missing MCMX magic bytes".into(),
        });
    }
    let mut buf8 = [0u8; 8];
    file.read_exact(&mut buf8)?;
    let n_rows = u64::from_le_bytes(buf8);
    file.read_exact(&mut buf8)?;
    let n_cols = u64::from_le_bytes(buf8);
    let entries = n_rows
        .checked_mul(n_cols)
        .filter(|&n| n <= MAX_ENTRIES)
        .ok_or_else(|| Error::Format {
            path: path_str.clone(),
            msg: format!("implausible dimensions {n_rows}x{n_cols}"),
        })?;
    let mut values = Vec::with_capacity(entries as usize);
    for _ in 0..entries {
        file.read_exact(&mut buf8)?;
        values.push(f64::from_le_bytes(buf8));
    }
    if file.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format {
            path: path_str,
            msg: "trailing bytes after matrix payload".into(),
        });
    }
    DenseMatrix::new(n_rows as usize, n_cols as usize, values)
}

/// Write a matrix as CSV (rows = matrix rows).
pub fn write_csv(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for i in 0..m.n_rows() {
        let mut line = String::new();
        for j in 0..m.n_cols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", m.get(i, j)));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a CSV matrix; every row must have the same number of columns.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path_str = path.as_ref().display().to_string();
    let file = BufReader::new(File::open(path.as_ref())?);
    let mut values = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0usize;
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<&str> = trimmed.split(',').collect();
        match n_cols {
            None => n_cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse {
                    path: path_str,
                    line: idx + 1,
                    msg: format!("expected {c} columns, found {}", row.len()),
                });
            }
            _ => {}
        }
        for cell in row {
            let v: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                path: path_str.clone(),
                line: idx + 1,
                msg: format!("bad number {cell:?}: {e}"),
            })?;
            values.push(v);
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::Format {
        path: path_str.clone(),
        msg: "empty CSV file".into(),
    })?;
    DenseMatrix::new(n_rows, n_cols, values)
}

/// Densify a triplet file into `(Y, W)`: listed pairs get `w_ij = 1` and
/// `y_ij = rating`; everything else is zero. Duplicate pairs, out-of-range
/// indices and malformed lines are rejected with their line number.
pub fn ingest_triplets(path: impl AsRef<Path>, n1: usize, n2: usize) -> Result<(Mat, Mat)> {
    let path_str = path.as_ref().display().to_string();
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("declared dimensions must be positive"));
    }
    let file = BufReader::new(File::open(path.as_ref())?);
    let mut y = vec![0.0f64; n1 * n2];
    let mut w = vec![0.0f64; n1 * n2];
    let mut seen = vec![false; n1 * n2];
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = if trimmed.contains(',') {
            trimmed.split(',').map(|s| s.trim()).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let err = |msg: String| Error::Parse {
            path: path_str.clone(),
            line: idx + 1,
            msg,
        };
        if parts.len() != 3 {
            return Err(err(format!(
                "expected `user item rating`, found {} fields",
                parts.len()
            )));
        }
        let user: usize = parts[0]
            .parse()
            .map_err(|e| err(format!("bad user index {:?}: {e}", parts[0])))?;
        let item: usize = parts[1]
            .parse()
            .map_err(|e| err(format!("bad item index {:?}: {e}", parts[1])))?;
        let rating: f64 = parts[2]
            .parse()
            .map_err(|e| err(format!("bad rating {:?}: {e}", parts[2])))?;
        if !rating.is_finite() {
            return Err(err("rating must be finite".into()));
        }
        if user == 0 || user > n1 || item == 0 || item > n2 {
            return Err(err(format!(
                "index ({user}, {item}) outside 1..={n1} x 1..={n2}"
            )));
        }
        let flat = (user - 1) * n2 + (item - 1);
        if seen[flat] {
            return Err(err(format!("duplicate pair ({user}, {item})")));
        }
        seen[flat] = true;
        y[flat] = rating;
        w[flat] = 1.0;
    }
    Ok((
        DenseMatrix::new(n1, n2, y)?,
        DenseMatrix::new(n1, n2, w)?,
    ))
}

/// Export the observed entries of `(Y, W)` as 1-based triplets.
pub fn write_triplets(path: impl AsRef<Path>, y: &Mat, w: &Mat) -> Result<()> {
    y.check_same_shape(w, "write_triplets")?;
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for i in 0..y.n_rows() {
        for j in 0..y.n_cols() {
            if w.get(i, j) == 1.0 {
                writeln!(out, "{} {} {}", i + 1, j + 1, y.get(i, j))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> Mat {
        Mat::from_shape_fn(3, 4, |(i, j)| (i as f64 * 1.7 - j as f64 * 0.31).sin() * 10.0)
    }

    #[test]
    fn mcmx_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.mcmx");
        let m = sample();
        write_mcmx(&path, &m).unwrap();
        let back = read_mcmx(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn mcmx_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.mcmx");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_mcmx(&path).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = sample();
        write_csv(&path, &m).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_reports_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3,oops\n").unwrap();
        match read_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn triplets_empty_file_gives_zero_matrices() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        let (y, w) = ingest_triplets(&path, 2, 3).unwrap();
        assert_eq!(y.max_abs(), 0.0);
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn triplets_single_entry() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.txt");
        std::fs::write(&path, "1 1 4.0\n").unwrap();
        let (y, w) = ingest_triplets(&path, 2, 2).unwrap();
        assert_eq!(y.values(), &[4.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn triplets_reject_duplicates_and_bad_indices() {
        let dir = tempdir().unwrap();
        let dup = dir.path().join("dup.txt");
        std::fs::write(&dup, "1 1 4.0\n1 1 5.0\n").unwrap();
        match ingest_triplets(&dup, 2, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected duplicate error, got {other:?}"),
        }

        let oob = dir.path().join("oob.txt");
        std::fs::write(&oob, "3 1 4.0\n").unwrap();
        assert!(ingest_triplets(&oob, 2, 2).is_err());

        let malformed = dir.path().join("short.txt");
        std::fs::write(&malformed, "1 1\n").unwrap();
        assert!(ingest_triplets(&malformed, 2, 2).is_err());
    }

    #[test]
    fn triplets_accept_commas() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("commas.txt");
        std::fs::write(&path, "2, 1, -3.5\n").unwrap();
        let (y, w) = ingest_triplets(&path, 2, 2).unwrap();
        assert_eq!(y.get(1, 0), -3.5);
        assert_eq!(w.get(1, 0), 1.0);
    }
}
