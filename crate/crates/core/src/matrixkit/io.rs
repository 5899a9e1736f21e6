//! Portable matrix container and CSV interop.
//!
//! Binary layout (`RTXM1`):
//!
//! ```text
//! b"RTXM1" | rows: u64 LE | cols: u64 LE | rows*cols f64 LE, row-major
//! ```
//!
//! Vectors are stored as `n x 1` matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::dense::{Matrix, Vector};
use super::error::LinalgError;

pub const MAGIC: &[u8; 5] = b"RTXM1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad magic \"{}\", expected \"RTXM1\"", .found.escape_ascii())]
    BadMagic { found: Vec<u8> },

    #[error("truncated payload: expected {expected} values, read {read}")]
    Truncated { expected: usize, read: usize },

    #[error("trailing bytes after payload")]
    TrailingBytes,

    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("expected a column vector, got {rows}x{cols}")]
    NotAVector { rows: usize, cols: usize },

    #[error(transparent)]
    Invalid(#[from] LinalgError),

    #[error("{}: {source}", .path.display())]
    AtPath {
        path: PathBuf,
        #[source]
        source: Box<FormatError>,
    },
}

impl FormatError {
    pub fn at(path: &Path, source: FormatError) -> FormatError {
        match source {
            already @ FormatError::AtPath { .. } => already,
            other => FormatError::AtPath {
                path: path.to_path_buf(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, past any path context.
    pub fn root(&self) -> &FormatError {
        match self {
            FormatError::AtPath { source, .. } => source.root(),
            other => other,
        }
    }
}

pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> Result<(), FormatError> {
    let mut buf = Vec::with_capacity(21 + 8 * m.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<Matrix, FormatError> {
    let mut magic = [0u8; 5];
    let got = read_up_to(&mut r, &mut magic)?;
    if got < 5 || &magic != MAGIC {
        return Err(FormatError::BadMagic {
            found: magic[..got].to_vec(),
        });
    }
    let mut header = [0u8; 16];
    if read_up_to(&mut r, &mut header)? < 16 {
        return Err(FormatError::Truncated {
            expected: 0,
            read: 0,
        });
    }
    let rows = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| LinalgError::InvalidArgument(format!("absurd shape {rows}x{cols}")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let read = payload.len() / 8;
    if read < expected {
        return Err(FormatError::Truncated { expected, read });
    }
    if payload.len() != expected * 8 {
        return Err(FormatError::TrailingBytes);
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::new(rows, cols, data)?)
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn write_vector<W: Write>(w: W, v: &Vector) -> Result<(), FormatError> {
    write_matrix(w, &v.to_column_matrix())
}

pub fn read_vector<R: Read>(r: R) -> Result<Vector, FormatError> {
    let m = read_matrix(r)?;
    if m.cols() != 1 {
        return Err(FormatError::NotAVector {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(Vector::new(m.into_vec())?)
}

/// Headerless CSV, one matrix row per line. Values use the shortest
/// representation that round-trips exactly.
pub fn write_csv<W: Write>(mut w: W, m: &Matrix) -> Result<(), FormatError> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Matrix, FormatError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| FormatError::Csv {
                    line: idx + 1,
                    message: format!("{e}: {f:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(FormatError::Csv {
                    line: idx + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Write a file through a sibling temporary that is renamed into place, so a
/// failure never leaves a partial file at `path`.
pub fn write_atomic<F, E>(path: &Path, fill: F) -> Result<(), E>
where
    F: FnOnce(&mut BufWriter<&mut tempfile::NamedTempFile>) -> Result<(), E>,
    E: From<std::io::Error>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(&mut tmp);
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| E::from(e.error))?;
    Ok(())
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<(), FormatError> {
    write_atomic(path, |w| write_matrix(w, m)).map_err(|e| FormatError::at(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Matrix, FormatError> {
    File::open(path)
        .map_err(FormatError::from)
        .and_then(|f| read_matrix(BufReader::new(f)))
        .map_err(|e| FormatError::at(path, e))
}

pub fn save_vector(path: &Path, v: &Vector) -> Result<(), FormatError> {
    write_atomic(path, |w| write_vector(w, v)).map_err(|e| FormatError::at(path, e))
}

pub fn load_vector(path: &Path) -> Result<Vector, FormatError> {
    File::open(path)
        .map_err(FormatError::from)
        .and_then(|f| read_vector(BufReader::new(f)))
        .map_err(|e| FormatError::at(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let m = Matrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(&buf[..5], b"RTXM1");
        assert_eq!(&buf[5..13], &1u64.to_le_bytes());
        assert_eq!(&buf[13..21], &2u64.to_le_bytes());
        assert_eq!(&buf[21..29], &1.0f64.to_le_bytes());
        assert_eq!(&buf[29..37], &(-2.5f64).to_le_bytes());
        assert_eq!(buf.len(), 37);
    }

    #[test]
    fn corrupt_inputs() {
        assert!(matches!(
            read_matrix(&b"RTXM2\0\0"[..]),
            Err(FormatError::BadMagic { .. })
        ));
        let m = Matrix::identity(2);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(matches!(
            read_matrix(&buf[..buf.len() - 3]),
            Err(FormatError::Truncated { .. })
        ));
        buf.push(0);
        assert!(matches!(read_matrix(&buf[..]), Err(FormatError::TrailingBytes)));
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let err = read_csv(&b"1,2\n3\n"[..]).unwrap_err();
        assert!(matches!(err, FormatError::Csv { line: 2, .. }));
    }

    #[test]
    fn vector_round_trip_requires_single_column() {
        let v = Vector::new(vec![0.1, 1e-300, -7.0]).unwrap();
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        assert_eq!(read_vector(&buf[..]).unwrap(), v);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &Matrix::identity(2)).unwrap();
        assert!(matches!(read_vector(&buf[..]), Err(FormatError::NotAVector { .. })));
    }

    #[test]
    fn file_round_trip_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rtxm");
        let m = Matrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        save_matrix(&path, &m).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

        std::fs::write(&path, b"XXXXX").unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("m.rtxm"), "{err}");
        assert!(matches!(err.root(), FormatError::BadMagic { .. }));
    }
}
