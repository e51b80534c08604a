//! Matrix Market coordinate files (real field, general or symmetric).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a `.mtx` file. Symmetric files are expanded to full storage and
/// duplicate entries are summed.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_matrix_market(BufReader::new(file))
}

pub fn read_matrix_market<R: Read>(reader: R) -> Result<SparseMatrix> {
    let reader = BufReader::new(reader);
    let parse_err = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };

    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header.map_err(|e| parse_err(1, &e.to_string()))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "malformed header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, "only coordinate format is supported"));
    }
    if tokens[3] != "real" {
        return Err(parse_err(
            1,
            &format!("unsupported field '{}', expected real", tokens[3]),
        ));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, &format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut entries_read = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, &e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "size line needs rows, cols, nnz"));
                }
                let parsed: std::result::Result<Vec<usize>, _> =
                    fields.iter().map(|f| f.parse::<usize>()).collect();
                let parsed = parsed.map_err(|_| parse_err(lineno, "bad size line"))?;
                size = Some((parsed[0], parsed[1], parsed[2]));
                triplets.reserve(parsed[2] * 2);
            }
            Some((n_rows, n_cols, nnz)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "entry needs row, col, value"));
                }
                if entries_read == nnz {
                    return Err(parse_err(lineno, "more entries than declared"));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n_rows || j > n_cols {
                    return Err(Error::IndexOutOfBounds {
                        row: i,
                        col: j,
                        n_rows,
                        n_cols,
                    });
                }
                let (i, j) = (i - 1, j - 1);
                triplets.push((i, j, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j, i, v));
                }
                entries_read += 1;
            }
        }
    }
    let (n_rows, n_cols, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if entries_read != nnz {
        return Err(parse_err(
            0,
            &format!("declared {nnz} entries but found {entries_read}"),
        ));
    }
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(parse_err(0, "symmetric matrix must be square"));
    }
    SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// Writes `a` as a coordinate file. With `symmetric`, only the lower triangle
/// is written; the caller is responsible for `a` actually being symmetric.
pub fn write_matrix_market(
    a: &SparseMatrix,
    path: impl AsRef<Path>,
    symmetric: bool,
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let qualifier = if symmetric { "symmetric" } else { "general" };
    let mut entries = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if !symmetric || j <= i {
                entries.push((i, j, v));
            }
        }
    }
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real {qualifier}")?;
        writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), entries.len())?;
        for &(i, j, v) in &entries {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_err)
}
