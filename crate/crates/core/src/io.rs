//! Matrix Market coordinate files and plain-text / binary vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseSymMatrix};
use crate::report::fmt17;

const VEC_MAGIC: &[u8; 8] = b"SUBEIGV1";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a real coordinate Matrix Market file. Symmetric storage is expanded.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", fields[2])));
    }
    let pattern = match fields[3].as_str() {
        "real" | "double" | "integer" => false,
        "pattern" => true,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| parse_err(lineno, format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("bad {what}: {e}")))
        };
        match size {
            None => {
                let r = next_usize("row count")?;
                let c = next_usize("column count")?;
                let nnz = next_usize("entry count")?;
                size = Some((r, c, nnz));
                triplets.reserve(if symmetric { 2 * nnz } else { nnz });
            }
            Some((nr, nc, _)) => {
                let i = next_usize("row index")?;
                let j = next_usize("column index")?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) outside {nr}x{nc}")));
                }
                let v = if pattern {
                    1.0
                } else {
                    let s = it.next().ok_or_else(|| parse_err(lineno, "missing value"))?;
                    s.parse::<f64>()
                        .map_err(|e| parse_err(lineno, format!("bad value '{s}': {e}")))?
                };
                if symmetric && j > i {
                    return Err(parse_err(lineno, "symmetric file stores an upper-triangle entry"));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(0, format!("expected {nnz} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(nr, nc, &triplets)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_matrix_market(File::open(path)?)
}

/// Reads a file and validates it as a symmetric operator.
pub fn read_sym_matrix_file(path: impl AsRef<Path>) -> Result<SparseSymMatrix> {
    SparseSymMatrix::new(read_matrix_market_file(path)?)
}

/// Writes every stored entry in general coordinate form.
pub fn write_matrix_market<W: Write>(m: &CsrMatrix, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", i + 1, j + 1, fmt17(v))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_file(m: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market(m, File::create(path)?)
}

/// One value per line; blank lines and `#`/`%` comments are skipped.
pub fn read_vector_text<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        out.push(
            t.parse::<f64>()
                .map_err(|e| parse_err(idx + 1, format!("bad value '{t}': {e}")))?,
        );
    }
    Ok(out)
}

pub fn write_vector_text<W: Write>(v: &[f64], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for &x in v {
        writeln!(w, "{}", fmt17(x))?;
    }
    w.flush()?;
    Ok(())
}

/// Binary layout: 8-byte magic, little-endian `u64` length, then `f64` values.
pub fn write_vector_binary<W: Write>(v: &[f64], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(VEC_MAGIC)?;
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for &x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_binary<R: Read>(mut reader: R) -> Result<Vec<f64>> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != VEC_MAGIC {
        return Err(parse_err(0, "not a binary vector file"));
    }
    let mut len = [0u8; 8];
    reader.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(parse_err(0, format!("expected {n} values, found {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Picks the binary or text reader from the file's leading bytes.
pub fn read_vector_file(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(VEC_MAGIC) {
        read_vector_binary(&bytes[..])
    } else {
        read_vector_text(&bytes[..])
    }
}
