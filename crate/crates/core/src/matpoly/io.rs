//! Matrix Market coefficient files plus a JSON manifest.
//!
//! ```text
//! {"n": 100, "degree": 4, "coefficients": ["P0.mtx", "P1.mtx", ...]}
//! ```
//! Coefficient paths are resolved relative to the manifest's directory.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MatrixPolynomial;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub degree: usize,
    pub coefficients: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(BufReader::new(file), &path.display().to_string())
}

fn parse_matrix_market<R: BufRead>(reader: R, name: &str) -> Result<DMatrix<f64>> {
    let bad = |msg: String| Error::Format(format!("{name}: {msg}"));
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| Error::io(name, e))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(bad(format!("bad header {header:?}")));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(bad(format!("unsupported format {other}"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(bad(format!("unsupported field {other}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(bad(format!("unsupported symmetry {other}"))),
    };

    let mut data = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(name, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        data.push(t.to_string());
    }
    let mut it = data.iter();
    let size_line = it.next().ok_or_else(|| bad("missing size line".into()))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(format!("bad size line {size_line:?}"))))
        .collect::<Result<_>>()?;
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number {s:?}"))) };

    let (rows, cols);
    let mut m;
    if coordinate {
        if sizes.len() != 3 {
            return Err(bad("coordinate size line needs rows cols nnz".into()));
        }
        (rows, cols) = (sizes[0], sizes[1]);
        m = DMatrix::zeros(rows, cols);
        let mut count = 0;
        for entry in it {
            let f: Vec<&str> = entry.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("bad entry {entry:?}")));
            }
            let i: usize = f[0].parse().map_err(|_| bad(format!("bad index in {entry:?}")))?;
            let j: usize = f[1].parse().map_err(|_| bad(format!("bad index in {entry:?}")))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(bad(format!("index out of range in {entry:?}")));
            }
            let v = num(f[2])?;
            m[(i - 1, j - 1)] = v;
            if i != j {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => m[(j - 1, i - 1)] = v,
                    Symmetry::SkewSymmetric => m[(j - 1, i - 1)] = -v,
                }
            }
            count += 1;
        }
        if count != sizes[2] {
            return Err(bad(format!("expected {} entries, found {count}", sizes[2])));
        }
    } else {
        if sizes.len() != 2 {
            return Err(bad("array size line needs rows cols".into()));
        }
        (rows, cols) = (sizes[0], sizes[1]);
        m = DMatrix::zeros(rows, cols);
        let values: Vec<f64> = it.flat_map(|l| l.split_whitespace()).map(num).collect::<Result<_>>()?;
        // Column-major; symmetric variants store the lower triangle only
        // (skew-symmetric: strictly lower).
        let mut k = 0;
        let mut next = || -> Result<f64> {
            let v = values.get(k).copied().ok_or_else(|| bad("too few array entries".into()));
            k += 1;
            v
        };
        for j in 0..cols {
            let start = match symmetry {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::SkewSymmetric => j + 1,
            };
            for i in start..rows {
                let v = next()?;
                m[(i, j)] = v;
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => m[(j, i)] = v,
                    Symmetry::SkewSymmetric => m[(j, i)] = -v,
                }
            }
        }
        if k != values.len() {
            return Err(bad("too many array entries".into()));
        }
    }
    Ok(m)
}

/// Writes `m` as a general coordinate file listing its nonzeros. Values
/// use the shortest decimal form that round-trips exactly.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let nnz = m.iter().filter(|&&x| x != 0.0).count();
    let mut body = String::new();
    body.push_str("%%MatrixMarket matrix coordinate real general\n");
    body.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), nnz));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                body.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
            }
        }
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_polynomial(manifest: impl AsRef<Path>) -> Result<MatrixPolynomial> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let man: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
    if man.coefficients.len() != man.degree + 1 {
        return Err(Error::Dimension(format!(
            "manifest declares degree {} but lists {} coefficient files",
            man.degree,
            man.coefficients.len()
        )));
    }
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut coeffs = Vec::with_capacity(man.coefficients.len());
    for (k, rel) in man.coefficients.iter().enumerate() {
        let c = read_matrix_market(dir.join(rel))?;
        if c.nrows() != man.n || c.ncols() != man.n {
            return Err(Error::Dimension(format!(
                "coefficient P_{k} ({rel}) is {}x{}, manifest says n = {}",
                c.nrows(),
                c.ncols(),
                man.n
            )));
        }
        coeffs.push(c);
    }
    MatrixPolynomial::new(coeffs)
}

/// Writes the manifest to `manifest` and one `<stem>_P<k>.mtx` per
/// coefficient beside it. Returns all written paths, manifest first.
pub fn write_polynomial(p: &MatrixPolynomial, manifest: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let manifest = manifest.as_ref();
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "poly".into());
    let mut written = vec![manifest.to_path_buf()];
    let mut names = Vec::new();
    for (k, c) in p.coeffs().iter().enumerate() {
        let name = format!("{stem}_P{k}.mtx");
        let path = dir.join(&name);
        write_matrix_market(&path, c)?;
        written.push(path);
        names.push(name);
    }
    let man = Manifest {
        n: p.n(),
        degree: p.degree(),
        coefficients: names,
    };
    let text = serde_json::to_string_pretty(&man).expect("manifest serializes");
    fs::write(manifest, text + "\n").map_err(|e| Error::io(manifest, e))?;
    Ok(written)
}
