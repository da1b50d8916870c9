//! Matrix Market reader producing dense, entrywise-nonnegative matrices.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads a `.mtx` file. Entries are replaced by their absolute values and
/// symmetric storage is expanded.
pub fn load_block_matrix_market(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file), path)
}

/// Parses Matrix Market text; `origin` labels error messages.
pub fn parse_matrix_market(reader: impl BufRead, origin: impl AsRef<Path>) -> Result<DenseMatrix> {
    let origin = origin.as_ref().to_path_buf();
    let err = |line: usize, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };

    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (lineno, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(err(1, "empty file".into())),
    };
    let (format, field, symmetry) = match parse_header(&header) {
        Ok(h) => h,
        Err(HeaderError::Complex) => return Err(Error::ComplexUnsupported),
        Err(HeaderError::Bad(m)) => return Err(err(lineno, m)),
    };

    let mut size: Option<(usize, usize, Option<usize>)> = None;
    let mut dense: Option<DenseMatrix> = None;
    let mut seen = 0usize;
    let mut array_pos = 0usize;

    for (lineno, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols, nnz)) = size else {
            let parsed = parse_size(&toks, format).map_err(|m| err(lineno, m))?;
            if parsed.0 != parsed.1 {
                return Err(Error::NotSquare {
                    rows: parsed.0,
                    cols: parsed.1,
                });
            }
            size = Some(parsed);
            dense = Some(DenseMatrix::zeros(parsed.0, parsed.1));
            continue;
        };
        let a = dense.as_mut().expect("allocated with size line");
        match format {
            Format::Coordinate => {
                let want = if field == Field::Pattern { 2 } else { 3 };
                if toks.len() != want {
                    return Err(err(lineno, format!("expected {want} fields, found {}", toks.len())));
                }
                let i = parse_index(toks[0], rows).map_err(|m| err(lineno, m))?;
                let j = parse_index(toks[1], cols).map_err(|m| err(lineno, m))?;
                let v = if field == Field::Pattern {
                    1.0
                } else {
                    parse_value(toks[2]).map_err(|m| err(lineno, m))?
                };
                if seen == nnz.unwrap_or(0) {
                    return Err(err(lineno, "more entries than declared".into()));
                }
                seen += 1;
                a.row_mut(i)[j] = v.abs();
                if symmetry != Symmetry::General && i != j {
                    a.row_mut(j)[i] = v.abs();
                }
            }
            Format::Array => {
                if toks.len() != 1 {
                    return Err(err(lineno, format!("expected 1 field, found {}", toks.len())));
                }
                let v = parse_value(toks[0]).map_err(|m| err(lineno, m))?;
                // Column-major; symmetric storage lists the lower triangle only.
                let (i, j) = match symmetry {
                    Symmetry::General => (array_pos % rows, array_pos / rows),
                    _ => lower_triangle_position(array_pos, rows, symmetry == Symmetry::SkewSymmetric)
                        .ok_or_else(|| err(lineno, "more entries than declared".into()))?,
                };
                if j >= cols {
                    return Err(err(lineno, "more entries than declared".into()));
                }
                array_pos += 1;
                a.row_mut(i)[j] = v.abs();
                if symmetry != Symmetry::General {
                    a.row_mut(j)[i] = v.abs();
                }
            }
        }
    }

    let Some((rows, _, nnz)) = size else {
        return Err(err(lineno, "missing size line".into()));
    };
    let expected = match (format, symmetry) {
        (Format::Coordinate, _) => nnz.unwrap_or(0),
        (Format::Array, Symmetry::General) => rows * rows,
        (Format::Array, Symmetry::Symmetric) => rows * (rows + 1) / 2,
        (Format::Array, Symmetry::SkewSymmetric) => rows * (rows - 1) / 2,
    };
    let got = if format == Format::Coordinate { seen } else { array_pos };
    if got != expected {
        return Err(err(0, format!("declared {expected} entries, found {got}")));
    }
    Ok(dense.expect("allocated with size line"))
}

enum HeaderError {
    Complex,
    Bad(String),
}

fn parse_header(line: &str) -> std::result::Result<(Format, Field, Symmetry), HeaderError> {
    use HeaderError::Bad;
    let toks: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Bad(format!("bad header {line:?}")));
    }
    let format = match toks[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(Bad(format!("unknown format {other:?}"))),
    };
    let field = match toks[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if format == Format::Coordinate => Field::Pattern,
        "complex" => return Err(HeaderError::Complex),
        other => return Err(Bad(format!("unsupported field {other:?}"))),
    };
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(Bad(format!("unsupported symmetry {other:?}"))),
    };
    Ok((format, field, symmetry))
}

fn parse_size(toks: &[&str], format: Format) -> std::result::Result<(usize, usize, Option<usize>), String> {
    let want = if format == Format::Coordinate { 3 } else { 2 };
    if toks.len() != want {
        return Err(format!("size line needs {want} integers"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad size {s:?}"));
    let rows = num(toks[0])?;
    let cols = num(toks[1])?;
    let nnz = if want == 3 { Some(num(toks[2])?) } else { None };
    Ok((rows, cols, nnz))
}

fn parse_index(tok: &str, bound: usize) -> std::result::Result<usize, String> {
    match tok.parse::<usize>() {
        Ok(k) if (1..=bound).contains(&k) => Ok(k - 1),
        Ok(k) => Err(format!("index {k} out of range 1..={bound}")),
        Err(_) => Err(format!("bad index {tok:?}")),
    }
}

fn parse_value(tok: &str) -> std::result::Result<f64, String> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("bad value {tok:?}")),
    }
}

fn lower_triangle_position(k: usize, n: usize, strict: bool) -> Option<(usize, usize)> {
    let mut k = k;
    for j in 0..n {
        let start = if strict { j + 1 } else { j };
        let len = n - start;
        if k < len {
            return Some((start + k, j));
        }
        k -= len;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DenseMatrix> {
        parse_matrix_market(text.as_bytes(), "test.mtx")
    }

    #[test]
    fn coordinate_identity() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 1.0\n2 2 1.0\n").unwrap();
        assert_eq!(a, DenseMatrix::identity(2));
    }

    #[test]
    fn absolute_values() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 -3.5\n").unwrap();
        assert_eq!(a[(0, 1)], 3.5);
        assert_eq!(a[(1, 0)], 0.0);
    }

    #[test]
    fn symmetric_lower_triangle_expanded() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 5\n1 1 4\n2 1 -1\n3 1 2\n2 2 5\n3 3 6\n";
        let expected = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 2.0],
            vec![1.0, 5.0, 0.0],
            vec![2.0, 0.0, 6.0],
        ]);
        assert_eq!(parse(text).unwrap(), expected);
    }

    #[test]
    fn array_formats() {
        // Column-major general.
        let a = parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n-4\n").unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]));
        let s = parse("%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n").unwrap();
        assert_eq!(s, DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]));
        let k = parse("%%MatrixMarket matrix array real skew-symmetric\n3 3\n1\n2\n3\n").unwrap();
        assert_eq!(k, DenseMatrix::from_rows(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]]));
    }

    #[test]
    fn integer_and_pattern_fields() {
        let a = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n2 1 -7\n").unwrap();
        assert_eq!(a[(1, 0)], 7.0);
        let p = parse("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n").unwrap();
        assert_eq!(p, DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"),
            Err(Error::ComplexUnsupported)
        ));
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate real general\n2 3 0\n"),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
        for bad in [
            "",
            "not a header\n",
            "%%MatrixMarket matrix coordinate real general\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n",
            "%%MatrixMarket matrix array real general\n2 2\n1\n",
        ] {
            assert!(matches!(parse(bad), Err(Error::Parse { .. })), "{bad:?}");
        }
        match parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
