//! LIBSVM / svmlight text format: `label idx:val idx:val ...` with 1-based,
//! strictly increasing feature indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::dataio::{DataError, Dataset, Sample};
use crate::numkit::SparseVector;
use crate::scalar::Scalar;

struct RawRow {
    label: f64,
    indices: Vec<usize>,
    values: Vec<f64>,
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<RawRow>, DataError> {
    let content = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut tokens = content.split_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let label: f64 = label_tok.parse().map_err(|_| DataError::NonNumeric {
        line: lineno,
        token: label_tok.to_string(),
    })?;
    if !label.is_finite() {
        return Err(DataError::NonNumeric { line: lineno, token: label_tok.to_string() });
    }
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::Malformed {
            line: lineno,
            reason: format!("expected idx:val, found {tok:?}"),
        })?;
        let idx: usize = idx.parse().map_err(|_| DataError::Malformed {
            line: lineno,
            reason: format!("bad feature index {idx:?}"),
        })?;
        if idx == 0 {
            return Err(DataError::Malformed {
                line: lineno,
                reason: "feature indices are 1-based".into(),
            });
        }
        let val: f64 = val
            .parse()
            .map_err(|_| DataError::NonNumeric { line: lineno, token: val.to_string() })?;
        if !val.is_finite() {
            return Err(DataError::NonNumeric { line: lineno, token: val.to_string() });
        }
        let zero_based = idx - 1;
        if let Some(&prev) = indices.last() {
            if zero_based <= prev {
                return Err(DataError::NonIncreasingIndex { line: lineno, previous: prev + 1, next: idx });
            }
        }
        indices.push(zero_based);
        values.push(val);
    }
    Ok(Some(RawRow { label, indices, values }))
}

/// Maps raw labels onto {−1, +1}: with two distinct labels the smaller one
/// becomes −1; a single-valued file keeps ±1 and maps 0 → −1, 2 → +1.
fn label_map(raw: &[f64]) -> Result<impl Fn(f64) -> f64, DataError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &l in raw {
        if !distinct.contains(&l) {
            distinct.push(l);
            if distinct.len() > 2 {
                distinct.sort_by(f64::total_cmp);
                return Err(DataError::Labels { found: distinct });
            }
        }
    }
    distinct.sort_by(f64::total_cmp);
    let negative = match distinct.as_slice() {
        [lo, _hi] => Some(*lo),
        [x] if *x == -1.0 || *x == 0.0 => Some(*x),
        [x] if *x == 1.0 || *x == 2.0 => None,
        _ => return Err(DataError::Labels { found: distinct }),
    };
    Ok(move |l: f64| if Some(l) == negative { -1.0 } else { 1.0 })
}

/// Parses LIBSVM text. Blank lines and `#` comments are skipped; line order
/// is preserved exactly.
pub fn parse_libsvm<S: Scalar, R: Read>(reader: R, name: &str) -> Result<Dataset<S>, DataError> {
    let reader = BufReader::new(reader);
    let mut rows = Vec::new();
    let mut max_index: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(row) = parse_line(&line, i + 1)? {
            if let Some(&last) = row.indices.last() {
                max_index = Some(max_index.map_or(last, |m| m.max(last)));
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let dim = max_index.map_or(1, |m| m + 1);
    let labels: Vec<f64> = rows.iter().map(|r| r.label).collect();
    let map = label_map(&labels)?;
    let samples = rows
        .into_iter()
        .map(|r| {
            let values = r.values.into_iter().map(S::of).collect();
            let features = SparseVector::new(r.indices, values, dim)?;
            Ok(Sample { features, label: S::of(map(r.label)) })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Dataset::new(samples, dim, name)
}

/// Opens a LIBSVM file, transparently decompressing `.gz` inputs.
pub fn read_libsvm_file<S: Scalar>(path: &Path) -> Result<Dataset<S>, DataError> {
    let file = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().trim_end_matches(".gz").to_string())
        .unwrap_or_default();
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm(GzDecoder::new(file), &name)
    } else {
        parse_libsvm(file, &name)
    }
}

/// Writes a dataset back out in LIBSVM form with labels ±1.
pub fn write_libsvm<S: Scalar, W: Write>(ds: &Dataset<S>, mut out: W) -> std::io::Result<()> {
    for s in ds.samples() {
        write!(out, "{}", if s.label > S::zero() { "+1" } else { "-1" })?;
        for (i, v) in s.features.iter() {
            write!(out, " {}:{}", i + 1, v.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
