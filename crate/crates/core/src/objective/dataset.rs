//! Binary-classification datasets for the logistic objective.
//!
//! CSV layout: a header row `f0,f1,...,f{d-1},label` followed by one sample per
//! line, label 0 or 1.

use std::io::Read;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must be f0..f{{d-1}},label; got `{0}`")]
    BadHeader(String),
    #[error("line {line}: {msg}")]
    BadRecord { line: u64, msg: String },
    #[error("dataset has no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let d = header.len().saturating_sub(1);
    let header_ok = d >= 1
        && header.get(d) == Some("label")
        && (0..d).all(|i| header.get(i) == Some(format!("f{i}").as_str()));
    if !header_ok {
        return Err(DatasetError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(DatasetError::BadRecord { line, msg: format!("expected {} fields, got {}", d + 1, rec.len()) });
        }
        for field in rec.iter().take(d) {
            let v: f64 = field
                .parse()
                .map_err(|_| DatasetError::BadRecord { line, msg: format!("not a number: `{field}`") })?;
            if !v.is_finite() {
                return Err(DatasetError::BadRecord { line, msg: format!("non-finite feature `{field}`") });
            }
            data.push(v);
        }
        let label = match &rec[d] {
            "0" => 0.0,
            "1" => 1.0,
            other => {
                return Err(DatasetError::BadRecord { line, msg: format!("label must be 0 or 1, got `{other}`") })
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset { features: DenseMatrix::from_row_major(labels.len(), d, data), labels })
}

/// Two unit-variance Gaussian blobs whose means sit `separation` apart along the
/// all-ones direction. Labels alternate 0, 1, 0, ... so both classes are present
/// for any `rows >= 2`.
pub fn synthetic_blobs(rows: usize, dim: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, &[stream::DATASET]);
    let shift = 0.5 * separation / (dim as f64).sqrt();
    let mut data = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    for r in 0..rows {
        let label = (r % 2) as f64;
        let sign = if label == 1.0 { 1.0 } else { -1.0 };
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(sign * shift + z);
        }
        labels.push(label);
    }
    Dataset { features: DenseMatrix::from_row_major(rows, dim, data), labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_well_formed_csv() {
        let text = "f0,f1,label\n1.0,2.0,1\n-0.5,0.25,0\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.labels, vec![1.0, 0.0]);
        assert_eq!(ds.features.row(1), &[-0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_header_and_labels() {
        assert!(matches!(read_csv("a,b,label\n1,2,0\n".as_bytes()), Err(DatasetError::BadHeader(_))));
        assert!(matches!(read_csv("f0,label\n1,2\n".as_bytes()), Err(DatasetError::BadRecord { line: 2, .. })));
        assert!(matches!(read_csv("f0,label\n".as_bytes()), Err(DatasetError::Empty)));
        assert!(read_csv("f0,label\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        let a = synthetic_blobs(10, 3, 2.0, 1);
        let b = synthetic_blobs(10, 3, 2.0, 1);
        let c = synthetic_blobs(10, 3, 2.0, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.labels.iter().filter(|&&y| y == 1.0).count(), 5);
    }
}
