//! Class-similarity matrix from classifier probability logs.
//!
//! Every image of class `i` contributes its whole softmax vector to row `i`:
//! `B[i][j]` is the total probability mass that images of class `i` put on
//! class `j`. A large `B[i][j]` means the classifier often mistakes `i` for
//! `j`, so the two classes are similar. The diagonal (mass on the correct
//! class) is tracked separately and stored as zero.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Tolerance on a softmax row summing to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("no probability records")]
    Empty,
    #[error("record {image_id}: expected {expected} probabilities, found {found}")]
    LengthMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("record {image_id}: true class {class} out of range for {n} classes")]
    ClassOutOfRange {
        image_id: String,
        class: usize,
        n: usize,
    },
    #[error("record {image_id}: invalid probability vector ({reason})")]
    InvalidProbabilities { image_id: String, reason: String },
    #[error("class index {index} out of range for {n} classes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("matrix must be square with one name per class: {0}")]
    Shape(String),
    #[error("negative or non-finite similarity {value} at ({row}, {col})")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One image's softmax output with its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRecord {
    pub image_id: String,
    pub true_class: usize,
    pub probs: Vec<f64>,
}

impl ProbabilityRecord {
    pub fn validate(&self, n: usize) -> Result<(), SimilarityError> {
        if self.probs.len() != n {
            return Err(SimilarityError::LengthMismatch {
                image_id: self.image_id.clone(),
                expected: n,
                found: self.probs.len(),
            });
        }
        if self.true_class >= n {
            return Err(SimilarityError::ClassOutOfRange {
                image_id: self.image_id.clone(),
                class: self.true_class,
                n,
            });
        }
        let invalid = |reason: String| SimilarityError::InvalidProbabilities {
            image_id: self.image_id.clone(),
            reason,
        };
        if let Some(p) = self
            .probs
            .iter()
            .find(|p| !p.is_finite() || !(0.0..=1.0).contains(*p))
        {
            return Err(invalid(format!("value {p} outside [0, 1]")));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(invalid(format!("sum {sum} is not 1")));
        }
        Ok(())
    }
}

/// An `n x n` nonnegative similarity matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    class_names: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from row-major values. The diagonal is forced to zero.
    pub fn new(class_names: Vec<String>, mut values: Vec<f64>) -> Result<Self, SimilarityError> {
        let n = class_names.len();
        if n == 0 || values.len() != n * n {
            return Err(SimilarityError::Shape(format!(
                "{n} names, {} values",
                values.len()
            )));
        }
        for row in 0..n {
            for col in 0..n {
                let value = values[row * n + col];
                if row != col && !(value.is_finite() && value >= 0.0) {
                    return Err(SimilarityError::BadEntry { row, col, value });
                }
            }
            values[row * n + row] = 0.0;
        }
        Ok(SimilarityMatrix {
            class_names,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self, SimilarityError> {
        if names.len() != self.n() {
            return Err(SimilarityError::Shape(format!(
                "{} names for {} classes",
                names.len(),
                self.n()
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n() + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Multiplies every entry by `factor` (must be positive).
    pub fn scaled(&self, factor: f64) -> SimilarityMatrix {
        assert!(factor > 0.0 && factor.is_finite());
        SimilarityMatrix {
            class_names: self.class_names.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Output of [`build_similarity`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBuild {
    pub matrix: SimilarityMatrix,
    /// Records seen per true class.
    pub record_counts: Vec<usize>,
    /// Mass each class put on itself (the discarded diagonal).
    pub diagonal_mass: Vec<f64>,
    /// Classes with no records; their rows are all zero.
    pub empty_classes: Vec<usize>,
}

pub fn default_class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class_{i}")).collect()
}

/// Accumulates `B[i][j] = sum of probs[j]` over the records of class `i`.
///
/// ```
/// use camsel::similarity::{build_similarity, ProbabilityRecord};
///
/// let rec = ProbabilityRecord { image_id: "a".into(), true_class: 0, probs: vec![0.0, 1.0, 0.0] };
/// let b = build_similarity(&[rec], 3).unwrap().matrix;
/// assert_eq!(b.row(0), &[0.0, 1.0, 0.0]);
/// ```
pub fn build_similarity(
    records: &[ProbabilityRecord],
    n: usize,
) -> Result<SimilarityBuild, SimilarityError> {
    if records.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let mut values = vec![0.0; n * n];
    let mut record_counts = vec![0usize; n];
    let mut diagonal_mass = vec![0.0; n];
    for rec in records {
        rec.validate(n)?;
        let i = rec.true_class;
        record_counts[i] += 1;
        for (j, &p) in rec.probs.iter().enumerate() {
            if j == i {
                diagonal_mass[i] += p;
            } else {
                values[i * n + j] += p;
            }
        }
    }
    let empty_classes = (0..n).filter(|&i| record_counts[i] == 0).collect();
    Ok(SimilarityBuild {
        matrix: SimilarityMatrix::new(default_class_names(n), values)?,
        record_counts,
        diagonal_mass,
        empty_classes,
    })
}

/// Classes other than `target`, most similar first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRanking {
    pub target: usize,
    pub order: Vec<usize>,
}

/// Sorts row `target` descending; ties go to the lower class index.
pub fn rank_classes(b: &SimilarityMatrix, target: usize) -> Result<ClassRanking, SimilarityError> {
    let n = b.n();
    if target >= n {
        return Err(SimilarityError::IndexOutOfRange { index: target, n });
    }
    let row = b.row(target);
    let mut order: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    order.sort_by(|&a, &c| row[c].total_cmp(&row[a]).then(a.cmp(&c)));
    Ok(ClassRanking { target, order })
}

/// `(B + B^T) / 2`, used wherever a single pairwise similarity is needed.
pub fn symmetrize(b: &SimilarityMatrix) -> SimilarityMatrix {
    let n = b.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i * n + j] = (b.get(i, j) + b.get(j, i)) / 2.0;
            }
        }
    }
    SimilarityMatrix {
        class_names: b.class_names.clone(),
        values,
    }
}

// ---- CSV formats ----------------------------------------------------------

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> SimilarityError {
    SimilarityError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SimilarityError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

/// Parses a probability log: `image_id,true_class,p_0,...,p_{n-1}`.
///
/// Returns the records and the class count implied by the header.
pub fn parse_probability_log(
    reader: impl Read,
    path: &Path,
) -> Result<(Vec<ProbabilityRecord>, usize), SimilarityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "image_id" || &headers[1] != "true_class" {
        return Err(parse_err(
            path,
            1,
            "header must be image_id,true_class,p_0,...",
        ));
    }
    let n = headers.len() - 2;
    for (k, h) in headers.iter().skip(2).enumerate() {
        if h != format!("p_{k}") {
            return Err(parse_err(path, 1, format!("expected column p_{k}, found {h}")));
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let true_class = row[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad true_class {:?}", &row[1])))?;
        let probs = row
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad probability {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rec = ProbabilityRecord {
            image_id: row[0].to_string(),
            true_class,
            probs,
        };
        rec.validate(n)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        records.push(rec);
    }
    Ok((records, n))
}

pub fn read_probability_log(
    path: impl AsRef<Path>,
) -> Result<(Vec<ProbabilityRecord>, usize), SimilarityError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SimilarityError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_probability_log(file, path)
}

pub fn write_probability_log(
    records: &[ProbabilityRecord],
    n: usize,
    path: impl AsRef<Path>,
) -> Result<(), SimilarityError> {
    let mut out = String::from("image_id,true_class");
    for k in 0..n {
        out.push_str(&format!(",p_{k}"));
    }
    out.push('\n');
    for rec in records {
        out.push_str(&format!("{},{}", rec.image_id, rec.true_class));
        for p in &rec.probs {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    write_file(path.as_ref(), out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimilarityError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| SimilarityError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes the matrix as CSV: one row of class names, then `n` rows of `n` floats.
pub fn write_similarity_csv(b: &SimilarityMatrix, path: impl AsRef<Path>) -> Result<(), SimilarityError> {
    let mut out = b.class_names.join(",");
    out.push('\n');
    for i in 0..b.n() {
        let row: Vec<String> = b.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path.as_ref(), out.as_bytes())
}

pub fn parse_similarity_csv(reader: impl Read, path: &Path) -> Result<SimilarityMatrix, SimilarityError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let names: Vec<String> = match rows.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect(),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let n = names.len();
    let mut values = Vec::with_capacity(n * n);
    for row in rows {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != n {
            return Err(parse_err(path, line, format!("expected {n} values, found {}", row.len())));
        }
        for s in row.iter() {
            values.push(
                s.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad value {s:?}")))?,
            );
        }
    }
    if values.len() != n * n {
        return Err(parse_err(
            path,
            0,
            format!("expected {n} rows, found {}", values.len() / n.max(1)),
        ));
    }
    SimilarityMatrix::new(names, values)
}

pub fn read_similarity_csv(path: impl AsRef<Path>) -> Result<SimilarityMatrix, SimilarityError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SimilarityError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_similarity_csv(file, path)
}
