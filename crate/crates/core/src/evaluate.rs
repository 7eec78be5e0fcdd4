//! Thresholding, IoU/mIoU scoring and the pairwise Top-k analysis.
//!
//! Aggregation order: IoU per sample, mean per class over the samples whose
//! IoU is defined, then the unweighted mean over classes. A sample whose
//! prediction and groundtruth are both empty has no IoU and is skipped; a
//! class left with no defined IoU is absent from the report rather than zero.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{fuse_classes, CamError};
use crate::tensorio::{ActivationMap, BinaryMask};

/// Default binarization threshold for activation maps.
pub const DEFAULT_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dims {pred_h}x{pred_w} vs groundtruth {gt_h}x{gt_w}")]
    DimensionMismatch {
        pred_h: usize,
        pred_w: usize,
        gt_h: usize,
        gt_w: usize,
    },
    #[error("no groundtruth for {0}")]
    MissingGroundtruth(String),
    #[error("no class label for {0}")]
    MissingClass(String),
    #[error("class index {index} out of range for {n} classes")]
    ClassOutOfRange { index: usize, n: usize },
    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("missing pair map for {sample} vs class {comparison}")]
    MissingPairMap { sample: String, comparison: usize },
    #[error("pair matrix: {0}")]
    Matrix(String),
    #[error(transparent)]
    Cam(#[from] CamError),
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

/// Foreground wherever the map is at least `threshold`.
pub fn threshold_map(m: &ActivationMap, threshold: f64) -> BinaryMask {
    let bits = m.values().iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(m.height(), m.width(), bits).expect("map dims are valid")
}

/// `|P & G| / |P | G|`, or `None` when both masks are empty.
///
/// ```
/// use camsel::evaluate::iou;
/// use camsel::tensorio::BinaryMask;
///
/// let gt = BinaryMask::new(1, 5, vec![true, true, true, true, false]).unwrap();
/// let pred = BinaryMask::new(1, 5, vec![true, true, false, false, true]).unwrap();
/// assert_eq!(iou(&pred, &gt).unwrap(), Some(0.4));
/// ```
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<Option<f64>, EvalError> {
    if pred.dims() != gt.dims() {
        return Err(EvalError::DimensionMismatch {
            pred_h: pred.height(),
            pred_w: pred.width(),
            gt_h: gt.height(),
            gt_w: gt.width(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub index: usize,
    pub miou: f64,
    /// Samples with a defined IoU.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Present classes in class-index order.
    pub per_class: Vec<ClassScore>,
    pub average: f64,
    pub threshold: f64,
}

impl EvalReport {
    fn from_scores(per_class: Vec<ClassScore>, threshold: f64) -> Self {
        let average = if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(|s| s.miou).sum::<f64>() / per_class.len() as f64
        };
        EvalReport {
            per_class,
            average,
            threshold,
        }
    }

    pub fn get(&self, class: &str) -> Option<&ClassScore> {
        self.per_class.iter().find(|s| s.class == class)
    }

    /// `class,miou,count` rows followed by an `__avg__` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,miou,count\n");
        for s in &self.per_class {
            out.push_str(&format!("{},{},{}\n", s.class, s.miou, s.count));
        }
        let total: usize = self.per_class.iter().map(|s| s.count).sum();
        out.push_str(&format!("__avg__,{},{}\n", self.average, total));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Scores each sample's thresholded map against its groundtruth and averages
/// per class, then across classes.
///
/// All three maps are keyed by sample id.
pub fn miou_per_class(
    maps: &BTreeMap<String, ActivationMap>,
    gts: &BTreeMap<String, BinaryMask>,
    class_of: &BTreeMap<String, usize>,
    class_names: &[String],
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let n = class_names.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (sample, map) in maps {
        let gt = gts
            .get(sample)
            .ok_or_else(|| EvalError::MissingGroundtruth(sample.clone()))?;
        let class = *class_of
            .get(sample)
            .ok_or_else(|| EvalError::MissingClass(sample.clone()))?;
        if class >= n {
            return Err(EvalError::ClassOutOfRange { index: class, n });
        }
        if let Some(v) = iou(&threshold_map(map, threshold), gt)? {
            sums[class] += v;
            counts[class] += 1;
        }
    }
    let per_class = (0..n)
        .filter(|&c| counts[c] > 0)
        .map(|c| ClassScore {
            class: class_names[c].clone(),
            index: c,
            miou: sums[c] / counts[c] as f64,
            count: counts[c],
        })
        .collect();
    Ok(EvalReport::from_scores(per_class, threshold))
}

/// Pairwise mIoU table: entry `(row r, column c)` is the score of target
/// class `c` when class `r` is the comparison class. The diagonal is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    class_names: Vec<String>,
    values: Vec<Option<f64>>,
}

impl PairMatrix {
    /// Row-major off-diagonal values; diagonal entries are ignored.
    pub fn new(class_names: Vec<String>, values: Vec<Option<f64>>) -> Result<Self, EvalError> {
        let n = class_names.len();
        if n < 2 || values.len() != n * n {
            return Err(EvalError::Matrix(format!(
                "{n} classes but {} entries",
                values.len()
            )));
        }
        let mut values = values;
        for r in 0..n {
            for c in 0..n {
                let idx = r * n + c;
                if r == c {
                    values[idx] = None;
                    continue;
                }
                match values[idx] {
                    Some(v) if (0.0..=1.0).contains(&v) => {}
                    Some(v) => {
                        return Err(EvalError::Matrix(format!(
                            "value {v} at ({r}, {c}) outside [0, 1]"
                        )))
                    }
                    None => {
                        return Err(EvalError::Matrix(format!("missing value at ({r}, {c})")))
                    }
                }
            }
        }
        Ok(PairMatrix {
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

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Score of target `col` against comparison `row`.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.n() + col]
    }

    /// Same table with classes relabeled so that new class `i` is old
    /// class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> PairMatrix {
        let n = self.n();
        let mut values = vec![None; n * n];
        for r in 0..n {
            for c in 0..n {
                values[r * n + c] = self.get(perm[r], perm[c]);
            }
        }
        PairMatrix {
            class_names: perm.iter().map(|&i| self.class_names[i].clone()).collect(),
            values,
        }
    }
}

/// The `k` comparison classes scoring highest for target `class`, best
/// first, lower index first on ties.
pub fn topk_select_from_matrix(
    pm: &PairMatrix,
    class: usize,
    k: usize,
) -> Result<Vec<usize>, EvalError> {
    let n = pm.n();
    if class >= n {
        return Err(EvalError::ClassOutOfRange { index: class, n });
    }
    if k == 0 || k > n - 1 {
        return Err(EvalError::KOutOfRange { k, max: n - 1 });
    }
    let score = |r: usize| pm.get(r, class).unwrap_or(f64::NEG_INFINITY);
    let mut rows: Vec<usize> = (0..n).filter(|&r| r != class).collect();
    rows.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    rows.truncate(k);
    Ok(rows)
}

/// Per class, the best single comparison score (column maximum).
pub fn top1_report(pm: &PairMatrix) -> EvalReport {
    let per_class = (0..pm.n())
        .map(|c| {
            let best = topk_select_from_matrix(pm, c, 1).expect("n >= 2")[0];
            ClassScore {
                class: pm.class_names[c].clone(),
                index: c,
                miou: pm.get(best, c).expect("off-diagonal"),
                count: 1,
            }
        })
        .collect();
    EvalReport::from_scores(per_class, DEFAULT_THRESHOLD)
}

/// Fuses, for every sample, the pair maps of the `k` best comparison classes
/// of its target (ranked by `pm`) and scores the fused maps.
///
/// `pair_maps` is keyed by `(sample id, comparison class)`.
pub fn topk_fused_eval(
    k: usize,
    pm: &PairMatrix,
    pair_maps: &BTreeMap<(String, usize), ActivationMap>,
    gts: &BTreeMap<String, BinaryMask>,
    class_of: &BTreeMap<String, usize>,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let mut fused = BTreeMap::new();
    for (sample, &class) in class_of {
        if !gts.contains_key(sample) {
            continue;
        }
        let chosen = topk_select_from_matrix(pm, class, k)?;
        let maps = chosen
            .iter()
            .map(|&r| {
                pair_maps
                    .get(&(sample.clone(), r))
                    .cloned()
                    .ok_or_else(|| EvalError::MissingPairMap {
                        sample: sample.clone(),
                        comparison: r,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        fused.insert(sample.clone(), fuse_classes(&maps)?);
    }
    miou_per_class(&fused, gts, class_of, pm.class_names(), threshold)
}

// ---- CSV formats ----------------------------------------------------------

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_rows(reader: impl Read, path: &Path) -> Result<Vec<(usize, Vec<String>)>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(rows)
}

fn parse_cell(path: &Path, line: usize, s: &str) -> Result<Option<f64>, EvalError> {
    if s == "-" || s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(path, line, format!("bad value {s:?}")))
}

/// Reads a pair matrix: a header `class,<name_0>,...` followed by one row per
/// comparison class, `-` on the diagonal.
pub fn parse_pair_matrix_csv(reader: impl Read, path: &Path) -> Result<PairMatrix, EvalError> {
    let rows = read_rows(reader, path)?;
    let (_, header) = rows.first().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let names: Vec<String> = header.iter().skip(1).cloned().collect();
    let n = names.len();
    if rows.len() - 1 != n {
        return Err(parse_err(
            path,
            0,
            format!("expected {n} rows, found {}", rows.len() - 1),
        ));
    }
    let mut values = Vec::with_capacity(n * n);
    for (r, (line, row)) in rows.iter().skip(1).enumerate() {
        if row.len() != n + 1 {
            return Err(parse_err(path, *line, format!("expected {} cells", n + 1)));
        }
        if row[0] != names[r] {
            return Err(parse_err(
                path,
                *line,
                format!("row label {:?} does not match column {:?}", row[0], names[r]),
            ));
        }
        for cell in &row[1..] {
            values.push(parse_cell(path, *line, cell)?);
        }
    }
    PairMatrix::new(names, values).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn read_pair_matrix_csv(path: impl AsRef<Path>) -> Result<PairMatrix, EvalError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pair_matrix_csv(f, path)
}

pub fn pair_matrix_to_csv(pm: &PairMatrix) -> String {
    let mut out = format!("class,{}\n", pm.class_names.join(","));
    for r in 0..pm.n() {
        out.push_str(&pm.class_names[r]);
        for c in 0..pm.n() {
            match pm.get(r, c) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push_str(",-"),
            }
        }
        out.push('\n');
    }
    out
}

/// A labeled summary row of published per-class values plus their average.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub label: String,
    pub values: Vec<f64>,
    pub average: f64,
}

/// Reads summary rows: header `method,<name_0>,...,avg`.
pub fn read_reference_csv(
    path: impl AsRef<Path>,
) -> Result<(Vec<String>, Vec<ReferenceRow>), EvalError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = read_rows(f, path)?;
    let (_, header) = rows.first().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header.len() < 3 || header.last().map(String::as_str) != Some("avg") {
        return Err(parse_err(path, 1, "header must be method,<classes...>,avg"));
    }
    let names: Vec<String> = header[1..header.len() - 1].to_vec();
    let mut out = Vec::new();
    for (line, row) in rows.iter().skip(1) {
        if row.len() != header.len() {
            return Err(parse_err(path, *line, format!("expected {} cells", header.len())));
        }
        let nums = row[1..]
            .iter()
            .map(|s| parse_cell(path, *line, s)?.ok_or_else(|| parse_err(path, *line, "missing value")))
            .collect::<Result<Vec<_>, _>>()?;
        let (values, avg) = nums.split_at(nums.len() - 1);
        out.push(ReferenceRow {
            label: row[0].clone(),
            values: values.to_vec(),
            average: avg[0],
        });
    }
    Ok((names, out))
}
