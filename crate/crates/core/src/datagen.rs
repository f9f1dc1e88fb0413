//! Long-tailed class profiles, synthetic datasets and the CSV dataset format.
//!
//! CSV layout: one header line, then one row per sample with the integer
//! label in the first column followed by `D` feature columns.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, Matrix, Rng};

/// Per-class training counts, stored in class-index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassProfile {
    counts: Vec<usize>,
}

impl ClassProfile {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidArgument("profile needs at least one class".into()));
        }
        if let Some(j) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("class {j} has no samples")));
        }
        Ok(ClassProfile { counts })
    }

    /// Histogram of `labels` over `num_classes` classes.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut counts = vec![0usize; num_classes];
        for &y in labels {
            if y >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range for {num_classes} classes"
                )));
            }
            counts[y] += 1;
        }
        ClassProfile::new(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_max(&self) -> usize {
        *self.counts.iter().max().expect("non-empty")
    }

    pub fn n_min(&self) -> usize {
        *self.counts.iter().min().expect("non-empty")
    }

    pub fn imbalance_ratio(&self) -> f64 {
        self.n_max() as f64 / self.n_min() as f64
    }

    /// `key=value` lines for inclusion in reports.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let counts: Vec<String> = self.counts.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "classes={}", self.num_classes());
        let _ = writeln!(out, "samples={}", self.total());
        let _ = writeln!(out, "n_max={}", self.n_max());
        let _ = writeln!(out, "n_min={}", self.n_min());
        let _ = writeln!(out, "imbalance_ratio={}", self.imbalance_ratio());
        let _ = writeln!(out, "counts={}", counts.join(","));
        out
    }
}

/// Exponentially decaying profile `n_i = round(n_max · λ^i)` with
/// `λ = r^(-1/(C-1))`. Rounding is half-up, and the endpoints are pinned to
/// `n_max` and `round(n_max / r)`.
pub fn exponential_profile(n_max: usize, r: f64, num_classes: usize) -> Result<ClassProfile> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("imbalance ratio must be >= 1, got {r}")));
    }
    if (n_max as f64) < r {
        return Err(Error::InvalidArgument(format!(
            "n_max={n_max} is smaller than r={r}; the tail class would round to zero"
        )));
    }
    let round_half_up = |x: f64| (x + 0.5).floor() as usize;
    let lambda = r.powf(-1.0 / (num_classes - 1) as f64);
    let mut counts: Vec<usize> = (0..num_classes)
        .map(|i| round_half_up(n_max as f64 * lambda.powi(i as i32)))
        .collect();
    counts[0] = n_max;
    counts[num_classes - 1] = round_half_up(n_max as f64 / r);
    ClassProfile::new(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    profile: ClassProfile,
    split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        let profile = ClassProfile::from_labels(&labels, num_classes)?;
        Ok(Dataset {
            features,
            labels,
            profile,
            split,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn profile(&self) -> &ClassProfile {
        &self.profile
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.profile.num_classes()
    }

    pub fn batch(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_labeled_csv(path, "x", &self.features, &self.labels)
    }
}

/// Parameters of the synthetic long-tailed generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    /// Per-coordinate standard deviation of the isotropic noise around each anchor.
    pub class_spread: f64,
    pub test_per_class: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dim: 32,
            class_spread: 0.45,
            test_per_class: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    /// Unit-norm class anchors, one row per class.
    pub anchors: Matrix,
}

/// Gaussian blobs around random unit anchors. The training split follows
/// `profile`; the test split has `test_per_class` samples of every class.
///
/// Anchors come from `rng`'s stream. Samples of class `j` come from derived
/// streams `2j` (train) and `2j + 1` (test), so classes can be generated
/// independently without changing the result.
pub fn generate_synthetic(profile: &ClassProfile, spec: &SyntheticSpec, rng: &mut Rng) -> Result<SyntheticData> {
    if spec.dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "feature dimension must be >= 2, got {}",
            spec.dim
        )));
    }
    if !(spec.class_spread > 0.0) || !spec.class_spread.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "class_spread must be positive, got {}",
            spec.class_spread
        )));
    }
    if spec.test_per_class == 0 {
        return Err(Error::InvalidArgument("test_per_class must be >= 1".into()));
    }
    let c = profile.num_classes();
    let d = spec.dim;

    let mut anchors = Matrix::zeros(c, d);
    for j in 0..c {
        let raw: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        anchors.row_mut(j).copy_from_slice(&l2_normalize(&raw)?);
    }

    let blob = |counts: &dyn Fn(usize) -> usize, stream_offset: u64, split: Split| -> Result<Dataset> {
        let n: usize = (0..c).map(counts).sum();
        let mut features = Matrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for j in 0..c {
            let mut class_rng = rng.derive(2 * j as u64 + stream_offset);
            for _ in 0..counts(j) {
                for (x, a) in features.row_mut(row).iter_mut().zip(anchors.row(j)) {
                    *x = a + spec.class_spread * class_rng.standard_normal();
                }
                labels.push(j);
                row += 1;
            }
        }
        Dataset::new(features, labels, c, split)
    };

    let train = blob(&|j| profile.counts()[j], 0, Split::Train)?;
    let test = blob(&|_| spec.test_per_class, 1, Split::Test)?;
    Ok(SyntheticData { train, test, anchors })
}

/// Writes `label,<prefix>0,<prefix>1,...` rows with round-trip float formatting.
pub(crate) fn write_labeled_csv(path: &Path, prefix: &str, features: &Matrix, labels: &[usize]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("label");
    for k in 0..features.cols() {
        let _ = write!(header, ",{prefix}{k}");
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for (i, y) in labels.iter().enumerate() {
        line.clear();
        let _ = write!(line, "{y}");
        for v in features.row(i) {
            let _ = write!(line, ",{v:?}");
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Labels, feature rows and the 1-based line number of each row.
type LabeledRows = (Vec<usize>, Vec<Vec<f64>>, Vec<u64>);

/// Reads a labeled CSV into raw rows, checking only the numeric layout.
pub(crate) fn read_labeled_csv(path: &Path) -> Result<LabeledRows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let header_cols = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .len();
    if header_cols < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs a label column and at least one feature column".into(),
        });
    }

    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header_cols {
            return Err(Error::Parse {
                line,
                message: format!("expected {header_cols} columns, found {}", record.len()),
            });
        }
        let label_field = record[0].trim();
        let label = label_field.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("label {label_field:?} is not a non-negative integer"),
        })?;
        let mut row = Vec::with_capacity(header_cols - 1);
        for (k, field) in record.iter().skip(1).enumerate() {
            let v = field.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("feature column {k}: {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("feature column {k} is not finite"),
                });
            }
            row.push(v);
        }
        labels.push(label);
        rows.push(row);
        lines.push(line);
    }
    Ok((labels, rows, lines))
}

/// Loads a dataset, inferring the class count from the largest label.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    load_dataset_with_classes(path, None, Split::Train)
}

/// Loads a dataset. With `num_classes` set, labels `>= num_classes` are a
/// schema error; otherwise the class count is `max label + 1` and every class
/// below it must occur.
pub fn load_dataset_with_classes(path: &Path, num_classes: Option<usize>, split: Split) -> Result<Dataset> {
    let (labels, rows, lines) = read_labeled_csv(path)?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no data rows", path.display())));
    }
    let c = match num_classes {
        Some(c) => {
            if let Some(pos) = labels.iter().position(|&y| y >= c) {
                return Err(Error::Schema {
                    line: lines[pos],
                    message: format!("label {} out of range for {c} classes", labels[pos]),
                });
            }
            c
        }
        None => labels.iter().max().expect("non-empty") + 1,
    };
    let mut seen = vec![false; c];
    for &y in &labels {
        seen[y] = true;
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Schema {
            line: 0,
            message: format!("class {j} has no samples"),
        });
    }
    let features = Matrix::from_rows(&rows)?;
    Dataset::new(features, labels, c, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_profile_endpoints() {
        let p = exponential_profile(5000, 100.0, 10).unwrap();
        assert_eq!(p.counts()[0], 5000);
        assert_eq!(p.counts()[9], 50);
        assert_eq!(p.imbalance_ratio(), 100.0);
    }

    #[test]
    fn exponential_profile_second_class() {
        // 5000 · 100^(-1/9) = 2997.35...; computed with an independent
        // scalar evaluation (Python float pow) and rounded.
        let p = exponential_profile(5000, 100.0, 10).unwrap();
        assert_eq!(p.counts()[1], 2997);
    }

    #[test]
    fn balanced_profile() {
        let p = exponential_profile(500, 1.0, 4).unwrap();
        assert_eq!(p.counts(), &[500, 500, 500, 500]);
        assert_eq!(p.imbalance_ratio(), 1.0);
    }

    #[test]
    fn profile_rejects_bad_arguments() {
        assert!(exponential_profile(50, 100.0, 10).is_err());
        assert!(exponential_profile(500, 0.5, 10).is_err());
        assert!(exponential_profile(500, 10.0, 1).is_err());
        assert!(ClassProfile::new(vec![3, 0]).is_err());
        assert!(ClassProfile::new(vec![]).is_err());
    }

    #[test]
    fn summary_has_keys() {
        let p = ClassProfile::new(vec![10, 5, 2]).unwrap();
        let s = p.summary();
        assert!(s.contains("classes=3\n"));
        assert!(s.contains("samples=17\n"));
        assert!(s.contains("imbalance_ratio=5\n"));
        assert!(s.contains("counts=10,5,2\n"));
    }

    #[test]
    fn synthetic_histograms() {
        let p = exponential_profile(200, 10.0, 5).unwrap();
        let spec = SyntheticSpec {
            dim: 8,
            class_spread: 0.3,
            test_per_class: 20,
        };
        let data = generate_synthetic(&p, &spec, &mut Rng::new(1)).unwrap();
        assert_eq!(data.train.profile(), &p);
        assert_eq!(data.test.profile().counts(), &[20; 5]);
        assert_eq!(data.train.split(), Split::Train);
        assert_eq!(data.test.split(), Split::Test);
        for j in 0..5 {
            let a = data.anchors.row(j);
            assert!((crate::numerics::norm(a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_seeds_differ() {
        let p = exponential_profile(50, 5.0, 3).unwrap();
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&p, &spec, &mut Rng::new(1)).unwrap();
        let b = generate_synthetic(&p, &spec, &mut Rng::new(2)).unwrap();
        let a2 = generate_synthetic(&p, &spec, &mut Rng::new(1)).unwrap();
        assert_ne!(a.train.features(), b.train.features());
        assert!(a.train.features().bits_eq(a2.train.features()));
    }

    #[test]
    fn synthetic_rejects_bad_spec() {
        let p = exponential_profile(50, 5.0, 3).unwrap();
        let mut spec = SyntheticSpec {
            dim: 1,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&p, &spec, &mut Rng::new(0)).is_err());
        spec.dim = 4;
        spec.class_spread = 0.0;
        assert!(generate_synthetic(&p, &spec, &mut Rng::new(0)).is_err());
    }
}
