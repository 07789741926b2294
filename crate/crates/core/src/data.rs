//! Feature tables, discrete measures and class statistics.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MEASURE_MASS_TOL: f64 = 1e-12;

/// An `n × d` matrix of finite feature vectors with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
}

fn check_finite(features: &ArrayView2<f64>) -> Result<()> {
    for (row, values) in features.axis_iter(Axis(0)).enumerate() {
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, column });
        }
    }
    Ok(())
}

impl FeatureTable {
    pub fn new(features: Array2<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "feature table must be non-empty, got {n}x{d}"
            )));
        }
        check_finite(&features.view())?;
        let features = features.as_standard_layout().into_owned();
        Ok(FeatureTable {
            features,
            labels: None,
        })
    }

    pub fn with_labels(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let mut table = Self::new(features)?;
        table.set_labels(labels)?;
        Ok(table)
    }

    /// Builds a table from row vectors; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let features = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(features)
    }

    pub fn set_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.n_samples() {
            return Err(Error::DimensionMismatch {
                expected: self.n_samples(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of classes implied by the labels (largest label plus one).
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|&m| m + 1))
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features
            .as_slice()
            .expect("standard layout")
            .chunks_exact(self.dim())
    }

    /// A new table holding the given rows (and their labels) in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let mut table = Self::new(features)?;
        if let Some(labels) = &self.labels {
            table.labels = Some(indices.iter().map(|&i| labels[i]).collect());
        }
        Ok(table)
    }

    /// Indices of the rows carrying `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .as_ref()
            .map(|labels| {
                labels
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &l)| (l == class).then_some(i))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Stacks two tables with the same dimension; labels are kept only if both have them.
    pub fn concat(&self, other: &FeatureTable) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut table = Self::new(features)?;
        if let (Some(a), Some(b)) = (&self.labels, &other.labels) {
            table.labels = Some(a.iter().chain(b).copied().collect());
        }
        Ok(table)
    }
}

/// Finitely supported probability measure `Σ_j a_j δ_{z_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = points.nrows();
        if m == 0 || points.ncols() == 0 {
            return Err(Error::invalid("discrete measure needs at least one point"));
        }
        if weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: weights.len(),
            });
        }
        check_finite(&points.view())?;
        if let Some(j) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!(
                "weight {j} is {} (must be finite and >= 0)",
                weights[j]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MEASURE_MASS_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasure {
            points: points.as_standard_layout().into_owned(),
            weights,
        })
    }

    /// Divides `weights` by their sum before validating.
    pub fn normalized(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid(format!("weights sum to {total}")));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let m = points.nrows();
        Self::new(points, vec![1.0 / m as f64; m])
    }

    /// Same support with new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), weights)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice().expect("standard layout")[j * d..(j + 1) * d]
    }
}

/// Class proportions `p_c` estimated from (pseudo-)labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProportions(Vec<f64>);

impl ClassProportions {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Classes that received no label at all.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(c, &p)| (p == 0.0).then_some(c))
            .collect()
    }
}

/// `p_c = |{i : label_i = c}| / n`. Classes without labels get proportion zero.
pub fn class_proportions(labels: &[usize], num_classes: usize) -> Result<ClassProportions> {
    if labels.is_empty() {
        return Err(Error::invalid("no labels"));
    }
    if num_classes < 2 {
        return Err(Error::invalid(format!(
            "need at least two classes, got {num_classes}"
        )));
    }
    let mut counts = vec![0usize; num_classes];
    for (index, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                index,
                label: label as i64,
                num_classes,
            });
        }
        counts[label] += 1;
    }
    let n = labels.len() as f64;
    Ok(ClassProportions(
        counts.into_iter().map(|c| c as f64 / n).collect(),
    ))
}

/// Per-class mean features weighted by empirical class frequency.
///
/// The number of classes is taken from the largest label. Every class must
/// have at least one row.
pub fn class_means(table: &FeatureTable) -> Result<DiscreteMeasure> {
    let k = table
        .num_classes()
        .ok_or_else(|| Error::invalid("class means need a labeled table"))?;
    class_means_k(table, k)
}

pub fn class_means_k(table: &FeatureTable, num_classes: usize) -> Result<DiscreteMeasure> {
    let labels = table
        .labels()
        .ok_or_else(|| Error::invalid("class means need a labeled table"))?;
    let d = table.dim();
    let mut sums = Array2::<f64>::zeros((num_classes, d));
    let mut counts = vec![0usize; num_classes];
    for (index, (row, &label)) in table.rows().zip(labels).enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                index,
                label: label as i64,
                num_classes,
            });
        }
        counts[label] += 1;
        for (s, v) in sums.row_mut(label).iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    for (mut row, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        row /= c as f64;
    }
    let n = table.n_samples() as f64;
    DiscreteMeasure::new(sums, counts.iter().map(|&c| c as f64 / n).collect())
}
