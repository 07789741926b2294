//! OT confidence scores on top of a solved semi-discrete dual.
//!
//! With shifted distance `d̃(x, z_j) = ‖x − z_j‖^p − w_j` and prototypes
//! grouped by class, the score of `x` pseudo-labeled `i` is
//!
//! ```text
//! g(x) = min_{j ≠ i} [ min_{z ∈ S_j} d̃(x, z) − min_{y ∈ S_i} d̃(x, y) ]
//! ```
//!
//! Large scores mean that the pseudo-label is safe under the transport map.

mod bound;
mod postcheck;

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostExponent;
use crate::data::{class_proportions, DiscreteMeasure, FeatureTable};
use crate::error::{Error, Result};
use crate::sdot::{self, DualState, SolverConfig};

pub use bound::{misclassification_bound, BoundReport};
pub use postcheck::{postcheck_binary, postcheck_componentwise, PostCheckResult, ResidualCheck};

/// Prototypes with a class label each. A class may own several prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    measure: DiscreteMeasure,
    classes: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassPrototypes {
    pub fn new(measure: DiscreteMeasure, classes: Vec<usize>) -> Result<Self> {
        if classes.len() != measure.len() {
            return Err(Error::DimensionMismatch {
                expected: measure.len(),
                actual: classes.len(),
            });
        }
        let k = classes.iter().max().map_or(0, |c| c + 1);
        if k < 2 {
            return Err(Error::invalid("scoring needs at least two classes"));
        }
        let mut members = vec![Vec::new(); k];
        for (j, &c) in classes.iter().enumerate() {
            members[c].push(j);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(c));
        }
        Ok(ClassPrototypes {
            measure,
            classes,
            members,
        })
    }

    /// Prototype `j` represents class `j`, as with class means.
    pub fn one_per_class(measure: DiscreteMeasure) -> Result<Self> {
        let classes = (0..measure.len()).collect();
        Self::new(measure, classes)
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    pub fn class_of(&self, j: usize) -> usize {
        self.classes[j]
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }
}

/// `‖x − z_j‖^p − w_j`
pub fn shifted_distance(
    x: &[f64],
    j: usize,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    p: CostExponent,
) -> Result<f64> {
    if j >= prototypes.len() || j >= w.len() {
        return Err(Error::invalid(format!(
            "prototype index {j} out of range for {} prototypes",
            prototypes.len()
        )));
    }
    if x.len() != prototypes.dim() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.dim(),
            actual: x.len(),
        });
    }
    Ok(p.cost(x, prototypes.point(j)) - w[j])
}

/// Score of a single sample. See the module docs.
pub fn ot_score_multiclass(
    x: &[f64],
    label: usize,
    prototypes: &ClassPrototypes,
    w: &[f64],
    p: CostExponent,
) -> Result<f64> {
    OtScorer::new(prototypes.clone(), w.to_vec(), p)?.score(x, label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtScorer {
    prototypes: ClassPrototypes,
    weights: Vec<f64>,
    exponent: CostExponent,
}

impl OtScorer {
    pub fn new(prototypes: ClassPrototypes, weights: Vec<f64>, exponent: CostExponent) -> Result<Self> {
        if weights.len() != prototypes.measure.len() {
            return Err(Error::DimensionMismatch {
                expected: prototypes.measure.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("dual weights must be finite"));
        }
        Ok(OtScorer {
            prototypes,
            weights,
            exponent,
        })
    }

    pub fn prototypes(&self) -> &ClassPrototypes {
        &self.prototypes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exponent(&self) -> CostExponent {
        self.exponent
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.prototypes.measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.prototypes.measure.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.prototypes.num_classes() {
            return Err(Error::LabelOutOfRange {
                index: 0,
                label: class as i64,
                num_classes: self.prototypes.num_classes(),
            });
        }
        Ok(())
    }

    /// `min_{z ∈ S_c} d̃(x, z)`
    fn class_distance(&self, x: &[f64], class: usize) -> f64 {
        let m = &self.prototypes.measure;
        self.prototypes.members[class]
            .iter()
            .map(|&j| self.exponent.cost(x, m.point(j)) - self.weights[j])
            .fold(f64::INFINITY, f64::min)
    }

    fn score_unchecked(&self, x: &[f64], label: usize) -> f64 {
        let own = self.class_distance(x, label);
        (0..self.prototypes.num_classes())
            .filter(|&j| j != label)
            .map(|j| self.class_distance(x, j) - own)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn score(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_point(x)?;
        self.check_class(label)?;
        Ok(self.score_unchecked(x, label))
    }

    /// Signed two-class value `min_{S_a} d̃ − min_{S_b} d̃`: small for
    /// confident class-`a` samples, large for confident class-`b` samples.
    pub fn binary_g(&self, x: &[f64], class_a: usize, class_b: usize) -> Result<f64> {
        self.check_point(x)?;
        self.check_class(class_a)?;
        self.check_class(class_b)?;
        Ok(self.class_distance(x, class_a) - self.class_distance(x, class_b))
    }

    pub fn score_table(&self, targets: &FeatureTable, pseudo_labels: &[usize]) -> Result<ScoreReport> {
        if pseudo_labels.len() != targets.n_samples() {
            return Err(Error::DimensionMismatch {
                expected: targets.n_samples(),
                actual: pseudo_labels.len(),
            });
        }
        self.check_point(targets.row(0))?;
        let k = self.prototypes.num_classes();
        if let Some((index, &label)) = pseudo_labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange {
                index,
                label: label as i64,
                num_classes: k,
            });
        }
        let scores: Vec<f64> = pseudo_labels
            .par_iter()
            .enumerate()
            .map(|(i, &label)| self.score_unchecked(targets.row(i), label))
            .collect();
        ScoreReport::new(scores, pseudo_labels.to_vec())
    }

    /// `inf_{x labeled b} g(x) − sup_{x labeled a} g(x)` with the signed
    /// binary `g` of [`OtScorer::binary_g`].
    pub fn g_gap(
        &self,
        targets: &FeatureTable,
        pseudo_labels: &[usize],
        class_a: usize,
        class_b: usize,
    ) -> Result<f64> {
        if pseudo_labels.len() != targets.n_samples() {
            return Err(Error::DimensionMismatch {
                expected: targets.n_samples(),
                actual: pseudo_labels.len(),
            });
        }
        let mut sup_a = f64::NEG_INFINITY;
        let mut inf_b = f64::INFINITY;
        for (x, &label) in targets.rows().zip(pseudo_labels) {
            if label == class_a {
                sup_a = sup_a.max(self.binary_g(x, class_a, class_b)?);
            } else if label == class_b {
                inf_b = inf_b.min(self.binary_g(x, class_a, class_b)?);
            }
        }
        if sup_a == f64::NEG_INFINITY {
            return Err(Error::EmptyClass(class_a));
        }
        if inf_b == f64::INFINITY {
            return Err(Error::EmptyClass(class_b));
        }
        Ok(inf_b - sup_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassExtrema {
    pub class: usize,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub pseudo_labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<f64>>,
    pub mean_score: f64,
    pub per_class_extrema: Vec<ClassExtrema>,
}

impl ScoreReport {
    pub fn new(scores: Vec<f64>, pseudo_labels: Vec<usize>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("no scores"));
        }
        if scores.len() != pseudo_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                actual: pseudo_labels.len(),
            });
        }
        if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { row, column: 0 });
        }
        let k = pseudo_labels.iter().max().map_or(0, |c| c + 1);
        let mut extrema: Vec<Option<ClassExtrema>> = vec![None; k];
        for (&s, &class) in scores.iter().zip(&pseudo_labels) {
            let e = extrema[class].get_or_insert(ClassExtrema {
                class,
                count: 0,
                min: s,
                max: s,
            });
            e.count += 1;
            e.min = e.min.min(s);
            e.max = e.max.max(s);
        }
        let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok(ScoreReport {
            scores,
            pseudo_labels,
            normalized: None,
            mean_score,
            per_class_extrema: extrema.into_iter().flatten().collect(),
        })
    }

    /// Attaches min-max normalized scores.
    pub fn with_normalized(mut self) -> Self {
        self.normalized = Some(min_max_normalize(&self.scores));
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(std::io::Error::from)?;
        Ok(())
    }

    pub fn read_json(r: impl std::io::Read) -> Result<Self> {
        let report: ScoreReport = serde_json::from_reader(r).map_err(|e| Error::Parse {
            location: crate::error::Location::Line(e.line()),
            message: e.to_string(),
        })?;
        // recompute aggregates rather than trusting the file
        let normalized = report.normalized.clone();
        let mut fresh = ScoreReport::new(report.scores, report.pseudo_labels)?;
        if let Some(n) = normalized {
            if n.len() != fresh.len() {
                return Err(Error::DimensionMismatch {
                    expected: fresh.len(),
                    actual: n.len(),
                });
            }
            fresh.normalized = Some(n);
        }
        Ok(fresh)
    }

    /// One row per sample: `index,pseudo_label,score[,normalized]`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        match &self.normalized {
            Some(norm) => {
                writeln!(w, "index,pseudo_label,score,normalized")?;
                for (i, ((s, l), n)) in self.scores.iter().zip(&self.pseudo_labels).zip(norm).enumerate() {
                    writeln!(w, "{i},{l},{s},{n}")?;
                }
            }
            None => {
                writeln!(w, "index,pseudo_label,score")?;
                for (i, (s, l)) in self.scores.iter().zip(&self.pseudo_labels).enumerate() {
                    writeln!(w, "{i},{l},{s}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn mean_score(report: &ScoreReport) -> f64 {
    report.scores.iter().sum::<f64>() / report.scores.len() as f64
}

fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; scores.len()]
    }
}

/// Min-max normalizes `scores` to `[0, 1]` and forms sample weights
/// `2 · normalized · companion` (or `2 · normalized` without a companion).
pub fn normalize_and_reweight(scores: &[f64], companion: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores"));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    let normalized = min_max_normalize(scores);
    let weights = match companion {
        Some(c) => {
            if c.len() != scores.len() {
                return Err(Error::DimensionMismatch {
                    expected: scores.len(),
                    actual: c.len(),
                });
            }
            if let Some(i) = c.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "companion score {} at index {i} is outside [0, 1]",
                    c[i]
                )));
            }
            normalized.iter().zip(c).map(|(n, c)| 2.0 * n * c).collect()
        }
        None => normalized.iter().map(|n| 2.0 * n).collect(),
    };
    Ok((normalized, weights))
}

/// Result of the end-to-end scoring pipeline.
#[derive(Debug, Clone)]
pub struct ScoringRun {
    pub scorer: OtScorer,
    pub state: DualState,
    pub report: ScoreReport,
}

/// Full pipeline: weight the class prototypes by the pseudo-label class
/// proportions, solve the dual, then score every target.
///
/// Row `c` of `class_points` is the prototype of class `c`.
pub fn score_targets(
    class_points: Array2<f64>,
    targets: &FeatureTable,
    pseudo_labels: &[usize],
    config: &SolverConfig,
) -> Result<ScoringRun> {
    let k = class_points.nrows();
    if k < 2 {
        return Err(Error::invalid("scoring needs at least two classes"));
    }
    if pseudo_labels.len() != targets.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: targets.n_samples(),
            actual: pseudo_labels.len(),
        });
    }
    let proportions = class_proportions(pseudo_labels, k)?;
    let measure = DiscreteMeasure::new(class_points, proportions.into_vec())?;
    let state = sdot::solve(targets, &measure, config)?;
    let prototypes = ClassPrototypes::one_per_class(measure)?;
    let scorer = OtScorer::new(prototypes, state.weights.clone(), config.exponent)?;
    let report = scorer.score_table(targets, pseudo_labels)?.with_normalized();
    Ok(ScoringRun {
        scorer,
        state,
        report,
    })
}
