//! Seeded cluster generators and the small experiments built on them.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{euclidean, CostExponent};
use crate::data::{class_means_k, DiscreteMeasure, FeatureTable};
use crate::error::{Error, Result};
use crate::evaluation::{confidence_order, selective_accuracy};
use crate::oracle;
use crate::plot::ScatterPlot;
use crate::score::{self, ScoreReport};
use crate::sdot::{self, assignment_sharpness, Sharpness, SolverConfig, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterShape {
    /// Uniform in a ball of the given radius.
    Disk,
    /// Isotropic normal with the given standard deviation.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub centers: Vec<Vec<f64>>,
    /// Radius for disks, standard deviation for Gaussians.
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub shape: ClusterShape,
    pub seed: u64,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.centers.len();
        if k == 0 {
            return Err(Error::invalid("cluster spec has no centers"));
        }
        for len in [self.scales.len(), self.counts.len()] {
            if len != k {
                return Err(Error::DimensionMismatch { expected: k, actual: len });
            }
        }
        let d = self.centers[0].len();
        if d == 0 {
            return Err(Error::invalid("centers must have at least one coordinate"));
        }
        for (row, c) in self.centers.iter().enumerate() {
            if c.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: c.len() });
            }
            if let Some(column) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
        }
        if let Some(i) = self.scales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!("cluster {i} has non-positive scale {}", self.scales[i])));
        }
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("cluster {i} has no samples")));
        }
        Ok(())
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }
}

/// Samples every cluster in order; rows of cluster `k` carry label `k`.
pub fn gen_clusters(spec: &ClusterSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let d = spec.dim();
    let n: usize = spec.counts.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    let mut dir = vec![0.0; d];
    for (k, (center, (&scale, &count))) in spec
        .centers
        .iter()
        .zip(spec.scales.iter().zip(&spec.counts))
        .enumerate()
    {
        for _ in 0..count {
            for v in dir.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let factor = match spec.shape {
                ClusterShape::Gaussian => scale,
                ClusterShape::Disk => {
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let u: f64 = rng.random();
                    if norm > 0.0 {
                        scale * u.powf(1.0 / d as f64) / norm
                    } else {
                        0.0
                    }
                }
            };
            for (j, c) in center.iter().enumerate() {
                features[[row, j]] = c + factor * dir[j];
            }
            labels.push(k);
            row += 1;
        }
    }
    FeatureTable::with_labels(features, labels)
}

/// Two-sided separation condition between source and target class supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub holds: bool,
    /// `(r_μ1 + r_ν1 + l_1) + (r_μ2 + r_ν2 + l_2)`
    pub lhs: f64,
    /// `L_1 + L_2`
    pub rhs: f64,
}

/// A ball used as a class support.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

fn ball_distance(a: &Ball, b: &Ball) -> f64 {
    (euclidean(&a.center, &b.center) - a.radius - b.radius).max(0.0)
}

/// Evaluates the condition for source balls `mu` and target balls `nu`,
/// with diameters `2r`, within-class gaps `l_i = d(μ_i, ν_i)` and cross gaps
/// `L_1 = d(μ_1, ν_2)`, `L_2 = d(μ_2, ν_1)`.
pub fn separation_condition(mu: [&Ball; 2], nu: [&Ball; 2]) -> SeparationCheck {
    let l1 = ball_distance(mu[0], nu[0]);
    let l2 = ball_distance(mu[1], nu[1]);
    let cross1 = ball_distance(mu[0], nu[1]);
    let cross2 = ball_distance(mu[1], nu[0]);
    let lhs = (2.0 * mu[0].radius + 2.0 * nu[0].radius + l1) + (2.0 * mu[1].radius + 2.0 * nu[1].radius + l2);
    let rhs = cross1 + cross2;
    SeparationCheck {
        holds: lhs < rhs,
        lhs,
        rhs,
    }
}

/// Checks the separation condition on disk-shaped two-cluster specs.
pub fn separation_check(source: &ClusterSpec, target: &ClusterSpec) -> Result<SeparationCheck> {
    source.validate()?;
    target.validate()?;
    for spec in [source, target] {
        if spec.num_clusters() != 2 {
            return Err(Error::invalid(format!(
                "separation check needs exactly 2 clusters, got {}",
                spec.num_clusters()
            )));
        }
        if spec.shape != ClusterShape::Disk {
            return Err(Error::invalid(
                "separation check needs bounded supports; use separation_condition with explicit radii",
            ));
        }
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            actual: target.dim(),
        });
    }
    let balls = |s: &ClusterSpec| -> Vec<Ball> {
        s.centers
            .iter()
            .zip(&s.scales)
            .map(|(c, &r)| Ball {
                center: c.clone(),
                radius: r,
            })
            .collect()
    };
    let (mu, nu) = (balls(source), balls(target));
    Ok(separation_condition([&mu[0], &mu[1]], [&nu[0], &nu[1]]))
}

/// Per-class share of target mass that the exact plan sends to source
/// samples of the same class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPreservation {
    /// Indexed by target class; `None` for classes absent from the target.
    pub per_class: Vec<Option<f64>>,
    /// Share of all target mass kept within its class.
    pub overall: f64,
}

/// Exact OT between the two weighted empirical measures (uniform weights when
/// `None`), then measures how much mass stays within its class.
pub fn label_preservation(
    source: &FeatureTable,
    source_weights: Option<&[f64]>,
    target: &FeatureTable,
    target_weights: Option<&[f64]>,
    p: CostExponent,
) -> Result<LabelPreservation> {
    let (Some(src_labels), Some(tgt_labels)) = (source.labels(), target.labels()) else {
        return Err(Error::invalid("label preservation needs labeled source and target"));
    };
    let uniform = |n: usize| vec![1.0 / n as f64; n];
    let a = target_weights.map_or_else(|| uniform(target.n_samples()), <[f64]>::to_vec);
    let b = source_weights.map_or_else(|| uniform(source.n_samples()), <[f64]>::to_vec);
    let costs = oracle::cost_matrix(target, source.features(), p)?;
    let plan = oracle::solve_discrete_ot(&costs, &a, &b)?;
    let k = tgt_labels.iter().max().map_or(0, |c| c + 1);
    let mut kept = vec![0.0; k];
    let mut total = vec![0.0; k];
    for (i, row) in plan.coupling().outer_iter().enumerate() {
        let c = tgt_labels[i];
        for (j, &mass) in row.iter().enumerate() {
            total[c] += mass;
            if src_labels[j] == c {
                kept[c] += mass;
            }
        }
    }
    let overall = kept.iter().sum::<f64>() / total.iter().sum::<f64>();
    let per_class = kept
        .iter()
        .zip(&total)
        .map(|(&k, &t)| (t > 0.0).then(|| k / t))
        .collect();
    Ok(LabelPreservation { per_class, overall })
}

/// Grid `0, 1/steps, 2/steps, …, 1`, each point computed as `k / steps`.
pub fn proportion_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightSweep {
    pub grid: Vec<f64>,
    pub costs: Vec<f64>,
    pub argmin_p: f64,
}

/// For each `p` in the grid, weights the target classes by `(p, 1 − p)` and
/// computes `W_1` to the uniform empirical source with the exact oracle.
pub fn reweight_sweep(source: &FeatureTable, target: &FeatureTable, p_grid: &[f64]) -> Result<ReweightSweep> {
    if p_grid.is_empty() {
        return Err(Error::invalid("empty proportion grid"));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("proportion {p} is outside [0, 1]")));
    }
    let binary = |t: &FeatureTable, name: &str| -> Result<Vec<usize>> {
        let labels = t
            .labels()
            .ok_or_else(|| Error::invalid(format!("{name} table has no labels")))?;
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::LabelOutOfRange {
                index,
                label: label as i64,
                num_classes: 2,
            });
        }
        Ok(labels.to_vec())
    };
    binary(source, "source")?;
    let labels = binary(target, "target")?;
    let n1 = labels.iter().filter(|&&l| l == 0).count();
    let n2 = labels.len() - n1;
    if n1 == 0 {
        return Err(Error::EmptyClass(0));
    }
    if n2 == 0 {
        return Err(Error::EmptyClass(1));
    }
    let costs_matrix = oracle::cost_matrix(target, source.features(), CostExponent::One)?;
    let b = vec![1.0 / source.n_samples() as f64; source.n_samples()];
    let costs = p_grid
        .par_iter()
        .map(|&p| {
            let a: Vec<f64> = labels
                .iter()
                .map(|&l| if l == 0 { p / n1 as f64 } else { (1.0 - p) / n2 as f64 })
                .collect();
            oracle::solve_discrete_ot(&costs_matrix, &a, &b).map(|plan| plan.cost())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = i;
        }
    }
    Ok(ReweightSweep {
        grid: p_grid.to_vec(),
        argmin_p: p_grid[best],
        costs,
    })
}

/// Regularization strengths swept by the ablation.
pub const ABLATION_EPSILONS: [f64; 7] = [1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 5e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub epsilon: f64,
    pub trace: Vec<TraceRecord>,
    pub final_weights: Vec<f64>,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub sharpness: Sharpness,
}

/// Solves once per `ε` from the same starting weights (`config_base.warm_start`,
/// or zeros) and collects the traces and final assignment statistics.
pub fn epsilon_ablation(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    config_base: &SolverConfig,
    eps_list: &[f64],
) -> Result<Vec<AblationRun>> {
    if eps_list.is_empty() {
        return Err(Error::invalid("empty epsilon list"));
    }
    let start = config_base
        .warm_start
        .clone()
        .unwrap_or_else(|| vec![0.0; prototypes.len()]);
    eps_list
        .par_iter()
        .map(|&epsilon| {
            let config = SolverConfig {
                epsilon,
                warm_start: Some(start.clone()),
                ..config_base.clone()
            };
            let state = sdot::solve(targets, prototypes, &config)?;
            let initial_residual = state
                .trace
                .first()
                .map_or_else(|| sdot::marginal_residual(targets, prototypes, &start, epsilon, config.exponent), |r| Ok(r.residual))?;
            let final_residual =
                sdot::marginal_residual(targets, prototypes, &state.weights, epsilon, config.exponent)?;
            let sharpness = assignment_sharpness(targets, prototypes, &state.weights, epsilon, config.exponent)?;
            let finite = state
                .trace
                .iter()
                .all(|r| r.residual.is_finite() && r.update_norm.is_finite() && r.objective.is_finite());
            if !finite {
                return Err(Error::Numeric {
                    step: state.step,
                    message: format!("non-finite trace entry at epsilon {epsilon}"),
                });
            }
            Ok(AblationRun {
                epsilon,
                final_weights: state.weights,
                trace: state.trace,
                initial_residual,
                final_residual,
                sharpness,
            })
        })
        .collect()
}

/// Two well-separated source disks and two partially overlapping target
/// disks on the horizontal axis, class 0 on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapScenario {
    pub source_offset: f64,
    pub source_radius: f64,
    pub target_offset: f64,
    pub target_radius: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for OverlapScenario {
    fn default() -> Self {
        OverlapScenario {
            source_offset: 4.0,
            source_radius: 0.5,
            target_offset: 0.64,
            target_radius: 1.0,
            per_class: 1000,
            seed: 0,
        }
    }
}

impl OverlapScenario {
    fn spec(&self, offset: f64, radius: f64, seed: u64) -> ClusterSpec {
        ClusterSpec {
            centers: vec![vec![-offset, 0.0], vec![offset, 0.0]],
            scales: vec![radius, radius],
            counts: vec![self.per_class, self.per_class],
            shape: ClusterShape::Disk,
            seed,
        }
    }

    pub fn source_spec(&self) -> ClusterSpec {
        self.spec(self.source_offset, self.source_radius, self.seed)
    }

    pub fn target_spec(&self) -> ClusterSpec {
        self.spec(self.target_offset, self.target_radius, self.seed.wrapping_add(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapOutcome {
    pub coverage: f64,
    pub full_accuracy: f64,
    pub retained_accuracy: f64,
    pub gap_before: f64,
    pub gap_after: f64,
    pub mean_score: f64,
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub target: Option<FeatureTable>,
    #[serde(skip)]
    pub report: Option<ScoreReport>,
}

/// Pseudo-labels the targets by their nearest source class mean, scores
/// them, and compares accuracy and g-gap before and after keeping only the
/// `coverage` fraction with the highest scores.
pub fn overlap_experiment(scenario: &OverlapScenario, config: &SolverConfig, coverage: f64) -> Result<OverlapOutcome> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let source = gen_clusters(&scenario.source_spec())?;
    let target = gen_clusters(&scenario.target_spec())?;
    let means = class_means_k(&source, 2)?;
    let truth = target.labels().expect("generated tables are labeled").to_vec();
    let pseudo: Vec<usize> = target
        .rows()
        .map(|x| sdot::hard_assign(x, &means, &[0.0, 0.0], config.exponent))
        .collect();
    let run = score::score_targets(means.points().clone(), &target, &pseudo, config)?;
    let correct: Vec<bool> = pseudo.iter().zip(&truth).map(|(p, t)| p == t).collect();
    let scores = &run.report.scores;
    let full_accuracy = selective_accuracy(&correct, scores, 1.0)?;
    let retained_accuracy = selective_accuracy(&correct, scores, coverage)?;
    let gap_before = run.scorer.g_gap(&target, &pseudo, 0, 1)?;
    let n = pseudo.len();
    let keep = ((coverage * n as f64).ceil() as usize).clamp(1, n);
    let mut kept = confidence_order(scores)[..keep].to_vec();
    kept.sort_unstable();
    let kept_table = target.select(&kept)?;
    let kept_pseudo: Vec<usize> = kept.iter().map(|&i| pseudo[i]).collect();
    let gap_after = run.scorer.g_gap(&kept_table, &kept_pseudo, 0, 1)?;
    Ok(OverlapOutcome {
        coverage,
        full_accuracy,
        retained_accuracy,
        gap_before,
        gap_after,
        mean_score: run.report.mean_score,
        weights: run.state.weights,
        target: Some(target),
        report: Some(run.report),
    })
}

/// Scatter of the first two coordinates, colored by `values`.
pub fn write_scatter_svg(table: &FeatureTable, values: &[f64], title: &str, w: impl Write) -> Result<()> {
    if values.len() != table.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: table.n_samples(),
            actual: values.len(),
        });
    }
    let coord = |row: ArrayView1<f64>, j: usize| if j < row.len() { row[j] } else { 0.0 };
    let points = table
        .features()
        .outer_iter()
        .map(|row| (coord(row, 0), coord(row, 1)))
        .collect();
    ScatterPlot {
        title: title.to_string(),
        points,
        values: values.to_vec(),
    }
    .write(w)
}
