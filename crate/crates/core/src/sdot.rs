//! Entropic semi-discrete optimal transport between an empirical target
//! measure and weighted prototypes.
//!
//! The dual weights `w` define (smoothed) Laguerre cells. A target point `x`
//! belongs to cell `j` with probability
//!
//! ```text
//! χ_j(x) = exp((w_j − ‖x − z_j‖^p) / ε) / Σ_l exp((w_l − ‖x − z_l‖^p) / ε)
//! ```
//!
//! and the weights are moved by stochastic gradient ascent on the dual,
//! `w ← w − γ (mean_batch χ − a)`, until the cell masses match the prototype
//! weights `a`. Every exponential goes through a max-shifted log-sum-exp, so
//! `ε` down to `1e-8` is safe.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostExponent;
use crate::data::{DiscreteMeasure, FeatureTable};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Early stopping is checked every this many steps.
pub const CHECK_EVERY: usize = 50;

/// Rows per block in parallel reductions. Fixed so that the summation order,
/// and therefore every bit of the result, does not depend on the thread count.
const BLOCK_ROWS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `γ_t = γ`
    #[default]
    Constant,
    /// `γ_t = γ / sqrt(t + 1)`
    InverseSqrt,
}

impl StepSchedule {
    pub fn rate(self, base: f64, step: usize) -> f64 {
        match self {
            StepSchedule::Constant => base,
            StepSchedule::InverseSqrt => base / ((step + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub learning_rate: f64,
    pub schedule: StepSchedule,
    pub max_iter: usize,
    /// `None` uses the whole target set every step.
    pub batch_size: Option<usize>,
    pub exponent: CostExponent,
    pub seed: u64,
    pub warm_start: Option<Vec<f64>>,
    /// Stop once the marginal residual falls below this value.
    pub early_stop: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: DEFAULT_EPSILON,
            learning_rate: 0.01,
            schedule: StepSchedule::Constant,
            max_iter: 2000,
            batch_size: None,
            exponent: CostExponent::One,
            seed: 0,
            warm_start: None,
            early_stop: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if let Some(w) = &self.warm_start {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("warm start contains non-finite weights"));
            }
        }
        if let Some(tol) = self.early_stop {
            if !(tol > 0.0) {
                return Err(Error::invalid("early-stop tolerance must be > 0"));
            }
        }
        Ok(())
    }

    /// Whether batches are drawn at random (and the seed matters).
    pub fn is_stochastic(&self, n_targets: usize) -> bool {
        self.batch_size.is_some_and(|b| b < n_targets)
    }
}

/// One row of the optimisation trace, evaluated at the weights *before* the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// `‖mean_i χ(x_i) − a‖₂` over the full target set.
    pub residual: f64,
    /// `‖w_{t+1} − w_t‖₂`
    pub update_norm: f64,
    /// Entropic dual objective.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub weights: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub step: usize,
}

impl DualState {
    pub fn new(weights: Vec<f64>) -> Self {
        DualState {
            weights,
            trace: Vec::new(),
            step: 0,
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self::new(vec![0.0; m])
    }

    /// Trace as CSV with columns `step,r_t,delta_t,L_t`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,r_t,delta_t,L_t")?;
        for r in &self.trace {
            writeln!(w, "{},{},{},{}", r.step, r.residual, r.update_norm, r.objective)?;
        }
        Ok(())
    }
}

fn check_dims(x_dim: usize, prototypes: &DiscreteMeasure, w: &[f64]) -> Result<()> {
    if x_dim != prototypes.dim() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.dim(),
            actual: x_dim,
        });
    }
    if w.len() != prototypes.len() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// Writes `χ(x)` into `out` and returns `log Σ_l exp((w_l − c_l) / ε)`.
fn assign_into(
    x: &[f64],
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
    out: &mut [f64],
) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (j, slot) in out.iter_mut().enumerate() {
        let s = (w[j] - p.cost(x, prototypes.point(j))) / epsilon;
        *slot = s;
        max = max.max(s);
    }
    let mut total = 0.0;
    for slot in out.iter_mut() {
        *slot = (*slot - max).exp();
        total += *slot;
    }
    for slot in out.iter_mut() {
        *slot /= total;
    }
    max + total.ln()
}

/// Soft membership of `x` in each Laguerre cell. Sums to one.
pub fn smoothed_assignment(
    x: &[f64],
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Result<Vec<f64>> {
    check_dims(x.len(), prototypes, w)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut out = vec![0.0; prototypes.len()];
    let lse = assign_into(x, prototypes, w, epsilon, p, &mut out);
    if !lse.is_finite() || out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            step: 0,
            message: "non-finite soft assignment".into(),
        });
    }
    Ok(out)
}

/// Index of the Laguerre cell containing `x`; ties go to the lowest index.
pub fn hard_assign(x: &[f64], prototypes: &DiscreteMeasure, w: &[f64], p: CostExponent) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for j in 0..prototypes.len() {
        let v = p.cost(x, prototypes.point(j)) - w[j];
        if v < best_val {
            best_val = v;
            best = j;
        }
    }
    best
}

/// Full-dataset diagnostics at a fixed `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `mean_i χ(x_i)`
    pub cell_mass: Vec<f64>,
    pub residual: f64,
    pub objective: f64,
}

struct BlockSums {
    mass: Vec<f64>,
    lse: f64,
}

fn block_sums(
    targets: &FeatureTable,
    rows: &[usize],
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Vec<BlockSums> {
    let m = prototypes.len();
    rows.par_chunks(BLOCK_ROWS)
        .map(|chunk| {
            let mut mass = vec![0.0; m];
            let mut chi = vec![0.0; m];
            let mut lse = 0.0;
            for &i in chunk {
                lse += assign_into(targets.row(i), prototypes, w, epsilon, p, &mut chi);
                for (acc, c) in mass.iter_mut().zip(&chi) {
                    *acc += c;
                }
            }
            BlockSums { mass, lse }
        })
        .collect()
}

fn reduce_blocks(blocks: Vec<BlockSums>, m: usize, count: usize) -> (Vec<f64>, f64) {
    let mut mass = vec![0.0; m];
    let mut lse = 0.0;
    for b in blocks {
        for (acc, v) in mass.iter_mut().zip(&b.mass) {
            *acc += v;
        }
        lse += b.lse;
    }
    let n = count as f64;
    mass.iter_mut().for_each(|v| *v /= n);
    (mass, lse / n)
}

pub fn diagnostics(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Result<Diagnostics> {
    check_dims(targets.dim(), prototypes, w)?;
    let rows: Vec<usize> = (0..targets.n_samples()).collect();
    let blocks = block_sums(targets, &rows, prototypes, w, epsilon, p);
    let (cell_mass, mean_lse) = reduce_blocks(blocks, prototypes.len(), rows.len());
    let a = prototypes.weights();
    let residual = cell_mass
        .iter()
        .zip(a)
        .map(|(c, a)| (c - a) * (c - a))
        .sum::<f64>()
        .sqrt();
    let linear: f64 = w.iter().zip(a).map(|(w, a)| w * a).sum();
    Ok(Diagnostics {
        cell_mass,
        residual,
        objective: linear - epsilon * mean_lse,
    })
}

/// `⟨w, a⟩ − ε · mean_i log Σ_j exp((w_j − ‖x_i − z_j‖^p) / ε)`
pub fn dual_objective(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Result<f64> {
    Ok(diagnostics(targets, prototypes, w, epsilon, p)?.objective)
}

/// `‖mean_i χ(x_i) − a‖₂` over the whole target set.
pub fn marginal_residual(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Result<f64> {
    Ok(diagnostics(targets, prototypes, w, epsilon, p)?.residual)
}

/// One ascent step on the rows `batch` of `targets`. Returns `‖w_{t+1} − w_t‖₂`.
pub fn sgd_step(
    state: &mut DualState,
    targets: &FeatureTable,
    batch: &[usize],
    prototypes: &DiscreteMeasure,
    config: &SolverConfig,
) -> Result<f64> {
    check_dims(targets.dim(), prototypes, &state.weights)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let blocks = block_sums(
        targets,
        batch,
        prototypes,
        &state.weights,
        config.epsilon,
        config.exponent,
    );
    let (mass, _) = reduce_blocks(blocks, prototypes.len(), batch.len());
    apply_update(state, &mass, prototypes.weights(), config)
}

fn apply_update(state: &mut DualState, mass: &[f64], a: &[f64], config: &SolverConfig) -> Result<f64> {
    let rate = config.schedule.rate(config.learning_rate, state.step);
    let mut norm_sq = 0.0;
    for ((w, m), a) in state.weights.iter_mut().zip(mass).zip(a) {
        let delta = -rate * (m - a);
        *w += delta;
        norm_sq += delta * delta;
    }
    state.step += 1;
    if state.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric {
            step: state.step,
            message: "dual weights diverged".into(),
        });
    }
    Ok(norm_sq.sqrt())
}

/// Epoch-wise shuffled batches without replacement.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl Batches {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut b = Batches {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
            size,
        };
        b.reshuffle_if_done();
        b
    }

    fn reshuffle_if_done(&mut self) {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
    }

    fn next_batch(&mut self) -> &[usize] {
        self.reshuffle_if_done();
        let end = (self.pos + self.size).min(self.order.len());
        let start = self.pos;
        self.pos = end;
        &self.order[start..end]
    }
}

/// Runs the dual ascent for `config.max_iter` steps (or until the early-stop
/// tolerance is met) and returns the final weights with a full trace.
pub fn solve(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    config: &SolverConfig,
) -> Result<DualState> {
    config.validate()?;
    let m = prototypes.len();
    let weights = match &config.warm_start {
        Some(w) if w.len() != m => {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => vec![0.0; m],
    };
    check_dims(targets.dim(), prototypes, &weights)?;
    let n = targets.n_samples();
    let mut state = DualState::new(weights);
    let mut batches = config
        .batch_size
        .filter(|&b| b < n)
        .map(|b| Batches::new(n, b, config.seed));

    for t in 0..config.max_iter {
        let diag = diagnostics(targets, prototypes, &state.weights, config.epsilon, config.exponent)?;
        if !(diag.residual.is_finite() && diag.objective.is_finite()) {
            return Err(Error::Numeric {
                step: t,
                message: "non-finite diagnostics".into(),
            });
        }
        if let Some(tol) = config.early_stop {
            if t % CHECK_EVERY == 0 && diag.residual < tol {
                break;
            }
        }
        // a full batch reuses the cell masses computed for the diagnostics
        let update_norm = match batches.as_mut() {
            Some(b) => {
                let batch = b.next_batch().to_vec();
                sgd_step(&mut state, targets, &batch, prototypes, config)?
            }
            None => apply_update(&mut state, &diag.cell_mass, prototypes.weights(), config)?,
        };
        state.trace.push(TraceRecord {
            step: t,
            residual: diag.residual,
            update_norm,
            objective: diag.objective,
        });
    }
    Ok(state)
}

/// Primal cost `(1/n) Σ_i ‖x_i − z_{hard(x_i)}‖^p` of the hard Laguerre assignment.
pub fn transport_cost(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    p: CostExponent,
) -> Result<f64> {
    check_dims(targets.dim(), prototypes, w)?;
    let total: f64 = targets
        .rows()
        .map(|x| p.cost(x, prototypes.point(hard_assign(x, prototypes, w, p))))
        .sum();
    Ok(total / targets.n_samples() as f64)
}

/// Hard cell index for every target row.
pub fn hard_assignments(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    p: CostExponent,
) -> Result<Vec<usize>> {
    check_dims(targets.dim(), prototypes, w)?;
    Ok(targets.rows().map(|x| hard_assign(x, prototypes, w, p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sharpness {
    /// Mean Shannon entropy of `χ`, in nats.
    pub mean_entropy: f64,
    /// Mean gap between the largest and second-largest entry of `χ`.
    pub mean_top_gap: f64,
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub(crate) fn entropy_nats(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub(crate) fn top_gap(probs: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    first - second
}

pub fn assignment_sharpness(
    targets: &FeatureTable,
    prototypes: &DiscreteMeasure,
    w: &[f64],
    epsilon: f64,
    p: CostExponent,
) -> Result<Sharpness> {
    check_dims(targets.dim(), prototypes, w)?;
    if prototypes.len() < 2 {
        return Err(Error::invalid("sharpness needs at least two prototypes"));
    }
    let m = prototypes.len();
    let per_row: Vec<(f64, f64)> = (0..targets.n_samples())
        .into_par_iter()
        .map(|i| {
            let mut chi = vec![0.0; m];
            assign_into(targets.row(i), prototypes, w, epsilon, p, &mut chi);
            (entropy_nats(&chi), top_gap(&chi))
        })
        .collect();
    let n = per_row.len() as f64;
    let (h, g) = per_row
        .iter()
        .fold((0.0, 0.0), |(h, g), (eh, eg)| (h + eh, g + eg));
    Ok(Sharpness {
        mean_entropy: h / n,
        mean_top_gap: g / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line(points: &[f64]) -> FeatureTable {
        FeatureTable::from_rows(&points.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_when_symmetric() {
        let protos = DiscreteMeasure::uniform(array![[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let chi = smoothed_assignment(&[0.0, 0.0], &protos, &[0.0; 4], 0.3, CostExponent::One).unwrap();
        for c in chi {
            assert!((c - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_value() {
        // distances 1 and 2
        let protos = DiscreteMeasure::uniform(array![[1.0], [2.0]]).unwrap();
        let chi = smoothed_assignment(&[0.0], &protos, &[0.0, 0.0], 1.0, CostExponent::One).unwrap();
        assert!((chi[0] - 0.7311).abs() < 5e-5);
        assert!((chi[1] - 0.2689).abs() < 5e-5);
    }

    #[test]
    fn zero_temperature_is_one_hot() {
        let protos = DiscreteMeasure::uniform(array![[0.0], [1.0], [3.0]]).unwrap();
        let w = [0.0, 0.9, 0.0];
        let chi = smoothed_assignment(&[0.5], &protos, &w, 1e-12, CostExponent::One).unwrap();
        let hard = hard_assign(&[0.5], &protos, &w, CostExponent::One);
        assert_eq!(hard, 1);
        assert_eq!(chi, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn hard_assign_ties_lowest_index() {
        let protos = DiscreteMeasure::uniform(array![[5.0], [-1.0], [9.0], [1.0]]).unwrap();
        assert_eq!(hard_assign(&[0.0], &protos, &[0.0; 4], CostExponent::One), 1);
        assert_eq!(hard_assign(&[4.0], &protos, &[0.0; 4], CostExponent::One), 0);
    }

    #[test]
    fn step_zero_gradient_leaves_weights() {
        let protos = DiscreteMeasure::uniform(array![[-1.0], [1.0]]).unwrap();
        let targets = line(&[0.0, 0.0]);
        let mut state = DualState::zeros(2);
        let cfg = SolverConfig {
            epsilon: 0.5,
            ..SolverConfig::default()
        };
        let delta = sgd_step(&mut state, &targets, &[0, 1], &protos, &cfg).unwrap();
        assert_eq!(delta, 0.0);
        assert_eq!(state.weights, vec![0.0, 0.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn step_arithmetic() {
        // one target sitting on prototype 0 with tiny ε: mean χ = (1, 0)
        let protos = DiscreteMeasure::new(array![[0.0], [10.0]], vec![0.5, 0.5]).unwrap();
        let targets = line(&[0.0]);
        let mut state = DualState::zeros(2);
        let cfg = SolverConfig {
            epsilon: 1e-3,
            learning_rate: 1.0,
            ..SolverConfig::default()
        };
        sgd_step(&mut state, &targets, &[0], &protos, &cfg).unwrap();
        assert!((state.weights[0] + 0.5).abs() < 1e-12);
        assert!((state.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_prototype_objective_is_mean_cost() {
        let protos = DiscreteMeasure::uniform(array![[1.0, 1.0]]).unwrap();
        let targets = FeatureTable::from_rows(&[vec![1.0, 4.0], vec![5.0, 4.0], vec![1.0, 1.0]]).unwrap();
        let expected = (3.0 + 5.0 + 0.0) / 3.0;
        for w in [-3.0, 0.0, 2.5] {
            let l = dual_objective(&targets, &protos, &[w], 0.01, CostExponent::One).unwrap();
            assert!((l - expected).abs() < 1e-9, "{l}");
            let r = marginal_residual(&targets, &protos, &[w], 0.01, CostExponent::One).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn objective_vanishes_on_zero_cost_matching() {
        let protos = DiscreteMeasure::uniform(array![[0.0], [5.0]]).unwrap();
        let targets = line(&[0.0, 5.0]);
        let l = dual_objective(&targets, &protos, &[0.0, 0.0], 1e-6, CostExponent::One).unwrap();
        assert!(l.abs() < 1e-9);
    }

    #[test]
    fn sharpness_of_uniform_and_fixed_split() {
        let protos = DiscreteMeasure::uniform(array![[-1.0], [1.0]]).unwrap();
        let targets = line(&[0.0, 0.0]);
        let s = assignment_sharpness(&targets, &protos, &[0.0, 0.0], 1.0, CostExponent::One).unwrap();
        assert!((s.mean_entropy - 2f64.ln()).abs() < 1e-12);
        assert!(s.mean_top_gap.abs() < 1e-12);

        // w_0 − w_1 = ε ln 3 gives χ = (0.75, 0.25) at the midpoint
        let eps = 0.2;
        let w = [eps * 3f64.ln(), 0.0];
        let s = assignment_sharpness(&targets, &protos, &w, eps, CostExponent::One).unwrap();
        assert!((s.mean_entropy - 0.5623).abs() < 5e-5);
        assert!((s.mean_top_gap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { epsilon: 0.0, ..Default::default() },
            SolverConfig { learning_rate: -1.0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
            SolverConfig { batch_size: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn warm_start_length_checked() {
        let protos = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let cfg = SolverConfig {
            warm_start: Some(vec![0.0; 3]),
            ..Default::default()
        };
        assert!(solve(&line(&[0.5]), &protos, &cfg).is_err());
    }
}
