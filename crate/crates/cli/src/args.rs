use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use otconf::{CostExponent, SolverConfig, StepSchedule};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "otconf", version, about = "Optimal-transport confidence scores for pseudo-labeled samples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Solve the entropic semi-discrete dual; emits weights and a trace.
    Solve(SolveArgs),
    /// Score pseudo-labeled targets against class prototypes.
    Score(ScoreArgs),
    /// Check label preservation of a binary problem from its dual weights.
    Postcheck(PostcheckArgs),
    /// Reference confidence scores (maxprob, entropy, cossim).
    Baseline(BaselineArgs),
    /// Risk-coverage curve, AURC and selective accuracy.
    Eval(EvalArgs),
    /// Min-max normalized scores and sample weights.
    Reweight(ReweightArgs),
    /// Synthetic cluster generators and experiments.
    Synth(SynthArgs),
    /// Regularization and reweighting sweeps.
    Sweep(SweepArgs),
    /// Misclassification bound for a two-prototype decision surface.
    Bound(BoundArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Score(_) => "score",
            Command::Postcheck(_) => "postcheck",
            Command::Baseline(_) => "baseline",
            Command::Eval(_) => "eval",
            Command::Reweight(_) => "reweight",
            Command::Synth(_) => "synth",
            Command::Sweep(_) => "sweep",
            Command::Bound(_) => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    InverseSqrt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Entropic regularization strength.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Base step size.
    #[arg(long = "lr", default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = Schedule::Constant)]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Mini-batch size; the full target set when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Cost exponent (1 or 2).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub p: u8,
    /// Required whenever batches are sampled.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop once the marginal residual is below this value.
    #[arg(long)]
    pub early_stop: Option<f64>,
    /// Initial dual weights, one per line.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
}

impl SolverArgs {
    pub fn exponent(&self) -> CostExponent {
        if self.p == 2 {
            CostExponent::Two
        } else {
            CostExponent::One
        }
    }

    /// Config without warm start; the caller loads that file.
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
            schedule: match self.schedule {
                Schedule::Constant => StepSchedule::Constant,
                Schedule::InverseSqrt => StepSchedule::InverseSqrt,
            },
            max_iter: self.max_iter,
            batch_size: self.batch_size,
            exponent: self.exponent(),
            seed: self.seed.unwrap_or(0),
            warm_start: None,
            early_stop: self.early_stop,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Target feature table (CSV or OTSF).
    #[arg(long)]
    pub target: PathBuf,
    /// Prototype locations, one per row.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Prototype masses, one per line; uniform when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output dual weights (CSV column).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Optional SVG plot of the trace.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Class means (one row per class) or a labeled source table.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Pseudo-labels, one per target row.
    #[arg(long)]
    pub pseudo: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-sample CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Optional SVG scatter of 2-D targets colored by score.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PostcheckArgs {
    #[arg(long)]
    pub class1: PathBuf,
    #[arg(long)]
    pub class2: PathBuf,
    #[arg(long)]
    pub proto1: PathBuf,
    #[arg(long)]
    pub proto2: PathBuf,
    /// Prototype masses of class 1; uniform when omitted.
    #[arg(long)]
    pub proto1_weights: Option<PathBuf>,
    #[arg(long)]
    pub proto2_weights: Option<PathBuf>,
    /// Joint dual weights, class-1 prototypes first. Solved when omitted.
    #[arg(long, conflicts_with_all = ["m", "l"])]
    pub weights: Option<PathBuf>,
    /// Class-1 dual weights for the componentwise check.
    #[arg(long, requires = "l")]
    pub m: Option<PathBuf>,
    /// Class-2 dual weights for the componentwise check.
    #[arg(long, requires = "m")]
    pub l: Option<PathBuf>,
    /// Reject componentwise duals whose marginal residual exceeds this.
    #[arg(long, requires = "m")]
    pub residual_tol: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output result (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Maxprob,
    Entropy,
    Cossim,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Class probabilities, one row per sample (maxprob, entropy).
    #[arg(long, required_if_eq_any = [("method", "maxprob"), ("method", "entropy")])]
    pub probs: Option<PathBuf>,
    /// Sample features (cossim).
    #[arg(long, required_if_eq("method", "cossim"))]
    pub features: Option<PathBuf>,
    /// Class centroids, one row per class (cossim).
    #[arg(long, required_if_eq("method", "cossim"))]
    pub centroids: Option<PathBuf>,
    /// Labels selecting each sample's centroid (cossim).
    #[arg(long, required_if_eq("method", "cossim"))]
    pub pseudo: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Confidences: a score report (JSON) or a CSV column.
    #[arg(long)]
    pub scores: PathBuf,
    /// Per-sample losses, one per line.
    #[arg(long)]
    pub losses: PathBuf,
    /// Output risk-coverage curve (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Also report accuracy (zero loss) on this top fraction.
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReweightArgs {
    /// Score report (JSON) or a CSV column of scores.
    #[arg(long)]
    pub scores: PathBuf,
    /// Companion confidences in [0, 1] multiplied into the weights.
    #[arg(long)]
    pub companion: Option<PathBuf>,
    /// Output CSV with `normalized,weight` columns.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Sample a labeled table from a cluster spec (JSON).
    Clusters {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlapping-clusters filtering experiment.
    /// The cluster seed is `--seed` (required); the target uses seed + 1.
    Overlap {
        #[arg(long, default_value_t = 0.7)]
        coverage: f64,
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
        #[arg(long, default_value_t = 4.0)]
        source_offset: f64,
        #[arg(long, default_value_t = 0.5)]
        source_radius: f64,
        #[arg(long, default_value_t = 0.64)]
        target_offset: f64,
        #[arg(long, default_value_t = 1.0)]
        target_radius: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Outcome summary (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Scored targets as CSV (`x...,score,pseudo`).
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Separation condition and exact-plan label preservation for two specs.
    Separation {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Overrides both spec seeds (the target uses seed + 1).
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        p: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(subcommand)]
    pub kind: SweepKind,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Solve once per regularization strength from a shared start.
    Epsilon {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        prototypes: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Comma-separated strengths; the ablation list when omitted.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-strength summaries and traces (JSON).
        #[arg(long)]
        out: PathBuf,
        /// SVG of the marginal residual against the step.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Exact W1 between the source and the class-reweighted target.
    Reweight {
        /// Labeled source table.
        #[arg(long)]
        source: PathBuf,
        /// Labeled two-class target table.
        #[arg(long)]
        target: PathBuf,
        /// Grid resolution: proportions k / steps.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Output CSV with `p,cost` columns.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    /// Prototype of class 1, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub f1: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub f2: Vec<f64>,
    /// Mean of class 1; the prototype when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m1: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m2: Vec<f64>,
    /// Dual weight difference `w1 − w2`.
    #[arg(long, allow_hyphen_values = true)]
    pub w_star: f64,
    /// Score threshold.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub g: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}
