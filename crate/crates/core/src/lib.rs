//! Optimal-transport confidence scores for pseudo-labeled samples.
//!
//! The target features are matched to weighted class prototypes with an
//! entropic semi-discrete transport solver ([`sdot`]); the resulting dual
//! weights define per-sample scores ([`score`]) that can be checked against
//! an exact discrete solver ([`oracle`]) and evaluated as selective-prediction
//! confidences ([`evaluation`]).

pub mod baselines;
pub mod cost;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod oracle;
pub mod plot;
pub mod score;
pub mod sdot;
pub mod synthetic;

pub use cost::CostExponent;
pub use data::{class_means, class_proportions, ClassProportions, DiscreteMeasure, FeatureTable};
pub use error::{Error, Location, Result};
pub use evaluation::{risk_coverage_aurc, selective_accuracy, RiskCoverageCurve};
pub use io::{load_features, save_features, Format};
pub use oracle::{empirical_wasserstein, solve_discrete_ot, TransportPlan};
pub use score::{
    misclassification_bound, normalize_and_reweight, BoundReport, ClassPrototypes, OtScorer, PostCheckResult,
    ScoreReport,
};
pub use sdot::{solve, DualState, SolverConfig, StepSchedule, TraceRecord};
pub use synthetic::{gen_clusters, ClusterShape, ClusterSpec};
