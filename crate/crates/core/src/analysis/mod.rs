//! Correlations, agreement, perplexity alignment, metric vectors and
//! clustering over evaluation trajectories.

mod cluster;
mod export;
mod kappa;
mod metric;
mod stats;
mod trajectory;

pub use cluster::{cluster_curves, cluster_trajectories, interpolate, kmeans, min_max, ClusterAssignment, Curve, KMEANS_RESTARTS};
pub use export::*;
pub use kappa::fleiss_kappa;
pub use metric::{metric_vector, Metric};
pub use stats::{average_ranks, correlate, mean_pairwise_correlation, CorrelationMethod, CorrelationReport};
pub use trajectory::{
    align_by_perplexity, correlation_curve, join_uids, ChallengeLabel, CorrelationCurve, CurvePoint, ReferenceSource,
    ReferenceVector, TrajectoryMatrix,
};
