//! Scale-aligned depth metrics and similarity-aligned absolute pose error.

mod depth;
mod pose;

pub use depth::{align_depth_scale, depth_metrics, depth_metrics_with, DepthMetrics, ScaleAlignment};
pub use pose::{ape, ape_with, umeyama_align, Alignment, ApeMetrics, Similarity, Trajectory};

/// Mean, maximum and median of a non-empty sample.
pub(crate) fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    (mean, max, median)
}
