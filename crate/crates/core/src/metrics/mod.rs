//! Overlap rates and Hausdorff distances for label maps.

mod confusion;
mod hausdorff;
mod report;

pub use confusion::{confusion, ClassCounts, ConfusionCounts, Rates};
pub use hausdorff::{hausdorff, percentile, squared_distance_transform};
pub use report::{
    evaluate_dataset, evaluate_with, image_metrics, ClassMetrics, ImageMetrics, MetricOptions, MetricReport, Summary,
};
