//! Label-aware point set kernels shared by both encoder branches.

mod cloud;
mod grouping;
mod sampling;
pub mod spatial;

pub use cloud::{
    centroid, dist, dist2, LabeledPointCloud, Point3, CLASS_NAMES, LA, LV_ENDO, LV_EPI, NUM_CLASSES, RA,
    RV_ENDO, RV_EPI,
};
pub use grouping::{knn_group, knn_group_with, GroupedNeighborhood, GROUP_FEATURE_WIDTH};
pub use sampling::{
    adaptive_quotas, class_balanced_fps, fps, fps_from_centroid, fps_points, jitter, nearest_to_centroid,
    SamplingPlan,
};
pub use spatial::KdTree;
