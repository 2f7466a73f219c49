//! Losses and evaluation metrics: semantic-aware Chamfer distance (with a
//! graph node for training), CD/HD and a surface-distance proxy, chamber
//! volumes and ejection fraction, and serializable reports.

mod distances;
mod loss;
mod report;
mod sacd;
mod volume;

pub use distances::{cd, directed_distances, hd, ssd, SSD_MAX_POINTS};
pub use loss::{total_loss, StageLosses, StageMask, STAGE_NAMES};
pub use report::{Distances, MetricReport, CHAMBERS, VOLUME_METHOD};
pub use sacd::{sa_cd, sa_cd_grad, sa_cd_node, SaCd, SaCdGrad};
pub use volume::{chamber_volume, ejection_fraction, hull_volume_mm3, MM3_PER_ML};
