use super::cloud::{LabeledPointCloud, Point3, NUM_CLASSES};
use super::spatial::KdTree;
use crate::{Error, Result};

/// Width of a grouped feature row: `[Δp (3), p (3), one-hot label (6)]`.
pub const GROUP_FEATURE_WIDTH: usize = 6 + NUM_CLASSES;

/// kNN groups around a set of centroids, expressed in centroid-aligned
/// frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedNeighborhood {
    pub centroids: Vec<Point3>,
    pub centroid_labels: Vec<u8>,
    pub k: usize,
    /// Row-major `n × k`; row `j` lists the neighbours of centroid `j` in
    /// ascending distance (ties by index).
    pub neighbor_indices: Vec<usize>,
    /// Row-major `n × k`, `neighbor − centroid`.
    pub offsets: Vec<Point3>,
    /// Row-major `n × k`, absolute neighbour coordinates.
    pub neighbor_points: Vec<Point3>,
    pub neighbor_labels: Vec<u8>,
}

impl GroupedNeighborhood {
    pub fn num_groups(&self) -> usize {
        self.centroids.len()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbor_indices[j * self.k..(j + 1) * self.k]
    }

    /// Raw neighbour rows `(x, y, z, label)`.
    pub fn raw_neighbor(&self, j: usize, i: usize) -> [f64; 4] {
        let r = j * self.k + i;
        let p = self.neighbor_points[r];
        [p[0], p[1], p[2], self.neighbor_labels[r] as f64]
    }

    /// Feature rows `[Δp / s, p / s, onehot(label)]` for every (group,
    /// neighbour) pair, row-major `(n·k) × GROUP_FEATURE_WIDTH`. `scale` maps
    /// millimetres to network units.
    pub fn features(&self, scale: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.offsets.len() * GROUP_FEATURE_WIDTH);
        for r in 0..self.offsets.len() {
            let d = self.offsets[r];
            let p = self.neighbor_points[r];
            out.extend_from_slice(&[d[0] / scale, d[1] / scale, d[2] / scale]);
            out.extend_from_slice(&[p[0] / scale, p[1] / scale, p[2] / scale]);
            let mut onehot = [0.0; NUM_CLASSES];
            onehot[self.neighbor_labels[r] as usize] = 1.0;
            out.extend_from_slice(&onehot);
        }
        out
    }
}

/// Exact kNN grouping of `cloud` around `centroids`.
pub fn knn_group(
    cloud: &LabeledPointCloud,
    centroids: &[Point3],
    centroid_labels: &[u8],
    k: usize,
) -> Result<GroupedNeighborhood> {
    let tree = KdTree::new(cloud.points());
    knn_group_with(&tree, cloud, centroids, centroid_labels, k)
}

/// As [`knn_group`] with a prebuilt index over `cloud`.
pub fn knn_group_with(
    tree: &KdTree,
    cloud: &LabeledPointCloud,
    centroids: &[Point3],
    centroid_labels: &[u8],
    k: usize,
) -> Result<GroupedNeighborhood> {
    if k == 0 || k > cloud.len() {
        return Err(Error::invalid(format!(
            "knn_group needs 1 <= k <= {}, got k = {k}",
            cloud.len()
        )));
    }
    if centroids.len() != centroid_labels.len() {
        return Err(Error::invalid("centroid label count mismatch"));
    }
    let n = centroids.len();
    let mut neighbor_indices = Vec::with_capacity(n * k);
    let mut offsets = Vec::with_capacity(n * k);
    let mut neighbor_points = Vec::with_capacity(n * k);
    let mut neighbor_labels = Vec::with_capacity(n * k);
    for c in centroids {
        for (i, _) in tree.knn(c, k) {
            let p = cloud.point(i);
            neighbor_indices.push(i);
            offsets.push([p[0] - c[0], p[1] - c[1], p[2] - c[2]]);
            neighbor_points.push(p);
            neighbor_labels.push(cloud.label(i));
        }
    }
    Ok(GroupedNeighborhood {
        centroids: centroids.to_vec(),
        centroid_labels: centroid_labels.to_vec(),
        k,
        neighbor_indices,
        offsets,
        neighbor_points,
        neighbor_labels,
    })
}
