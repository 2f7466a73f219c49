use crate::geokernels::spatial::KdTree;
use crate::geokernels::{fps_from_centroid, LabeledPointCloud, Point3};
use crate::{Error, Result};

/// Upper bound on points per side before the surface-distance proxy
/// equalizes densities.
pub const SSD_MAX_POINTS: usize = 4096;

fn side(cloud: &LabeledPointCloud, class: Option<u8>, which: &str) -> Result<Vec<Point3>> {
    let pts = match class {
        Some(c) => cloud.class_points(c),
        None => cloud.points().to_vec(),
    };
    if pts.is_empty() {
        return Err(match class {
            Some(c) => Error::EmptyClass { class: c },
            None => Error::invalid(format!("{which} cloud is empty")),
        });
    }
    Ok(pts)
}

/// Nearest-neighbour distances from every point of `from` into `to`.
pub fn directed_distances(from: &[Point3], to: &[Point3]) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.iter()
        .map(|q| tree.nearest(q).expect("non-empty target").1.sqrt())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn symmetric_mean(p: &[Point3], g: &[Point3]) -> f64 {
    0.5 * (mean(&directed_distances(p, g)) + mean(&directed_distances(g, p)))
}

/// Symmetric mean nearest-neighbour L2 distance (mm).
pub fn cd(p: &LabeledPointCloud, g: &LabeledPointCloud, class: Option<u8>) -> Result<f64> {
    Ok(symmetric_mean(&side(p, class, "predicted")?, &side(g, class, "reference")?))
}

/// Hausdorff distance (mm).
pub fn hd(p: &LabeledPointCloud, g: &LabeledPointCloud, class: Option<u8>) -> Result<f64> {
    let (p, g) = (side(p, class, "predicted")?, side(g, class, "reference")?);
    Ok(max(&directed_distances(&p, &g)).max(max(&directed_distances(&g, &p))))
}

/// Surface-distance proxy: both sides are reduced by farthest point sampling
/// to a common size `min(|P|, |G|, SSD_MAX_POINTS)`, which evens out point
/// density, then the symmetric mean nearest distance is taken.
pub fn ssd(p: &LabeledPointCloud, g: &LabeledPointCloud, class: Option<u8>) -> Result<f64> {
    let (p, g) = (side(p, class, "predicted")?, side(g, class, "reference")?);
    let n = p.len().min(g.len()).min(SSD_MAX_POINTS);
    let reduce = |pts: Vec<Point3>| -> Result<Vec<Point3>> {
        if pts.len() == n {
            return Ok(pts);
        }
        let cloud = LabeledPointCloud::uniform_label(pts, 0)?;
        Ok(fps_from_centroid(&cloud, n)?.into_iter().map(|i| cloud.point(i)).collect())
    };
    Ok(symmetric_mean(&reduce(p)?, &reduce(g)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let p = LabeledPointCloud::uniform_label(vec![[0.0; 3]], 0).unwrap();
        let g = LabeledPointCloud::uniform_label(vec![[1.0, 0.0, 0.0]], 0).unwrap();
        assert_eq!(cd(&p, &g, None).unwrap(), 1.0);
        assert_eq!(hd(&p, &g, None).unwrap(), 1.0);
        assert_eq!(ssd(&p, &g, None).unwrap(), 1.0);
        assert!(matches!(cd(&p, &g, Some(3)), Err(Error::EmptyClass { class: 3 })));
    }
}
