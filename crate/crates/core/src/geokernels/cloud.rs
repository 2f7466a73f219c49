use crate::{Error, Result};

/// Number of cardiac substructure classes.
pub const NUM_CLASSES: usize = 6;

/// Class names in label order.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["lv_endo", "lv_epi", "rv_endo", "rv_epi", "la", "ra"];

pub const LV_ENDO: u8 = 0;
pub const LV_EPI: u8 = 1;
pub const RV_ENDO: u8 = 2;
pub const RV_EPI: u8 = 3;
pub const LA: u8 = 4;
pub const RA: u8 = 5;

pub type Point3 = [f64; 3];

/// Points in millimetres, each tagged with a substructure label.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabeledPointCloud {
    points: Vec<Point3>,
    labels: Vec<u8>,
    provenance: Option<Vec<u32>>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3>, labels: Vec<u8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::invalid(format!("label {bad} outside 0..{NUM_CLASSES}")));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(LabeledPointCloud {
            points,
            labels,
            provenance: None,
        })
    }

    /// Single-class convenience constructor.
    pub fn uniform_label(points: Vec<Point3>, label: u8) -> Result<Self> {
        let labels = vec![label; points.len()];
        Self::new(points, labels)
    }

    pub fn with_provenance(mut self, provenance: Vec<u32>) -> Result<Self> {
        if provenance.len() != self.points.len() {
            return Err(Error::invalid("provenance length differs from point count"));
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn provenance(&self) -> Option<&[u32]> {
        self.provenance.as_deref()
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn classes_present(&self) -> Vec<u8> {
        let counts = self.class_counts();
        (0..NUM_CLASSES as u8).filter(|&c| counts[c as usize] > 0).collect()
    }

    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_points(&self, class: u8) -> Vec<Point3> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == class)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Points and labels at `indices`, in that order. Provenance records the
    /// source index.
    pub fn select(&self, indices: &[usize]) -> Self {
        LabeledPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: Some(indices.iter().map(|&i| i as u32).collect()),
        }
    }

    /// Restriction to one class (or the whole cloud when `class` is `None`).
    pub fn filtered(&self, class: Option<u8>) -> Self {
        match class {
            None => self.clone(),
            Some(c) => self.select(&self.class_indices(c)),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }

    pub fn map_points(&self, mut f: impl FnMut(Point3) -> Point3) -> Self {
        LabeledPointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledPointCloud {
            points,
            labels,
            provenance: None,
        }
    }

    /// Every point repeated `factor` times consecutively.
    pub fn replicate(&self, factor: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).flat_map(|i| std::iter::repeat(i).take(factor)).collect();
        let mut out = self.select(&idx);
        out.provenance = None;
        out
    }

    pub fn into_parts(self) -> (Vec<Point3>, Vec<u8>) {
        (self.points, self.labels)
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let n = points.len() as f64;
    Some([c[0] / n, c[1] / n, c[2] / n])
}

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point3, b: &Point3) -> f64 {
    dist2(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_labels_and_lengths() {
        assert!(LabeledPointCloud::new(vec![[0.0; 3]], vec![6]).is_err());
        assert!(LabeledPointCloud::new(vec![[0.0; 3]], vec![]).is_err());
        assert!(LabeledPointCloud::new(vec![[f64::NAN, 0.0, 0.0]], vec![0]).is_err());
        let c = LabeledPointCloud::new(vec![[0.0; 3], [1.0; 3]], vec![2, 5]).unwrap();
        assert_eq!(c.class_counts(), [0, 0, 1, 0, 0, 1]);
        assert_eq!(c.classes_present(), vec![2, 5]);
    }

    #[test]
    fn replicate_is_consecutive() {
        let c = LabeledPointCloud::new(vec![[0.0; 3], [1.0; 3]], vec![0, 1]).unwrap();
        let r = c.replicate(3);
        assert_eq!(r.labels(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(r.point(4), [1.0; 3]);
    }
}
