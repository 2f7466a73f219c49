use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::distances::{cd, hd, ssd};
use super::sacd::sa_cd;
use super::volume::chamber_volume;
use crate::geokernels::{LabeledPointCloud, CLASS_NAMES, LA, LV_ENDO, RA, RV_ENDO};
use crate::Result;

/// Chambers whose blood-pool volume is reported, with their labels.
pub const CHAMBERS: [(&str, u8); 4] = [("lvv", LV_ENDO), ("rvv", RV_ENDO), ("lav", LA), ("rav", RA)];

pub const VOLUME_METHOD: &str = "convex hull of labeled points; overestimates concave chambers";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub cd_mm: f64,
    pub hd_mm: f64,
    pub ssd_mm: f64,
}

/// Metrics for one predicted cloud against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd_mm: f64,
    pub hd_mm: f64,
    pub ssd_mm: f64,
    pub sa_cd_mm: f64,
    pub per_class: BTreeMap<String, Distances>,
    /// Predicted chamber volumes; chambers whose hull failed are absent.
    pub volumes_ml: BTreeMap<String, f64>,
    /// Classes present on only one side.
    pub degenerate_classes: Vec<String>,
    pub volume_method: String,
}

impl MetricReport {
    pub fn compute(pred: &LabeledPointCloud, gt: &LabeledPointCloud) -> Result<Self> {
        let mut per_class = BTreeMap::new();
        let mut degenerate_classes = Vec::new();
        let (pc, gc) = (pred.class_counts(), gt.class_counts());
        for (c, name) in CLASS_NAMES.iter().enumerate() {
            match (pc[c] > 0, gc[c] > 0) {
                (true, true) => {
                    let k = Some(c as u8);
                    per_class.insert(
                        name.to_string(),
                        Distances {
                            cd_mm: cd(pred, gt, k)?,
                            hd_mm: hd(pred, gt, k)?,
                            ssd_mm: ssd(pred, gt, k)?,
                        },
                    );
                }
                (false, false) => {}
                _ => degenerate_classes.push(name.to_string()),
            }
        }
        let volumes_ml = CHAMBERS
            .iter()
            .filter_map(|(name, c)| chamber_volume(pred, *c).ok().map(|v| (name.to_string(), v)))
            .collect();
        Ok(MetricReport {
            cd_mm: cd(pred, gt, None)?,
            hd_mm: hd(pred, gt, None)?,
            ssd_mm: ssd(pred, gt, None)?,
            sa_cd_mm: sa_cd(pred, gt)?.value,
            per_class,
            volumes_ml,
            degenerate_classes,
            volume_method: VOLUME_METHOD.to_string(),
        })
    }

    /// Mean of the scalar fields over several reports; per-class entries are
    /// averaged over the reports that contain them.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let n = reports.len() as f64;
        let first = reports.first()?;
        let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut per_class: BTreeMap<String, (Distances, f64)> = BTreeMap::new();
        let mut volumes: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        let mut degenerate = Vec::new();
        for r in reports {
            for (k, d) in &r.per_class {
                let e = per_class.entry(k.clone()).or_insert((
                    Distances {
                        cd_mm: 0.0,
                        hd_mm: 0.0,
                        ssd_mm: 0.0,
                    },
                    0.0,
                ));
                e.0.cd_mm += d.cd_mm;
                e.0.hd_mm += d.hd_mm;
                e.0.ssd_mm += d.ssd_mm;
                e.1 += 1.0;
            }
            for (k, v) in &r.volumes_ml {
                let e = volumes.entry(k.clone()).or_insert((0.0, 0.0));
                e.0 += v;
                e.1 += 1.0;
            }
            for c in &r.degenerate_classes {
                if !degenerate.contains(c) {
                    degenerate.push(c.clone());
                }
            }
        }
        Some(MetricReport {
            cd_mm: avg(&|r| r.cd_mm),
            hd_mm: avg(&|r| r.hd_mm),
            ssd_mm: avg(&|r| r.ssd_mm),
            sa_cd_mm: avg(&|r| r.sa_cd_mm),
            per_class: per_class
                .into_iter()
                .map(|(k, (d, c))| {
                    (
                        k,
                        Distances {
                            cd_mm: d.cd_mm / c,
                            hd_mm: d.hd_mm / c,
                            ssd_mm: d.ssd_mm / c,
                        },
                    )
                })
                .collect(),
            volumes_ml: volumes.into_iter().map(|(k, (s, c))| (k, s / c)).collect(),
            degenerate_classes: degenerate,
            volume_method: first.volume_method.clone(),
        })
    }

    /// CSV with header `class,metric,value`: rows `all` (cd, hd, ssd, sa_cd),
    /// then every class in label order (cd, hd, ssd), then volumes under
    /// class `volume`. Values use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,metric,value\n");
        for (m, v) in [("cd_mm", self.cd_mm), ("hd_mm", self.hd_mm), ("ssd_mm", self.ssd_mm), ("sa_cd_mm", self.sa_cd_mm)] {
            let _ = writeln!(s, "all,{m},{v:?}");
        }
        for name in CLASS_NAMES {
            if let Some(d) = self.per_class.get(name) {
                for (m, v) in [("cd_mm", d.cd_mm), ("hd_mm", d.hd_mm), ("ssd_mm", d.ssd_mm)] {
                    let _ = writeln!(s, "{name},{m},{v:?}");
                }
            }
        }
        for (name, _) in CHAMBERS {
            if let Some(v) = self.volumes_ml.get(name) {
                let _ = writeln!(s, "volume,{name}_ml,{v:?}");
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_report_is_zero() {
        let pts: Vec<[f64; 3]> = (0..24)
            .map(|i| {
                let t = i as f64;
                [t.sin() * 10.0, t.cos() * 7.0, (i % 5) as f64]
            })
            .collect();
        let labels: Vec<u8> = (0..24).map(|i| (i % 6) as u8).collect();
        let g = LabeledPointCloud::new(pts, labels).unwrap();
        let r = MetricReport::compute(&g, &g).unwrap();
        assert_eq!((r.cd_mm, r.hd_mm, r.ssd_mm, r.sa_cd_mm), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.per_class.len(), 6);
        assert!(r.to_csv().lines().count() > 19);
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
