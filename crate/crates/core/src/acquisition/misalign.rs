use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::plan::{add, dot, scaled, sub, Slice, SliceSet};
use crate::{Error, Result};

/// Severity of per-slice rigid misalignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MisalignmentLevel {
    None,
    Mild,
    Medium,
    Strong,
    Severe,
}

impl MisalignmentLevel {
    pub const ALL: [MisalignmentLevel; 5] = [
        MisalignmentLevel::None,
        MisalignmentLevel::Mild,
        MisalignmentLevel::Medium,
        MisalignmentLevel::Strong,
        MisalignmentLevel::Severe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MisalignmentLevel::None => "none",
            MisalignmentLevel::Mild => "mild",
            MisalignmentLevel::Medium => "medium",
            MisalignmentLevel::Strong => "strong",
            MisalignmentLevel::Severe => "severe",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// In-plane translation σ (mm) and rotation σ (degrees).
    pub fn sigmas(self) -> MisalignmentSigmas {
        let s = self.index() as f64;
        MisalignmentSigmas {
            trans_mm: s,
            rot_deg: s,
        }
    }
}

impl fmt::Display for MisalignmentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MisalignmentLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MisalignmentLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown misalignment level {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MisalignmentSigmas {
    pub trans_mm: f64,
    pub rot_deg: f64,
}

impl MisalignmentSigmas {
    pub fn is_zero(&self) -> bool {
        self.trans_mm == 0.0 && self.rot_deg == 0.0
    }
}

/// Rigid motion within a slice plane: translation along the plane's `(u, v)`
/// frame and rotation about the normal through the plane origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InPlaneMotion {
    pub du_mm: f64,
    pub dv_mm: f64,
    pub angle_rad: f64,
}

impl InPlaneMotion {
    pub fn apply(&self, slice: &Slice) -> Slice {
        let plane = slice.plane;
        let t = add(scaled(plane.u, self.du_mm), scaled(plane.v, self.dv_mm));
        let cloud = if self.angle_rad == 0.0 {
            slice.cloud.map_points(|p| add(p, t))
        } else {
            let (s, c) = self.angle_rad.sin_cos();
            slice.cloud.map_points(|p| {
                let d = sub(p, plane.origin);
                let (a, b, n) = (dot(d, plane.u), dot(d, plane.v), dot(d, plane.normal));
                let (ra, rb) = (c * a - s * b, s * a + c * b);
                let local = add(add(scaled(plane.u, ra), scaled(plane.v, rb)), scaled(plane.normal, n));
                add(add(plane.origin, local), t)
            })
        };
        Slice {
            kind: slice.kind,
            plane: slice.plane,
            cloud,
        }
    }
}

/// Independent in-plane rigid perturbation of every slice.
///
/// Three standard normal draws are consumed per slice regardless of the
/// sigmas, so the same RNG stream yields coupled perturbations across
/// severities. Zero sigmas return the input unchanged.
pub fn misalign<R: Rng + ?Sized>(slices: &SliceSet, sigmas: MisalignmentSigmas, rng: &mut R) -> Result<SliceSet> {
    if !(sigmas.trans_mm >= 0.0 && sigmas.rot_deg >= 0.0) {
        return Err(Error::invalid("misalignment sigmas must be >= 0"));
    }
    let motions: Vec<InPlaneMotion> = slices
        .slices
        .iter()
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            InPlaneMotion {
                du_mm: sigmas.trans_mm * z[0],
                dv_mm: sigmas.trans_mm * z[1],
                angle_rad: (sigmas.rot_deg * z[2]).to_radians(),
            }
        })
        .collect();
    if sigmas.is_zero() {
        return Ok(slices.clone());
    }
    Ok(SliceSet {
        slices: slices.slices.iter().zip(&motions).map(|(s, m)| m.apply(s)).collect(),
        empty_warning: slices.empty_warning,
    })
}
