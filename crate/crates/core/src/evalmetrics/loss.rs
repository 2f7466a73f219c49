use std::fmt;
use std::str::FromStr;

use super::sacd::sa_cd;
use crate::geokernels::LabeledPointCloud;
use crate::{Error, Result};

pub const STAGE_NAMES: [&str; 3] = ["coarse", "mid", "fine"];

/// Which prediction stages contribute to the training loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageMask(pub [bool; 3]);

impl StageMask {
    pub const ALL: StageMask = StageMask([true; 3]);

    /// The three-term mask plus each single-stage variant.
    pub fn ablation_rows() -> [StageMask; 4] {
        [
            StageMask::ALL,
            StageMask([true, false, false]),
            StageMask([false, true, false]),
            StageMask([false, false, true]),
        ]
    }

    pub fn weights(&self) -> [f64; 3] {
        self.0.map(|on| if on { 1.0 } else { 0.0 })
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|x| *x)
    }
}

impl Default for StageMask {
    fn default() -> Self {
        StageMask::ALL
    }
}

impl fmt::Display for StageMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on: Vec<&str> = STAGE_NAMES.iter().zip(self.0).filter(|(_, b)| *b).map(|(n, _)| *n).collect();
        f.write_str(&on.join("+"))
    }
}

impl FromStr for StageMask {
    type Err = Error;

    /// `coarse+mid+fine`, any non-empty subset, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(StageMask::ALL);
        }
        let mut mask = [false; 3];
        for part in s.split('+') {
            let i = STAGE_NAMES
                .iter()
                .position(|n| *n == part.trim())
                .ok_or_else(|| Error::invalid(format!("unknown stage {part:?}")))?;
            mask[i] = true;
        }
        Ok(StageMask(mask))
    }
}

/// Per-stage SA-CD and their masked sum.
#[derive(Clone, Debug, PartialEq)]
pub struct StageLosses {
    pub per_stage: [f64; 3],
    pub total: f64,
}

pub fn total_loss(stages: [&LabeledPointCloud; 3], gt: &LabeledPointCloud, mask: StageMask) -> Result<StageLosses> {
    if mask.is_empty() {
        return Err(Error::invalid("stage mask selects no stage"));
    }
    let mut per_stage = [0.0; 3];
    for (s, cloud) in stages.iter().enumerate() {
        per_stage[s] = sa_cd(cloud, gt)?.value;
    }
    let total = per_stage.iter().zip(mask.weights()).map(|(l, w)| l * w).sum();
    Ok(StageLosses { per_stage, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_parse_and_sum() {
        assert_eq!("all".parse::<StageMask>().unwrap(), StageMask::ALL);
        assert_eq!("mid+fine".parse::<StageMask>().unwrap(), StageMask([false, true, true]));
        assert!("fine+bogus".parse::<StageMask>().is_err());
        assert_eq!(StageMask::ALL.to_string(), "coarse+mid+fine");

        let g = LabeledPointCloud::uniform_label(vec![[0.0; 3]], 0).unwrap();
        let at = |x: f64| LabeledPointCloud::uniform_label(vec![[x, 0.0, 0.0]], 0).unwrap();
        let (a, b, c) = (at(1.0), at(2.0), at(3.0));
        assert_eq!(total_loss([&a, &b, &c], &g, StageMask::ALL).unwrap().total, 6.0);
        assert_eq!(total_loss([&a, &b, &c], &g, StageMask([false, true, false])).unwrap().total, 2.0);
        assert_eq!(total_loss([&g, &g, &g], &g, StageMask::ALL).unwrap().total, 0.0);
    }
}
