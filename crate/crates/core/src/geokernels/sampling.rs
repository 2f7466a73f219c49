use rand::Rng;
use rand_distr::StandardNormal;

use super::cloud::{centroid, dist2, LabeledPointCloud, Point3, NUM_CLASSES};
use crate::{Error, Result};

/// Index of the point nearest to the centroid (ties: lowest index).
pub fn nearest_to_centroid(points: &[Point3]) -> Option<usize> {
    let c = centroid(points)?;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Some(best)
}

/// Greedy farthest point sampling over raw coordinates.
///
/// Returns the selected indices and, for each pick after the first, its
/// distance to the previously selected set.
pub fn fps_points(points: &[Point3], n: usize, start: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let total = points.len();
    if n == 0 || n > total {
        return Err(Error::invalid(format!(
            "fps needs 1 <= n <= {total}, got n = {n}"
        )));
    }
    if start >= total {
        return Err(Error::invalid(format!("fps start index {start} out of range")));
    }
    let mut min_d = vec![f64::INFINITY; total];
    let mut taken = vec![false; total];
    let mut selected = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n.saturating_sub(1));
    let mut current = start;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == n {
            break;
        }
        let cp = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..total {
            if taken[i] {
                continue;
            }
            let d = dist2(&points[i], &cp);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        radii.push(best_d.sqrt());
        current = best;
    }
    Ok((selected, radii))
}

/// Farthest point sampling of `n` points starting from `start_index`.
pub fn fps(cloud: &LabeledPointCloud, n: usize, start_index: usize) -> Result<Vec<usize>> {
    fps_points(cloud.points(), n, start_index).map(|(s, _)| s)
}

/// Farthest point sampling with the deterministic start rule (the point
/// nearest the cloud centroid).
pub fn fps_from_centroid(cloud: &LabeledPointCloud, n: usize) -> Result<Vec<usize>> {
    let start = nearest_to_centroid(cloud.points()).ok_or_else(|| Error::invalid("fps on an empty cloud"))?;
    fps(cloud, n, start)
}

/// Per-class sampling quotas for class-balanced FPS.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    pub alpha: f64,
    /// Requested total.
    pub total: usize,
    /// `r_c = n_c^-α / Σ_j n_j^-α` over nonempty classes, 0 for empty ones.
    pub ratios: [f64; NUM_CLASSES],
    /// `⌊r_c · total⌋`.
    pub floor_quotas: [usize; NUM_CLASSES],
    /// Quotas after remainder distribution and clipping to class counts.
    pub quotas: [usize; NUM_CLASSES],
}

impl SamplingPlan {
    pub fn assigned(&self) -> usize {
        self.quotas.iter().sum()
    }
}

/// Splits `target` among `eligible` classes proportionally to `weights`:
/// floors first, then one extra point each to the largest fractional
/// remainders (ties to the lower class index).
fn largest_remainder(target: usize, weights: &[f64; NUM_CLASSES], eligible: &[bool; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let sum: f64 = (0..NUM_CLASSES).filter(|&c| eligible[c]).map(|c| weights[c]).sum();
    let mut out = [0usize; NUM_CLASSES];
    if sum <= 0.0 {
        return out;
    }
    let mut rema = Vec::new();
    let mut assigned = 0;
    for c in 0..NUM_CLASSES {
        if !eligible[c] {
            continue;
        }
        let exact = weights[c] / sum * target as f64;
        let fl = exact.floor() as usize;
        out[c] = fl;
        assigned += fl;
        rema.push((exact - fl as f64, c));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = target.saturating_sub(assigned);
    for &(_, c) in rema.iter().cycle() {
        if left == 0 {
            break;
        }
        out[c] += 1;
        left -= 1;
    }
    out
}

/// Distributes `target` points by `ratios` without exceeding `counts`;
/// classes that would overflow are pinned to their count and the excess is
/// re-split among the rest.
fn capped_allocation(target: usize, ratios: &[f64; NUM_CLASSES], counts: &[usize; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let mut pinned = [false; NUM_CLASSES];
    let mut quotas = [0usize; NUM_CLASSES];
    loop {
        let fixed: usize = (0..NUM_CLASSES).filter(|&c| pinned[c]).map(|c| counts[c]).sum();
        let eligible: [bool; NUM_CLASSES] = std::array::from_fn(|c| !pinned[c] && counts[c] > 0 && ratios[c] > 0.0);
        let free = largest_remainder(target.saturating_sub(fixed), ratios, &eligible);
        let mut overflow = false;
        for c in 0..NUM_CLASSES {
            if eligible[c] && free[c] > counts[c] {
                pinned[c] = true;
                overflow = true;
            }
        }
        if !overflow {
            for c in 0..NUM_CLASSES {
                quotas[c] = if pinned[c] { counts[c] } else { free[c] };
            }
            return quotas;
        }
    }
}

/// Class-balanced quotas `n_c* = ⌊r_c · N_s⌋` with `r_c ∝ n_c^-α`.
///
/// Leftover points from flooring go to the largest fractional remainders;
/// quotas never exceed the class count, so the assigned total is
/// `min(N_s, Σ n_c)`.
pub fn adaptive_quotas(class_counts: &[usize; NUM_CLASSES], alpha: f64, n_s: usize) -> Result<SamplingPlan> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let available: usize = class_counts.iter().sum();
    if available == 0 {
        return Err(Error::invalid("adaptive_quotas: every class is empty"));
    }
    let weights: [f64; NUM_CLASSES] = std::array::from_fn(|c| {
        if class_counts[c] > 0 {
            (class_counts[c] as f64).powf(-alpha)
        } else {
            0.0
        }
    });
    let norm: f64 = weights.iter().sum();
    let ratios: [f64; NUM_CLASSES] = std::array::from_fn(|c| weights[c] / norm);
    let floor_quotas: [usize; NUM_CLASSES] = std::array::from_fn(|c| (ratios[c] * n_s as f64).floor() as usize);
    let quotas = capped_allocation(n_s.min(available), &ratios, class_counts);
    Ok(SamplingPlan {
        alpha,
        total: n_s,
        ratios,
        floor_quotas,
        quotas,
    })
}

/// Per-class FPS under a sampling plan. Output indices are grouped by class in
/// ascending label order; each class starts from its point nearest to the
/// class centroid.
pub fn class_balanced_fps(cloud: &LabeledPointCloud, plan: &SamplingPlan) -> Result<Vec<usize>> {
    let counts = cloud.class_counts();
    let mut quotas = plan.quotas;
    if (0..NUM_CLASSES).any(|c| quotas[c] > counts[c]) {
        let target: usize = quotas.iter().sum::<usize>().min(cloud.len());
        quotas = capped_allocation(target, &plan.ratios, &counts);
    }
    let mut out = Vec::with_capacity(quotas.iter().sum());
    for c in 0..NUM_CLASSES {
        if quotas[c] == 0 {
            continue;
        }
        let members = cloud.class_indices(c as u8);
        let pts: Vec<Point3> = members.iter().map(|&i| cloud.point(i)).collect();
        let start = nearest_to_centroid(&pts).expect("nonempty class");
        let (picked, _) = fps_points(&pts, quotas[c], start)?;
        out.extend(picked.into_iter().map(|j| members[j]));
    }
    Ok(out)
}

/// Adds iid `N(0, σ²)` noise to every coordinate; labels are untouched.
pub fn jitter<R: Rng + ?Sized>(cloud: &LabeledPointCloud, sigma_mm: f64, rng: &mut R) -> Result<LabeledPointCloud> {
    if !(sigma_mm >= 0.0) {
        return Err(Error::invalid(format!("jitter sigma must be >= 0, got {sigma_mm}")));
    }
    if sigma_mm == 0.0 {
        return Ok(cloud.clone());
    }
    Ok(cloud.map_points(|p| {
        let n: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        [p[0] + sigma_mm * n[0], p[1] + sigma_mm * n[1], p[2] + sigma_mm * n[2]]
    }))
}
