use rand::Rng;
use rand_distr::StandardNormal;

use super::mesh::{LabeledMesh, Superellipsoid};
use crate::geokernels::{dist, LabeledPointCloud, Point3, LA, LV_ENDO, LV_EPI, NUM_CLASSES, RA, RV_ENDO, RV_EPI};
use crate::rng::{derived_rng, rng_from_seed};
use crate::{Error, Result};

pub const DEFAULT_NUM_MODES: usize = 50;
pub const DEFAULT_COEFF_CLIP: f64 = 3.0;
pub const DEFAULT_LANDMARK_SIGMA_MM: f64 = 1.0;

/// Geometry and mode parameters for the procedural model.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomParams {
    pub num_modes: usize,
    pub rings: usize,
    pub segments: usize,
    /// Substructure shells indexed by class label.
    pub shells: [Superellipsoid; NUM_CLASSES],
    /// RMS per-vertex displacement of the first mode (mm).
    pub leading_mode_rms_mm: f64,
    /// Mode `i` has RMS `leading · (i + 1)^-decay`.
    pub mode_decay: f64,
    /// Gaussian length scale of the smooth displacement fields (mm).
    pub field_length_scale_mm: f64,
    pub field_centers: usize,
}

impl Default for PhantomParams {
    fn default() -> Self {
        let shell = |center: Point3, semi_axes: [f64; 3], exponents: [f64; 2], bend: f64| Superellipsoid {
            center,
            semi_axes,
            exponents,
            bend,
        };
        PhantomParams {
            num_modes: DEFAULT_NUM_MODES,
            rings: 24,
            segments: 48,
            shells: [
                // LV endocardium: apex at the origin, base 84 mm up the z axis.
                shell([0.0, 0.0, 42.0], [26.0, 26.0, 42.0], [1.0, 1.0], 0.0),
                shell([0.0, 0.0, 40.0], [34.0, 34.0, 50.0], [1.0, 1.0], 0.0),
                shell([-53.0, 8.0, 40.0], [14.0, 30.0, 38.0], [1.0, 0.85], 0.08),
                shell([-53.0, 8.0, 40.0], [18.0, 34.0, 42.0], [1.0, 0.85], 0.08),
                shell([8.0, 10.0, 108.0], [20.0, 18.0, 20.0], [0.9, 1.0], 0.0),
                shell([-45.0, 10.0, 100.0], [20.0, 20.0, 22.0], [0.9, 1.0], 0.0),
            ],
            leading_mode_rms_mm: 2.5,
            mode_decay: 0.75,
            field_length_scale_mm: 30.0,
            field_centers: 6,
        }
    }
}

/// Mean surface plus orthonormal displacement modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeModel {
    pub mean: LabeledMesh,
    /// Each mode is a flattened `3V` displacement field of unit norm.
    pub modes: Vec<Vec<f64>>,
    pub mode_sigmas: Vec<f64>,
    pub apex_vertex: usize,
    pub mitral_vertex: usize,
}

/// One sampled heart.
#[derive(Clone, Debug, PartialEq)]
pub struct HeartInstance {
    pub surface: LabeledMesh,
    /// Mode coefficients in units of the mode sigmas.
    pub coefficients: Vec<f64>,
    pub apex: Point3,
    pub mitral_center: Point3,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the default six-substructure model.
pub fn build_default_model(seed: u64) -> ShapeModel {
    build_model(seed, &PhantomParams::default()).expect("default phantom parameters are valid")
}

pub fn build_model(seed: u64, params: &PhantomParams) -> Result<ShapeModel> {
    if params.rings < 3 || params.segments < 3 {
        return Err(Error::invalid("tessellation too coarse"));
    }
    let mut mean = LabeledMesh::empty();
    let mut lv_endo_offset = 0;
    for (label, shell) in params.shells.iter().enumerate() {
        let part = LabeledMesh::superellipsoid(shell, params.rings, params.segments, label as u8);
        let offset = mean.append(&part);
        if label as u8 == LV_ENDO {
            lv_endo_offset = offset;
        }
    }
    let per_shell = (params.rings - 1) * params.segments + 2;
    let apex_vertex = lv_endo_offset;
    let mitral_vertex = lv_endo_offset + per_shell - 1;

    let nv = mean.vertices.len();
    let dim = 3 * nv;
    if params.num_modes > dim {
        return Err(Error::invalid("more modes than degrees of freedom"));
    }
    let mut rng = derived_rng(seed, 0x5353_4D);
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(params.num_modes);
    let inv_two_s2 = 1.0 / (2.0 * params.field_length_scale_mm.powi(2));
    while modes.len() < params.num_modes {
        let centers: Vec<(Point3, [f64; 3])> = (0..params.field_centers)
            .map(|_| {
                let v = mean.vertices[rng.gen_range(0..nv)];
                let w: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                (v, w)
            })
            .collect();
        let mut field = vec![0.0; dim];
        for (i, p) in mean.vertices.iter().enumerate() {
            for (c, w) in &centers {
                let k = (-dist(p, c).powi(2) * inv_two_s2).exp();
                for a in 0..3 {
                    field[3 * i + a] += k * w[a];
                }
            }
        }
        // Modified Gram-Schmidt, applied twice for numerical orthogonality.
        for _ in 0..2 {
            for m in &modes {
                let proj = dot(&field, m);
                for (f, v) in field.iter_mut().zip(m) {
                    *f -= proj * v;
                }
            }
        }
        let norm = dot(&field, &field).sqrt();
        if norm < 1e-6 {
            continue;
        }
        for f in &mut field {
            *f /= norm;
        }
        modes.push(field);
    }
    let root_v = (nv as f64).sqrt();
    let mode_sigmas = (0..params.num_modes)
        .map(|i| params.leading_mode_rms_mm * ((i + 1) as f64).powf(-params.mode_decay) * root_v)
        .collect();
    Ok(ShapeModel {
        mean,
        modes,
        mode_sigmas,
        apex_vertex,
        mitral_vertex,
    })
}

impl ShapeModel {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.mean.vertices.len()
    }

    /// `mean + Σ coefficients[i] · sigma[i] · mode[i]`.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<Point3>> {
        if coefficients.len() != self.modes.len() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                self.modes.len(),
                coefficients.len()
            )));
        }
        let mut flat: Vec<f64> = self.mean.vertices.iter().flatten().copied().collect();
        for ((c, s), m) in coefficients.iter().zip(&self.mode_sigmas).zip(&self.modes) {
            let w = c * s;
            if w == 0.0 {
                continue;
            }
            for (f, v) in flat.iter_mut().zip(m) {
                *f += w * v;
            }
        }
        Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Coefficients of a deformed vertex set, in sigma units.
    pub fn project(&self, vertices: &[Point3]) -> Result<Vec<f64>> {
        if vertices.len() != self.num_vertices() {
            return Err(Error::invalid("vertex count differs from the model"));
        }
        let delta: Vec<f64> = vertices
            .iter()
            .zip(&self.mean.vertices)
            .flat_map(|(v, m)| [v[0] - m[0], v[1] - m[1], v[2] - m[2]])
            .collect();
        Ok(self
            .modes
            .iter()
            .zip(&self.mode_sigmas)
            .map(|(m, s)| dot(&delta, m) / s)
            .collect())
    }

    /// Instance with the given coefficients and unperturbed landmarks.
    pub fn instance(&self, coefficients: &[f64]) -> Result<HeartInstance> {
        let vertices = self.reconstruct(coefficients)?;
        let apex = vertices[self.apex_vertex];
        let mitral_center = vertices[self.mitral_vertex];
        Ok(HeartInstance {
            surface: LabeledMesh {
                vertices,
                ..self.mean.clone()
            },
            coefficients: coefficients.to_vec(),
            apex,
            mitral_center,
        })
    }

    pub fn mode_gram_max_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.modes.len() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.modes[i], &self.modes[j]) - target).abs());
            }
        }
        worst
    }
}

/// Unclipped standard normal coefficients.
pub fn draw_coefficients<R: Rng + ?Sized>(rng: &mut R, num_modes: usize) -> Vec<f64> {
    (0..num_modes).map(|_| rng.sample(StandardNormal)).collect()
}

/// Samples a heart: standard normal coefficients clipped to `±coeff_clip`,
/// then landmark perturbation with the default sigma.
pub fn sample_instance(model: &ShapeModel, rng_seed: u64, coeff_clip: f64) -> Result<HeartInstance> {
    sample_instance_with(model, rng_seed, coeff_clip, DEFAULT_LANDMARK_SIGMA_MM)
}

pub fn sample_instance_with(
    model: &ShapeModel,
    rng_seed: u64,
    coeff_clip: f64,
    landmark_sigma_mm: f64,
) -> Result<HeartInstance> {
    if !(coeff_clip > 0.0) {
        return Err(Error::invalid(format!("coeff_clip must be > 0, got {coeff_clip}")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let coefficients: Vec<f64> = draw_coefficients(&mut rng, model.num_modes())
        .into_iter()
        .map(|c| c.clamp(-coeff_clip, coeff_clip))
        .collect();
    let inst = model.instance(&coefficients)?;
    perturb_landmarks(&inst, landmark_sigma_mm, &mut rng)
}

/// Displaces apex and mitral centre by independent `N(0, σ² I)` vectors.
pub fn perturb_landmarks<R: Rng + ?Sized>(instance: &HeartInstance, sigma_mm: f64, rng: &mut R) -> Result<HeartInstance> {
    if !(sigma_mm >= 0.0) {
        return Err(Error::invalid(format!("landmark sigma must be >= 0, got {sigma_mm}")));
    }
    let mut out = instance.clone();
    if sigma_mm == 0.0 {
        return Ok(out);
    }
    for p in [&mut out.apex, &mut out.mitral_center] {
        for a in p.iter_mut() {
            *a += sigma_mm * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if dist(&out.apex, &out.mitral_center) == 0.0 {
        return Err(Error::Degenerate("apex and mitral centre coincide".into()));
    }
    Ok(out)
}

/// Area-weighted dense sampling of an instance surface.
pub fn densify<R: Rng + ?Sized>(instance: &HeartInstance, n_points: usize, rng: &mut R) -> Result<LabeledPointCloud> {
    instance.surface.sample_surface(n_points, rng)
}

/// Labels in anatomical order, for documentation and reports.
pub const SUBSTRUCTURES: [u8; NUM_CLASSES] = [LV_ENDO, LV_EPI, RV_ENDO, RV_EPI, LA, RA];

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> PhantomParams {
        PhantomParams {
            num_modes: 8,
            rings: 8,
            segments: 12,
            ..PhantomParams::default()
        }
    }

    #[test]
    fn landmarks_are_lv_endo_poles() {
        let m = build_model(1, &small_params()).unwrap();
        let inst = m.instance(&vec![0.0; 8]).unwrap();
        assert_eq!(inst.apex, [0.0, 0.0, 0.0]);
        assert!((inst.mitral_center[2] - 84.0).abs() < 1e-12);
        assert!(m.mode_gram_max_error() < 1e-8);
    }

    #[test]
    fn zero_coefficients_give_mean() {
        let m = build_model(1, &small_params()).unwrap();
        let inst = m.instance(&vec![0.0; 8]).unwrap();
        assert_eq!(inst.surface.vertices, m.mean.vertices);
    }

    #[test]
    fn invalid_arguments() {
        let m = build_model(1, &small_params()).unwrap();
        assert!(sample_instance(&m, 1, 0.0).is_err());
        assert!(m.instance(&[0.0; 3]).is_err());
        let inst = m.instance(&vec![0.0; 8]).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(perturb_landmarks(&inst, -1.0, &mut rng).is_err());
        assert!(densify(&inst, 5, &mut rng).is_err());
    }
}
