//! Procedural statistical shape model of six cardiac substructures.
//!
//! The mean surface is a set of superellipsoid shells (LV endo/epi, RV
//! endo/epi, LA, RA) in millimetres with the LV long axis on +z. Variation
//! comes from smooth random displacement fields, Gram-Schmidt
//! orthonormalized over the flattened vertex vector.

mod mesh;
mod model;
mod sidecar;

pub use mesh::{allocate_by_area, LabeledMesh, Superellipsoid};
pub use model::{
    build_default_model, build_model, densify, draw_coefficients, perturb_landmarks, sample_instance,
    sample_instance_with, HeartInstance, PhantomParams, ShapeModel, DEFAULT_COEFF_CLIP, DEFAULT_LANDMARK_SIGMA_MM,
    DEFAULT_NUM_MODES, SUBSTRUCTURES,
};
pub use sidecar::{export_model, import_model, read_modes, write_modes};
