//! Minimal dense tensor engine with reverse-mode differentiation.
//!
//! Values are 64-bit and immutable once recorded. A [`Graph`] is a tape built
//! fresh for every forward pass and consumed by [`Graph::backward`]; the
//! parameters it reads live in a [`ParamStore`] that outlives the tape.

mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use optim::{OptimState, WarmupCosine};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖)` used by the gradient checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
