//! Triplane volume rendering and evaluation engine.
//!
//! The crate covers the deterministic parts of a single-image 3D portrait
//! pipeline:
//!
//! * [`triplane`] and [`mlp`]: the triplane representation, bilinear sampling,
//!   the small decoder network and their binary formats.
//! * [`camera`], [`field`] and [`render`]: the 25-parameter pinhole camera, the
//!   density fields that can be rendered, and the tiled volume renderer.
//! * [`augment`]: shoulder-pose ray warping and colour-space augmentation.
//! * [`visibility`]: depth back-projection, visibility triplanes and occlusion masks.
//! * [`fusion`]: flow-field triplane warping, visibility-gated fusion and the
//!   training losses.
//! * [`eval`]: image metrics, the `T x N x N` score tensor and its aggregates.
//! * [`synth`]: procedural blob scenes, camera rigs and dataset generation.
//! * [`app`]: the configuration and commands behind the `trifuse` binary.

pub mod app;
pub mod augment;
pub mod camera;
pub mod error;
pub mod eval;
pub mod field;
pub mod fusion;
pub mod io;
pub mod mlp;
pub mod raster;
pub mod render;
pub mod synth;
pub mod triplane;
pub mod visibility;

pub use error::{Error, Result};

/// A point in world space. The triplane covers `[-0.5, 0.5]^3`.
pub type SamplePoint = nalgebra::Point3<f64>;

/// Run `f` on a dedicated rayon pool with `threads` workers.
///
/// Every parallel routine in the crate produces identical output regardless of
/// the pool size, so this only affects wall-clock time.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
