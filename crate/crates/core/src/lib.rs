//! Defurnishing indoor scans: planar simplification of a furnished mesh,
//! equirectangular rendering of geometric control images, mask-guided
//! panorama inpainting through pluggable backends, re-texturing, and the
//! evaluation metrics and synthetic benchmark used to score all of it.

pub mod control;
pub mod error;
pub mod filter;
pub mod image;
pub mod inpaint;
pub mod losses;
pub mod metrics;
pub mod mesh;
pub mod pipeline;
pub mod pano;
pub mod sdm;
pub mod synth;
pub mod texture;

pub use error::{Error, Result};
pub use mesh::{FaceLabel, Plane, PlaneClass, TriMesh, Vec3};
