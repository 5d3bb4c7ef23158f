//! Equirectangular cameras, posed panorama frames, BVH ray-cast rendering
//! of depth/normal/face-id images, and projection of 2D furniture masks
//! onto mesh faces.

mod camera;
mod manifest;
mod masks;
mod render;

pub use camera::{pixel_to_ray, point_to_pixel, EquirectCamera, Pose};
pub use manifest::{load_manifest, save_manifest, PanoEntry, Scene};
pub use masks::{erode, mask_frame, project_masks_to_faces, FaceScores, MaskProjectionConfig};
pub use render::{render_geometry, render_geometry_with, GeometryRender, NO_FACE};

use crate::image::{GrayImage, Mask, RgbImage};

/// Image payload of a [`PanoFrame`].
#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    Rgb(RgbImage),
    /// Ray length in meters, `+∞` where nothing was hit.
    Depth(GrayImage),
    /// World-frame unit normals, 3 channels; zero where nothing was hit.
    Normal(GrayImage),
    Mask(Mask),
}

/// An equirectangular image bound to the pose it was captured from.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoFrame {
    pub camera: EquirectCamera,
    pub pose: Pose,
    pub data: FrameData,
}
