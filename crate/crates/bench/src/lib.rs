//! Fixtures shared by the kernel benchmarks.

use defurnish::image::{GrayImage, Image, Mask, RgbImage};
use defurnish::mesh::box_room;
use defurnish::pano::{render_geometry, EquirectCamera, Pose};
use defurnish::synth::{generate_scene, Furniture, SceneSpec, Shape, SynthScene};
use defurnish::{TriMesh, Vec3};

pub fn room() -> TriMesh {
    box_room(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 3.0))
}

pub fn camera(height: usize) -> EquirectCamera {
    EquirectCamera::with_height(height).expect("valid size")
}

/// Normalized depth of the box room, a realistic edge-detector input.
pub fn depth_image(height: usize) -> GrayImage {
    let r = render_geometry(&room(), &camera(height), &Pose::at(Vec3::new(0.3, -0.2, 1.5)));
    defurnish::control::normalize_depth(r.depth_image())
}

/// Smooth single-channel test pattern in [0, 1].
pub fn pattern(width: usize, height: usize, phase: f64) -> GrayImage {
    let data = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            0.5 + 0.4 * (0.11 * x + phase).sin() * (0.07 * y).cos()
        })
        .collect();
    Image::from_vec(width, height, 1, data).expect("sizes match")
}

/// One furnished scene with a single table-sized box.
pub fn furnished(pano_width: usize) -> SynthScene {
    let spec = SceneSpec {
        room: [4.0, 3.5, 2.7],
        panos: vec![[1.2, 1.0, 1.5]],
        furniture: vec![Furniture {
            shape: Shape::Box,
            size: [1.0, 0.6, 0.75],
            position: [2.6, 2.0, 0.0],
            yaw: 0.4,
        }],
        seed: 1,
        pano_width,
        grid: 0.25,
    };
    generate_scene(&spec).expect("valid spec")
}

pub fn pano_and_mask(pano_width: usize) -> (RgbImage, Mask) {
    let mut s = furnished(pano_width);
    (s.furnished_panos.remove(0), s.masks.remove(0))
}
