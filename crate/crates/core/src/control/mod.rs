//! Edge control images from rendered geometry and random composite masks.

mod canny;
mod composite;

pub use canny::{canny, CannyParams, Thresholds};
pub use composite::{generate_composite_mask, rasterize_circles, sample_circles, Circle, MaskSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::percentile;
use crate::image::{GrayImage, Mask};
use crate::pano::{FrameData, PanoFrame};

/// No-hit depth is replaced by this multiple of the 99th percentile.
const NO_HIT_DEPTH_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSource {
    Depth,
    Normal,
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlImage {
    pub edges: Mask,
    pub source: ControlSource,
}

impl ControlImage {
    /// 0/255 single-channel bytes.
    pub fn to_u8(&self) -> crate::image::Image<u8> {
        self.edges.to_u8()
    }
}

/// Normalize a depth image to [0, 1] between its 1st and 99th percentiles.
/// No-hit pixels are first set to `1.05 ×` the 99th percentile of the
/// finite depths.
pub fn normalize_depth(depth: &GrayImage) -> GrayImage {
    let mut finite: Vec<f64> = depth.data.iter().copied().filter(|d| d.is_finite()).collect();
    let Some(p99) = percentile(&mut finite, 0.99) else {
        return GrayImage::new(depth.width, depth.height, 1, 0.0);
    };
    let fill = NO_HIT_DEPTH_FACTOR * p99;
    let filled = depth.map(|d| if d.is_finite() { d } else { fill });
    let mut all = filled.data.clone();
    let lo = percentile(&mut all, 0.01).unwrap();
    let hi = percentile(&mut all, 0.99).unwrap();
    filled.map(|d| if hi > lo { ((d - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
}

/// Union of Canny edges of the normalized depth and of each normal channel.
pub fn make_control_image(depth: &PanoFrame, normal: &PanoFrame, params: &CannyParams) -> Result<ControlImage> {
    if depth.camera != normal.camera || depth.pose != normal.pose {
        return Err(Error::MismatchedInput(
            "depth and normal frames come from different cameras".into(),
        ));
    }
    let (FrameData::Depth(d), FrameData::Normal(n)) = (&depth.data, &normal.data) else {
        return Err(Error::MismatchedInput("expected a depth and a normal frame".into()));
    };
    if !d.same_size(n) || n.channels != 3 || d.channels != 1 {
        return Err(Error::MismatchedInput(format!(
            "depth {}x{}x{} vs normal {}x{}x{}",
            d.width, d.height, d.channels, n.width, n.height, n.channels
        )));
    }
    let mut edges = canny(&normalize_depth(d), params)?;
    for c in 0..3 {
        let e = canny(&n.channel(c), params)?;
        for (a, b) in edges.data.iter_mut().zip(&e.data) {
            *a |= *b;
        }
    }
    Ok(ControlImage {
        edges,
        source: ControlSource::Combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_room, TriMesh, Vec3};
    use crate::pano::{point_to_pixel, render_geometry, EquirectCamera, Pose};

    fn room() -> TriMesh {
        box_room(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 3.0))
    }

    fn control_of(mesh: &TriMesh, cam: &EquirectCamera, pose: &Pose) -> ControlImage {
        let r = render_geometry(mesh, cam, pose);
        make_control_image(&r.depth, &r.normal, &CannyParams::default()).unwrap()
    }

    /// Pixels crossed by the 12 box edges, from dense samples projected with
    /// the camera model.
    fn junction_pixels(cam: &EquirectCamera, pose: &Pose, lo: Vec3, hi: Vec3) -> Vec<(usize, usize)> {
        let c = [lo, hi];
        let mut segs = Vec::new();
        for i in 0..8usize {
            let a = Vec3::new(c[i & 1].x, c[(i >> 1) & 1].y, c[(i >> 2) & 1].z);
            for bit in 0..3 {
                if i & (1 << bit) == 0 {
                    let j = i | (1 << bit);
                    let b = Vec3::new(c[j & 1].x, c[(j >> 1) & 1].y, c[(j >> 2) & 1].z);
                    segs.push((a, b));
                }
            }
        }
        let mut px = std::collections::BTreeSet::new();
        for (a, b) in segs {
            for k in 0..=4000 {
                let p = a + (b - a) * (k as f64 / 4000.0);
                let (u, v, _) = point_to_pixel(cam, pose, &p).unwrap();
                let u = (u.round() as isize).rem_euclid(cam.width as isize) as usize;
                let v = (v.round().max(0.0) as usize).min(cam.height - 1);
                px.insert((u, v));
            }
        }
        px.into_iter().collect()
    }

    #[test]
    fn box_room_edges_follow_junctions() {
        let cam = EquirectCamera::new(256, 128).unwrap();
        let pose = Pose::at(Vec3::new(0.3, -0.4, 1.5));
        let ctrl = control_of(&room(), &cam, &pose);
        let junctions = junction_pixels(&cam, &pose, Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 3.0));
        let (w, h) = (cam.width as isize, cam.height as isize);
        let near_edge = |u: usize, v: usize| {
            (-2..=2).any(|dy: isize| {
                (-2..=2).any(|dx: isize| {
                    let y = v as isize + dy;
                    let x = (u as isize + dx).rem_euclid(w);
                    (0..h).contains(&y) && ctrl.edges.data[(y * w + x) as usize]
                })
            })
        };
        let hit = junctions.iter().filter(|&&(u, v)| near_edge(u, v)).count();
        let cover = hit as f64 / junctions.len() as f64;
        assert!(cover >= 0.9, "junction coverage {cover}");
    }

    #[test]
    fn face_on_plane_gives_empty_control() {
        let cam = EquirectCamera::new(64, 32).unwrap();
        let (w, h) = (cam.width, cam.height);
        let pose = Pose::identity();
        let depth = PanoFrame {
            camera: cam,
            pose,
            data: FrameData::Depth(GrayImage::new(w, h, 1, 3.0)),
        };
        let mut n = GrayImage::new(w, h, 3, 0.0);
        for p in n.data.chunks_mut(3) {
            p[0] = -1.0;
        }
        let normal = PanoFrame {
            camera: cam,
            pose,
            data: FrameData::Normal(n),
        };
        let c = make_control_image(&depth, &normal, &CannyParams::default()).unwrap();
        assert_eq!(c.edges.count_true(), 0);
        assert_eq!(c.source, ControlSource::Combined);
    }

    #[test]
    fn rigid_motion_of_mesh_and_camera_keeps_edges() {
        let cam = EquirectCamera::new(128, 64).unwrap();
        let pose = Pose::at(Vec3::new(0.2, 0.1, 1.4));
        let a = control_of(&room(), &cam, &pose);
        // Translate the scene and camera by the same offset; a rotation
        // about +z would change the rendered normals.
        let shift = Vec3::new(3.0, -1.0, 0.5);
        let mut moved = room();
        for v in &mut moved.vertices {
            *v += shift;
        }
        let b = control_of(&moved, &cam, &Pose::at(pose.position + shift));
        let diff = a.edges.data.iter().zip(&b.edges.data).filter(|(x, y)| x != y).count();
        assert_eq!(diff, 0);
        assert_eq!(a, control_of(&room(), &cam, &pose));
    }

    #[test]
    fn mismatched_frames_rejected() {
        let cam = EquirectCamera::new(64, 32).unwrap();
        let r = render_geometry(&room(), &cam, &Pose::at(Vec3::new(0.0, 0.0, 1.0)));
        let r2 = render_geometry(&room(), &cam, &Pose::at(Vec3::new(0.5, 0.0, 1.0)));
        assert!(make_control_image(&r.depth, &r2.normal, &CannyParams::default()).is_err());
        assert!(make_control_image(&r.normal, &r.depth, &CannyParams::default()).is_err());
    }

    #[test]
    fn no_hit_depth_is_far() {
        // 1.0 .. 3.0 ramp with 5% no-hit pixels.
        let mut d = GrayImage::from_vec(20, 10, 1, (0..200).map(|i| 1.0 + i as f64 / 100.0).collect()).unwrap();
        for i in 190..200 {
            d.data[i] = f64::INFINITY;
        }
        let n = normalize_depth(&d);
        assert_eq!(n.data[0], 0.0);
        assert_eq!(n.data[199], 1.0);
        assert!(n.data[189] < 1.0);
    }
}
