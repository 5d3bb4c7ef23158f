use rayon::prelude::*;

use super::{EquirectCamera, FrameData, PanoFrame, Pose};
use crate::image::Image;
use crate::mesh::{Bvh, TriMesh, Vec3};

/// Face id written where a ray hits nothing.
pub const NO_FACE: u32 = u32::MAX;

/// Depth, normal and face-id images rendered from one pose.
#[derive(Debug, Clone)]
pub struct GeometryRender {
    pub depth: PanoFrame,
    pub normal: PanoFrame,
    pub face_id: Image<u32>,
}

impl GeometryRender {
    pub fn depth_image(&self) -> &Image<f64> {
        match &self.depth.data {
            FrameData::Depth(d) => d,
            _ => unreachable!(),
        }
    }

    pub fn normal_image(&self) -> &Image<f64> {
        match &self.normal.data {
            FrameData::Normal(n) => n,
            _ => unreachable!(),
        }
    }
}

/// Per-pixel ray cast of `mesh` from `pose`. Depth is Euclidean ray length
/// (`+∞` on a miss); normals are the geometric face normal flipped toward
/// the camera.
pub fn render_geometry(mesh: &TriMesh, cam: &EquirectCamera, pose: &Pose) -> GeometryRender {
    let bvh = Bvh::new(mesh);
    render_geometry_with(mesh, &bvh, cam, pose)
}

/// As [`render_geometry`], reusing a prebuilt BVH of `mesh`.
pub fn render_geometry_with(
    mesh: &TriMesh,
    bvh: &Bvh,
    cam: &EquirectCamera,
    pose: &Pose,
) -> GeometryRender {
    let (w, h) = (cam.width, cam.height);
    let face_normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<u32>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut depth = vec![f64::INFINITY; w];
            let mut normal = vec![0.0; 3 * w];
            let mut ids = vec![NO_FACE; w];
            for u in 0..w {
                let dir = pose.rotation * cam.direction(u as f64, v as f64);
                if let Some(hit) = bvh.intersect(&pose.position, &dir) {
                    depth[u] = hit.t;
                    ids[u] = hit.face as u32;
                    let mut n = face_normals[hit.face];
                    if n.dot(&dir) > 0.0 {
                        n = -n;
                    }
                    normal[3 * u..3 * u + 3].copy_from_slice(n.as_slice());
                }
            }
            (depth, normal, ids)
        })
        .collect();

    let mut depth = Vec::with_capacity(w * h);
    let mut normal = Vec::with_capacity(3 * w * h);
    let mut ids = Vec::with_capacity(w * h);
    for (d, n, i) in rows {
        depth.extend(d);
        normal.extend(n);
        ids.extend(i);
    }
    GeometryRender {
        depth: PanoFrame {
            camera: *cam,
            pose: *pose,
            data: FrameData::Depth(Image::from_vec(w, h, 1, depth).unwrap()),
        },
        normal: PanoFrame {
            camera: *cam,
            pose: *pose,
            data: FrameData::Normal(Image::from_vec(w, h, 3, normal).unwrap()),
        },
        face_id: Image::from_vec(w, h, 1, ids).unwrap(),
    }
}
