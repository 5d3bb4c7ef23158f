//! Indexed triangle meshes and the geometric primitives shared by every
//! stage: validation, adjacency, plane fitting, BVH queries.
//!
//! World frame is +Z up, units are meters.

mod adjacency;
mod bvh;
mod io;
mod plane;

use std::collections::HashMap;

use nalgebra::Vector3;

pub use adjacency::{boundary_edge_count, boundary_edges, face_adjacency, Adjacency};
pub use bvh::{Bvh, ClosestHit, RayHit};
pub use io::{load_mesh, save_mesh, save_mesh_with, PlyFormat};
pub use plane::{fit_plane, fit_plane_oriented, Plane, PlaneClass};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Faces below this area are rejected as degenerate (m²).
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceLabel {
    #[default]
    Unknown,
    Structure,
    Furniture,
}

impl FaceLabel {
    pub fn to_u8(self) -> u8 {
        match self {
            FaceLabel::Unknown => 0,
            FaceLabel::Structure => 1,
            FaceLabel::Furniture => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(FaceLabel::Unknown),
            1 => Some(FaceLabel::Structure),
            2 => Some(FaceLabel::Furniture),
            _ => None,
        }
    }
}

/// Per-face UV triples plus the atlas image they index.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceUvs {
    pub uvs: Vec<[[f64; 2]; 3]>,
    /// Atlas file name, relative to the mesh file.
    pub atlas: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_labels: Option<Vec<FaceLabel>>,
    pub face_plane: Option<Vec<Option<usize>>>,
    pub texture: Option<FaceUvs>,
}

impl TriMesh {
    /// Build and validate a mesh from raw arrays.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            ..Default::default()
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("vertex {i} is not finite")));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= nv) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad} but mesh has {nv} vertices"
                )));
            }
            let area = self.face_area(fi);
            if area < DEGENERATE_AREA {
                return Err(Error::Validation(format!(
                    "face {fi} is degenerate (area {area:e} m²)"
                )));
            }
        }
        let nf = self.faces.len();
        if let Some(l) = &self.face_labels {
            if l.len() != nf {
                return Err(Error::Validation(format!("{} labels for {nf} faces", l.len())));
            }
        }
        if let Some(p) = &self.face_plane {
            if p.len() != nf {
                return Err(Error::Validation(format!("{} plane ids for {nf} faces", p.len())));
            }
        }
        if let Some(t) = &self.texture {
            if t.uvs.len() != nf {
                return Err(Error::Validation(format!("{} uv triples for {nf} faces", t.uvs.len())));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal (length = 2 × area), following winding.
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        self.face_cross(f).normalize()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (a + b + c) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn labels(&self) -> Vec<FaceLabel> {
        self.face_labels
            .clone()
            .unwrap_or_else(|| vec![FaceLabel::Unknown; self.faces.len()])
    }

    /// Axis-aligned bounds, `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Append another mesh, offsetting its indices. Per-face attributes are
    /// kept only when both sides carry them or the receiver is empty.
    pub fn append(&mut self, other: &TriMesh) {
        let offset = self.vertices.len();
        let was_empty = self.faces.is_empty();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        self.face_labels = merge_attr(was_empty, self.face_labels.take(), &other.face_labels, other.faces.len(), FaceLabel::Unknown);
        self.face_plane = merge_attr(was_empty, self.face_plane.take(), &other.face_plane, other.faces.len(), None);
        if self.texture.is_some() || other.texture.is_some() {
            self.texture = None;
        }
    }

    /// Keep only the faces for which `keep` is true; drop orphaned vertices
    /// and remap indices. Returns the old→new vertex map.
    pub fn retain_faces(&mut self, keep: &[bool]) -> Vec<Option<usize>> {
        assert_eq!(keep.len(), self.faces.len());
        let mut used = vec![false; self.vertices.len()];
        for (f, &k) in self.faces.iter().zip(keep) {
            if k {
                for &i in f {
                    used[i] = true;
                }
            }
        }
        let mut remap = vec![None; self.vertices.len()];
        let mut verts = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = Some(verts.len());
                verts.push(*v);
            }
        }
        let mut faces: Vec<[usize; 3]> = self.faces.clone();
        retain_by(&mut faces, keep);
        self.faces = faces
            .into_iter()
            .map(|f| f.map(|i| remap[i].unwrap()))
            .collect();
        if let Some(l) = &mut self.face_labels {
            retain_by(l, keep);
        }
        if let Some(p) = &mut self.face_plane {
            retain_by(p, keep);
        }
        if let Some(t) = &mut self.texture {
            retain_by(&mut t.uvs, keep);
        }
        self.vertices = verts;
        remap
    }

    /// Merge vertices closer than `tol` (grid hashing). Faces that collapse
    /// are dropped.
    pub fn weld(&mut self, tol: f64) {
        let key = |v: &Vec3| {
            (
                (v.x / tol).round() as i64,
                (v.y / tol).round() as i64,
                (v.z / tol).round() as i64,
            )
        };
        let mut map: HashMap<(i64, i64, i64), usize> = HashMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut verts = Vec::new();
        for v in &self.vertices {
            let id = *map.entry(key(v)).or_insert_with(|| {
                verts.push(*v);
                verts.len() - 1
            });
            remap.push(id);
        }
        self.vertices = verts;
        for f in &mut self.faces {
            *f = f.map(|i| remap[i]);
        }
        let keep: Vec<bool> = self
            .faces
            .iter()
            .map(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        self.retain_faces(&keep);
    }
}

fn retain_by<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

fn merge_attr<T: Clone>(
    was_empty: bool,
    mine: Option<Vec<T>>,
    theirs: &Option<Vec<T>>,
    their_len: usize,
    fill: T,
) -> Option<Vec<T>> {
    match (mine, theirs) {
        (Some(mut a), Some(b)) => {
            a.extend_from_slice(b);
            Some(a)
        }
        (Some(mut a), None) => {
            a.extend(std::iter::repeat_n(fill, their_len));
            Some(a)
        }
        (None, Some(b)) if was_empty => Some(b.clone()),
        _ => None,
    }
}

/// Axis-aligned closed box with 2 triangles per side, normals facing
/// inward (the side a camera inside the room sees).
pub fn box_room(min: Vec3, max: Vec3) -> TriMesh {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let (a, b) = (min, max);
    let vertices = vec![
        v(a.x, a.y, a.z),
        v(b.x, a.y, a.z),
        v(b.x, b.y, a.z),
        v(a.x, b.y, a.z),
        v(a.x, a.y, b.z),
        v(b.x, a.y, b.z),
        v(b.x, b.y, b.z),
        v(a.x, b.y, b.z),
    ];
    // Each quad listed counter-clockwise as seen from inside.
    let quads = [
        [0, 1, 2, 3], // floor, normal +z
        [4, 7, 6, 5], // ceiling, normal -z
        [0, 4, 5, 1], // y = min, normal +y
        [2, 6, 7, 3], // y = max, normal -y
        [0, 3, 7, 4], // x = min, normal +x
        [1, 5, 6, 2], // x = max, normal -x
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh {
        vertices,
        faces,
        ..Default::default()
    }
}

/// Outward-facing icosphere of the given radius and subdivision level.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh {
        vertices: verts.into_iter().map(|v| center + v * radius).collect(),
        faces,
        ..Default::default()
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Möller–Trumbore ray/triangle intersection; returns the ray parameter.
#[inline]
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Distance from `p` to the nearest triangle, scanning every face.
pub fn brute_force_distance(p: &Vec3, mesh: &TriMesh) -> f64 {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriMesh {
        box_room(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn box_room_is_valid_and_inward() {
        let m = unit_cube();
        m.validate().unwrap();
        assert_eq!(m.faces.len(), 12);
        let center = Vec3::new(0.5, 0.5, 0.5);
        for f in 0..12 {
            let to_center = center - m.face_centroid(f);
            assert!(m.face_normal(f).dot(&to_center) > 0.0, "face {f} faces outward");
        }
        assert!((m.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_index_and_nan() {
        let mut m = unit_cube();
        m.faces[0][1] = 8;
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
        let mut m = unit_cube();
        m.vertices[0].x = f64::NAN;
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn validation_rejects_degenerate_face() {
        let v = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn retain_faces_prunes_vertices() {
        let mut m = unit_cube();
        m.face_labels = Some(vec![FaceLabel::Structure; 12]);
        let keep: Vec<bool> = (0..12).map(|f| f < 2).collect();
        m.retain_faces(&keep);
        assert_eq!(m.faces.len(), 2);
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.face_labels.as_ref().unwrap().len(), 2);
        m.validate().unwrap();
    }

    #[test]
    fn icosphere_counts() {
        let s = icosphere(Vec3::zeros(), 1.0, 2);
        assert_eq!(s.faces.len(), 20 * 16);
        assert_eq!(s.vertices.len(), 10 * 16 + 2);
        for v in &s.vertices {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let q = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((q - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let q = closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(q, a);
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn weld_merges_duplicates() {
        let mut m = unit_cube();
        let extra = unit_cube();
        m.append(&extra);
        assert_eq!(m.vertices.len(), 16);
        m.weld(1e-9);
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.faces.len(), 24);
    }
}
