//! Simplified defurnished mesh: planar decomposition, furniture removal and
//! plane-extension hole filling.

mod decompose;
mod fill;
mod remove;
pub mod triangulate;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use decompose::{decompose_planes, DecomposeParams, PlanarDecomposition};
pub use fill::{fill_holes_plane_extension, project_onto_planes, FillOutput, FillParams, OpenLoop};
pub use remove::{boundary_loops, remove_furniture_faces, Removal};

use crate::error::{Error, Result};
use crate::mesh::{boundary_edge_count, face_adjacency, Bvh, FaceLabel, Plane, PlaneClass, TriMesh, Vec3};

/// Rays from at least this many pano centers must pass through a filled wall
/// patch for it to be treated as an opening.
const OPENING_MIN_VIEWS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdmConfig {
    pub angle_tol_deg: f64,
    pub dist_tol_m: f64,
    pub min_region_faces: usize,
    pub label_threshold: f64,
    pub plane_snap_radius_m: f64,
}

impl Default for SdmConfig {
    fn default() -> Self {
        let d = DecomposeParams::default();
        Self {
            angle_tol_deg: d.angle_tol_deg,
            dist_tol_m: d.dist_tol_m,
            min_region_faces: d.min_region_faces,
            label_threshold: 0.5,
            plane_snap_radius_m: 0.5,
        }
    }
}

impl SdmConfig {
    pub fn decompose_params(&self) -> DecomposeParams {
        DecomposeParams {
            angle_tol_deg: self.angle_tol_deg,
            dist_tol_m: self.dist_tol_m,
            min_region_faces: self.min_region_faces,
        }
    }

    pub fn fill_params(&self) -> FillParams {
        FillParams {
            dist_tol_m: self.dist_tol_m,
            snap_radius_m: self.plane_snap_radius_m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdmResult {
    pub mesh: TriMesh,
    /// Input face IDs that were removed.
    pub removed_faces: Vec<usize>,
    /// Output face IDs created by hole filling.
    pub filled_faces: Vec<usize>,
    pub plane_of_filled: Vec<usize>,
    pub planes: Vec<Plane>,
    /// Final per-input-face labels after thresholding and propagation.
    pub labels: Vec<FaceLabel>,
    pub open_loops: Vec<OpenLoop>,
    /// Filled faces deleted again because they covered an opening.
    pub reopened_faces: usize,
    pub boundary_edges: usize,
    pub watertight: bool,
}

/// Threshold scores into labels; `None` stays unknown.
pub fn threshold_labels(scores: &[Option<f64>], threshold: f64) -> Vec<FaceLabel> {
    scores
        .iter()
        .map(|s| match s {
            None => FaceLabel::Unknown,
            Some(v) if *v > threshold => FaceLabel::Furniture,
            Some(_) => FaceLabel::Structure,
        })
        .collect()
}

/// Unobserved faces off the structural planes that connect to furniture
/// through other such faces are furniture too (hidden undersides, backs).
pub fn propagate_furniture(mesh: &TriMesh, decomp: &PlanarDecomposition, labels: &mut [FaceLabel]) {
    let adj = face_adjacency(mesh);
    let mut queue: VecDeque<usize> = (0..labels.len())
        .filter(|&f| labels[f] == FaceLabel::Furniture)
        .collect();
    while let Some(f) = queue.pop_front() {
        for &g in &adj[f] {
            if labels[g] == FaceLabel::Unknown && !decomp.is_structural_face(g) {
                labels[g] = FaceLabel::Furniture;
                queue.push_back(g);
            }
        }
    }
}

/// Move every vertex of a structural face onto (the intersection of) the
/// planes of the structural faces around it.
fn snap_structural_vertices(mesh: &mut TriMesh, decomp: &PlanarDecomposition) {
    let mut on: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertices.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let Some(p) = decomp.face_to_plane[f] else { continue };
        if !decomp.planes[p].class.is_structural() {
            continue;
        }
        for &v in face {
            if !on[v].contains(&p) {
                on[v].push(p);
            }
        }
    }
    for (v, ps) in on.iter_mut().enumerate() {
        if ps.is_empty() {
            continue;
        }
        ps.sort_unstable();
        let planes: Vec<&Plane> = ps.iter().map(|&p| &decomp.planes[p]).collect();
        mesh.vertices[v] = project_onto_planes(&mesh.vertices[v], &planes);
    }
}

/// Build the simplified defurnished mesh from per-face furniture scores.
///
/// `pano_centers` feeds the opening rule: a filled wall face is deleted
/// again when rays from two or more centers toward it cross no input
/// geometry before reaching it.
pub fn build_sdm(
    mesh: &TriMesh,
    scores: &[Option<f64>],
    config: &SdmConfig,
    pano_centers: &[Vec3],
) -> Result<SdmResult> {
    mesh.validate()?;
    if scores.len() != mesh.faces.len() {
        return Err(Error::MismatchedInput(format!(
            "{} scores for {} faces",
            scores.len(),
            mesh.faces.len()
        )));
    }
    if !(0.0..=1.0).contains(&config.label_threshold) {
        return Err(Error::Config(format!(
            "sdm.label_threshold must be in [0, 1], got {}",
            config.label_threshold
        )));
    }
    let decomp = decompose_planes(mesh, &config.decompose_params());
    let mut labels = threshold_labels(scores, config.label_threshold);
    propagate_furniture(mesh, &decomp, &mut labels);

    let mut work = mesh.clone();
    work.texture = None;
    snap_structural_vertices(&mut work, &decomp);
    work.face_plane = Some(decomp.face_to_plane.clone());
    work.face_labels = Some(
        labels
            .iter()
            .map(|&l| if l == FaceLabel::Furniture { l } else { FaceLabel::Structure })
            .collect(),
    );

    let removal = remove_furniture_faces(&work, &labels)?;
    let fill = fill_holes_plane_extension(&removal.mesh, &removal.loops, &decomp, &config.fill_params());
    for o in &fill.open_loops {
        log::warn!("hole left open ({} vertices): {}", o.vertices.len(), o.reason);
    }

    let FillOutput {
        mesh: mut out,
        mut filled_faces,
        mut plane_of_filled,
        open_loops,
    } = fill;
    let reopen = opening_faces(mesh, &out, &filled_faces, &plane_of_filled, &decomp.planes, pano_centers, config.dist_tol_m);
    let reopened = reopen.iter().filter(|&&r| r).count();
    if reopened > 0 {
        let mut keep = vec![true; out.faces.len()];
        for (i, &f) in filled_faces.iter().enumerate() {
            if reopen[i] {
                keep[f] = false;
            }
        }
        let mut new_id = vec![0usize; keep.len()];
        let mut next = 0;
        for (f, &k) in keep.iter().enumerate() {
            new_id[f] = next;
            next += k as usize;
        }
        out.retain_faces(&keep);
        let kept: Vec<(usize, usize)> = filled_faces
            .iter()
            .zip(&plane_of_filled)
            .zip(&reopen)
            .filter(|(_, &r)| !r)
            .map(|((&f, &p), _)| (new_id[f], p))
            .collect();
        filled_faces = kept.iter().map(|k| k.0).collect();
        plane_of_filled = kept.iter().map(|k| k.1).collect();
    }

    let boundary_edges = boundary_edge_count(&out);
    Ok(SdmResult {
        mesh: out,
        removed_faces: removal.removed,
        filled_faces,
        plane_of_filled,
        planes: decomp.planes,
        labels,
        open_loops,
        reopened_faces: reopened,
        boundary_edges,
        watertight: boundary_edges == 0,
    })
}

/// Flags filled wall faces that cover a see-through opening of the input.
fn opening_faces(
    input: &TriMesh,
    out: &TriMesh,
    filled: &[usize],
    plane_of: &[usize],
    planes: &[Plane],
    centers: &[Vec3],
    dist_tol: f64,
) -> Vec<bool> {
    if centers.len() < OPENING_MIN_VIEWS {
        return vec![false; filled.len()];
    }
    let bvh = Bvh::new(input);
    filled
        .iter()
        .zip(plane_of)
        .map(|(&f, &p)| {
            if planes[p].class != PlaneClass::Wall {
                return false;
            }
            let c = out.face_centroid(f);
            let clear = centers
                .iter()
                .filter(|o| {
                    let d = c - *o;
                    let t = d.norm();
                    t > 0.0 && bvh.intersect_within(o, &(d / t), t + dist_tol).is_none()
                })
                .count();
            clear >= OPENING_MIN_VIEWS
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use proptest::prelude::*;

    /// Closed box room whose sides are regular grids of `n × n` quads with
    /// inward normals.
    pub(crate) fn grid_room(size: Vec3, n: usize) -> TriMesh {
        let mut mesh = TriMesh::empty();
        let (x, y, z) = (Vec3::x() * size.x, Vec3::y() * size.y, Vec3::z() * size.z);
        // (origin, a, b) with a × b pointing into the room.
        let sides = [
            (Vec3::zeros(), x, y),
            (z, y, x),
            (Vec3::zeros(), z, x),
            (y, x, z),
            (Vec3::zeros(), y, z),
            (x, z, y),
        ];
        for (o, a, b) in sides {
            let mut v = Vec::new();
            for j in 0..=n {
                for i in 0..=n {
                    v.push(o + a * (i as f64 / n as f64) + b * (j as f64 / n as f64));
                }
            }
            let mut f = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    let c = j * (n + 1) + i;
                    f.push([c, c + 1, c + n + 2]);
                    f.push([c, c + n + 2, c + n + 1]);
                }
            }
            mesh.append(&TriMesh::new(v, f).unwrap());
        }
        mesh.weld(1e-9);
        mesh
    }

    pub(crate) fn room() -> TriMesh {
        grid_room(Vec3::new(4.0, 4.0, 3.0), 8)
    }

    fn scores_where(m: &TriMesh, pred: impl Fn(Vec3) -> bool) -> Vec<Option<f64>> {
        (0..m.faces.len())
            .map(|f| Some(if pred(m.face_centroid(f)) { 1.0 } else { 0.0 }))
            .collect()
    }

    fn max_filled_plane_distance(r: &SdmResult) -> f64 {
        r.filled_faces
            .iter()
            .zip(&r.plane_of_filled)
            .flat_map(|(&f, &p)| r.mesh.triangle(f).map(|v| r.planes[p].distance(&v)))
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_room_is_closed_and_inward() {
        let m = room();
        assert_eq!(boundary_edge_count(&m), 0);
        let c = Vec3::new(2.0, 2.0, 1.5);
        for f in 0..m.faces.len() {
            assert!(m.face_normal(f).dot(&(c - m.face_centroid(f))) > 0.0);
        }
    }

    #[test]
    fn empty_room_is_unchanged() {
        let m = room();
        let r = build_sdm(&m, &vec![Some(0.0); m.faces.len()], &SdmConfig::default(), &[]).unwrap();
        assert!(r.removed_faces.is_empty() && r.filled_faces.is_empty());
        assert!(r.watertight);
        assert_eq!(r.mesh.faces, m.faces);
        assert_eq!(r.planes.len(), 6);
    }

    #[test]
    fn floating_box_removed_without_fill() {
        let mut m = room();
        m.append(&icosphere(Vec3::new(2.0, 2.0, 1.5), 0.3, 1));
        let n0 = 6 * 128;
        let scores: Vec<Option<f64>> = (0..m.faces.len()).map(|f| Some(if f >= n0 { 1.0 } else { 0.0 })).collect();
        let r = build_sdm(&m, &scores, &SdmConfig::default(), &[]).unwrap();
        assert_eq!(r.removed_faces.len(), m.faces.len() - n0);
        assert!(r.filled_faces.is_empty());
        assert!(r.watertight);
        assert_eq!(r.boundary_edges, 0);
    }

    #[test]
    fn unknown_faces_join_adjacent_furniture() {
        let mut m = room();
        let n0 = m.faces.len();
        m.append(&icosphere(Vec3::new(2.0, 2.0, 1.5), 0.3, 1));
        let mut scores: Vec<Option<f64>> = vec![Some(0.0); m.faces.len()];
        for (i, s) in scores[n0..].iter_mut().enumerate() {
            *s = if i == 0 { Some(1.0) } else { None };
        }
        let r = build_sdm(&m, &scores, &SdmConfig::default(), &[]).unwrap();
        assert!(r.labels[n0..].iter().all(|&l| l == FaceLabel::Furniture));
        assert_eq!(r.mesh.faces.len(), n0);
    }

    #[test]
    fn doorway_patch_is_reopened() {
        let full = room();
        // Cut a doorway into the y = 0 wall (1.5 ≤ x ≤ 2.5, z ≤ 1.5).
        let door = |c: Vec3| c.y.abs() < 1e-9 && (c.x - 2.0).abs() < 0.5 && c.z < 1.5;
        let keep: Vec<bool> = (0..full.faces.len()).map(|f| !door(full.face_centroid(f))).collect();
        let mut m = full.clone();
        m.retain_faces(&keep);
        // A rug in front of the doorway is flagged as furniture.
        let scores = scores_where(&m, |c| c.z.abs() < 1e-9 && (c.x - 2.0).abs() < 0.5 && c.y < 1.0);
        let centers = [Vec3::new(1.0, 2.0, 1.5), Vec3::new(3.0, 2.5, 1.2)];
        let r = build_sdm(&m, &scores, &SdmConfig::default(), &centers).unwrap();
        assert!(r.open_loops.is_empty(), "{:?}", r.open_loops);
        assert!(r.reopened_faces > 0);
        // The rug area is refilled and the doorway stays open.
        for (&f, &p) in r.filled_faces.iter().zip(&r.plane_of_filled) {
            assert_eq!(r.planes[p].class, PlaneClass::Floor);
            assert!(r.mesh.face_centroid(f).z.abs() < 1e-9);
        }
        assert!(!r.watertight);
        let floor_area: f64 = (0..r.mesh.faces.len())
            .filter(|&f| r.mesh.face_centroid(f).z.abs() < 1e-9)
            .map(|f| r.mesh.face_area(f))
            .sum();
        assert!((floor_area - 16.0).abs() < 1e-6);
        // Without pano centers the doorway gets bricked up.
        let closed = build_sdm(&m, &scores, &SdmConfig::default(), &[]).unwrap();
        assert!(closed.watertight);
    }

    #[test]
    fn idempotent_on_its_own_output() {
        let m = room();
        let scores = scores_where(&m, |c| c.z.abs() < 1e-9 && (c.x - 2.0).abs() < 1.0 && (c.y - 2.0).abs() < 1.0);
        let first = build_sdm(&m, &scores, &SdmConfig::default(), &[]).unwrap();
        assert!(!first.filled_faces.is_empty());
        let n = first.mesh.faces.len();
        let second = build_sdm(&first.mesh, &vec![Some(0.0); n], &SdmConfig::default(), &[]).unwrap();
        assert!(second.removed_faces.is_empty());
        assert!(second.filled_faces.is_empty());
    }

    #[test]
    fn bad_inputs_rejected() {
        let m = room();
        assert!(matches!(
            build_sdm(&m, &[Some(0.0)], &SdmConfig::default(), &[]),
            Err(Error::MismatchedInput(_))
        ));
        let cfg = SdmConfig {
            label_threshold: 1.5,
            ..Default::default()
        };
        assert!(build_sdm(&m, &vec![None; m.faces.len()], &cfg, &[]).is_err());
    }

    /// Room with a box-shaped piece of furniture whose bottom opening is the
    /// footprint hole in a finely gridded floor.
    pub(crate) fn furnished_room() -> (TriMesh, usize) {
        let mut m = room();
        // Remove the 1x1 m floor block under the furniture and add the box.
        let under = |c: Vec3| c.z.abs() < 1e-9 && (1.0..2.0).contains(&c.x) && (1.0..2.0).contains(&c.y);
        let keep: Vec<bool> = (0..m.faces.len()).map(|f| !under(m.face_centroid(f))).collect();
        m.retain_faces(&keep);
        let n0 = m.faces.len();
        let find = |m: &TriMesh, p: Vec3| m.vertices.iter().position(|v| (v - p).norm() < 1e-9).unwrap();
        let b = [
            find(&m, Vec3::new(1.0, 1.0, 0.0)),
            find(&m, Vec3::new(1.5, 1.0, 0.0)),
            find(&m, Vec3::new(2.0, 1.0, 0.0)),
            find(&m, Vec3::new(2.0, 1.5, 0.0)),
            find(&m, Vec3::new(2.0, 2.0, 0.0)),
            find(&m, Vec3::new(1.5, 2.0, 0.0)),
            find(&m, Vec3::new(1.0, 2.0, 0.0)),
            find(&m, Vec3::new(1.0, 1.5, 0.0)),
        ];
        let base = m.vertices.len();
        for &i in &b {
            let v = m.vertices[i];
            m.vertices.push(Vec3::new(v.x, v.y, 0.7));
        }
        let top_center = m.vertices.len();
        m.vertices.push(Vec3::new(1.5, 1.5, 0.7));
        for k in 0..8 {
            let (a, c) = (b[k], b[(k + 1) % 8]);
            let (ta, tc) = (base + k, base + (k + 1) % 8);
            // Outward-facing sides.
            m.faces.push([a, c, tc]);
            m.faces.push([a, tc, ta]);
            m.faces.push([ta, tc, top_center]);
        }
        if let Some(l) = &mut m.face_labels {
            l.resize(m.faces.len(), FaceLabel::Unknown);
        }
        if let Some(p) = &mut m.face_plane {
            p.resize(m.faces.len(), None);
        }
        m.validate().unwrap();
        (m, n0)
    }

    #[test]
    fn furniture_footprint_is_refilled() {
        let (m, n0) = furnished_room();
        assert_eq!(boundary_edge_count(&m), 0);
        let scores: Vec<Option<f64>> = (0..m.faces.len()).map(|f| Some(if f >= n0 { 0.9 } else { 0.1 })).collect();
        let r = build_sdm(&m, &scores, &SdmConfig::default(), &[]).unwrap();
        assert!(r.watertight);
        assert!(max_filled_plane_distance(&r) <= 1e-9);
        assert!((r.mesh.total_area() - room().total_area()).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn planarity_monotonicity_conservation(
            mask in prop::collection::vec(any::<bool>(), 64),
            extra in prop::collection::vec(any::<bool>(), 64),
        ) {
            // Random subsets of floor quads flagged as furniture.
            let m = room();
            let quad_of = |c: Vec3| -> Option<usize> {
                (c.z.abs() < 1e-9).then(|| (c.y / 0.5) as usize * 8 + (c.x / 0.5) as usize)
            };
            let scores_for = |sel: &dyn Fn(usize) -> bool| -> Vec<Option<f64>> {
                (0..m.faces.len())
                    .map(|f| Some(match quad_of(m.face_centroid(f)) {
                        Some(q) if sel(q) => 1.0,
                        _ => 0.0,
                    }))
                    .collect()
            };
            let small = scores_for(&|q| mask[q]);
            let large = scores_for(&|q| mask[q] || extra[q]);
            let cfg = SdmConfig::default();
            let a = build_sdm(&m, &small, &cfg, &[]).unwrap();
            let b = build_sdm(&m, &large, &cfg, &[]).unwrap();
            prop_assert!(b.removed_faces.len() >= a.removed_faces.len());
            for r in [&a, &b] {
                prop_assert!(max_filled_plane_distance(r) <= 1e-9);
                prop_assert!(r.mesh.total_area() >= m.total_area() - 1e-6);
            }
        }
    }
}
