use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mesh::{face_adjacency, fit_plane_oriented, Plane, PlaneClass, TriMesh, Vec3};

/// Refit the running plane after this many accepted faces.
const REFIT_EVERY: usize = 64;
/// Horizontal planes must cover this fraction of the footprint to count as
/// floor or ceiling candidates.
const SUPPORT_FRACTION: f64 = 0.05;
/// Vertical planes must span this fraction of the floor-to-ceiling height to
/// count as walls.
const WALL_SPAN_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeParams {
    pub angle_tol_deg: f64,
    pub dist_tol_m: f64,
    pub min_region_faces: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            angle_tol_deg: 5.0,
            dist_tol_m: 0.02,
            min_region_faces: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarDecomposition {
    pub planes: Vec<Plane>,
    pub face_to_plane: Vec<Option<usize>>,
    pub unassigned_faces: Vec<usize>,
}

impl PlanarDecomposition {
    pub fn structural_planes(&self) -> impl Iterator<Item = (usize, &Plane)> {
        self.planes.iter().enumerate().filter(|(_, p)| p.class.is_structural())
    }

    pub fn is_structural_face(&self, f: usize) -> bool {
        self.face_to_plane[f].is_some_and(|p| self.planes[p].class.is_structural())
    }
}

/// Greedy region growing over edge-adjacent faces, seeded by the largest
/// unassigned face, followed by floor/wall/ceiling classification.
pub fn decompose_planes(mesh: &TriMesh, params: &DecomposeParams) -> PlanarDecomposition {
    let n = mesh.faces.len();
    let adj = face_adjacency(mesh);
    let normals: Vec<Vec3> = (0..n).map(|f| mesh.face_normal(f)).collect();
    let areas: Vec<f64> = (0..n).map(|f| mesh.face_area(f)).collect();
    let cos_tol = params.angle_tol_deg.to_radians().cos();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| areas[b].total_cmp(&areas[a]).then(a.cmp(&b)));

    let mut visited = vec![false; n];
    let mut face_to_plane = vec![None; n];
    let mut planes: Vec<Plane> = Vec::new();
    let mut unassigned = Vec::new();

    for &seed in &order {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut region = vec![seed];
        let mut plane = Plane::through(&mesh.face_centroid(seed), &normals[seed]);
        let mut since_refit = 0usize;
        let mut queue: VecDeque<usize> = adj[seed].iter().copied().collect();
        let mut queued: BTreeSet<usize> = adj[seed].iter().copied().collect();

        while let Some(c) = queue.pop_front() {
            if visited[c] {
                continue;
            }
            let aligned = normals[c].dot(&plane.normal).abs() >= cos_tol;
            let close = mesh
                .triangle(c)
                .iter()
                .all(|v| plane.distance(v) <= params.dist_tol_m);
            if !(aligned && close) {
                // May still join through another neighbor after a refit.
                queued.remove(&c);
                continue;
            }
            visited[c] = true;
            region.push(c);
            since_refit += 1;
            if since_refit >= REFIT_EVERY {
                since_refit = 0;
                if let Some(p) = fit_region(mesh, &region, &normals) {
                    plane = p;
                }
            }
            for &nb in &adj[c] {
                if !visited[nb] && queued.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }

        if region.len() < params.min_region_faces.max(1) {
            unassigned.extend(region);
            continue;
        }
        if let Some(p) = fit_region(mesh, &region, &normals) {
            plane = p;
        }
        let id = planes.len();
        region.sort_unstable();
        for &f in &region {
            face_to_plane[f] = Some(id);
        }
        plane.inlier_faces = region;
        planes.push(plane);
    }
    unassigned.sort_unstable();

    classify_planes(mesh, &mut planes, params.dist_tol_m);
    PlanarDecomposition {
        planes,
        face_to_plane,
        unassigned_faces: unassigned,
    }
}

fn fit_region(mesh: &TriMesh, region: &[usize], normals: &[Vec3]) -> Option<Plane> {
    let verts: BTreeSet<usize> = region.iter().flat_map(|&f| mesh.faces[f]).collect();
    let pts: Vec<Vec3> = verts.iter().map(|&v| mesh.vertices[v]).collect();
    let ns: Vec<Vec3> = region.iter().map(|&f| normals[f]).collect();
    fit_plane_oriented(&pts, Some(&ns)).ok()
}

/// Floor = lowest horizontal plane covering ≥5% of the footprint (and
/// anything coplanar with it); ceiling is the highest analog. Walls are
/// vertical planes spanning most of the floor-to-ceiling height.
fn classify_planes(mesh: &TriMesh, planes: &mut [Plane], dist_tol: f64) {
    let Some((lo, hi)) = mesh.bounds() else { return };
    let footprint = ((hi.x - lo.x) * (hi.y - lo.y)).max(f64::MIN_POSITIVE);
    let horizontal = |p: &Plane| {
        matches!(p.orientation_class(), PlaneClass::Floor | PlaneClass::Ceiling)
    };
    let height = |p: &Plane| p.offset / p.normal.z;
    let covered = |p: &Plane| {
        p.inlier_faces
            .iter()
            .map(|&f| mesh.face_area(f) * p.normal.z.abs())
            .sum::<f64>()
            / footprint
    };

    let supported: Vec<usize> = (0..planes.len())
        .filter(|&i| horizontal(&planes[i]) && covered(&planes[i]) >= SUPPORT_FRACTION)
        .collect();
    let floor_h = supported
        .iter()
        .map(|&i| height(&planes[i]))
        .fold(None, |m: Option<f64>, h| Some(m.map_or(h, |m| m.min(h))));
    let ceil_h = supported
        .iter()
        .map(|&i| height(&planes[i]))
        .fold(None, |m: Option<f64>, h| Some(m.map_or(h, |m| m.max(h))));
    let ceil_h = match (floor_h, ceil_h) {
        (Some(f), Some(c)) if (c - f).abs() <= dist_tol => None,
        (_, c) => c,
    };
    let span = match (floor_h, ceil_h) {
        (Some(f), Some(c)) => c - f,
        _ => hi.z - lo.z,
    };

    for p in planes.iter_mut() {
        p.class = PlaneClass::Other;
        if horizontal(p) {
            let h = height(p);
            if floor_h.is_some_and(|f| (h - f).abs() <= dist_tol) {
                p.class = PlaneClass::Floor;
            } else if ceil_h.is_some_and(|c| (h - c).abs() <= dist_tol) {
                p.class = PlaneClass::Ceiling;
            }
        } else if p.orientation_class() == PlaneClass::Wall {
            let (zmin, zmax) = p
                .inlier_faces
                .iter()
                .flat_map(|&f| mesh.faces[f])
                .map(|v| mesh.vertices[v].z)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
            if span > 0.0 && zmax - zmin >= WALL_SPAN_FRACTION * span {
                p.class = PlaneClass::Wall;
            }
        }
        // Orient floor normals up and ceiling normals down.
        let flip = match p.class {
            PlaneClass::Floor => p.normal.z < 0.0,
            PlaneClass::Ceiling => p.normal.z > 0.0,
            _ => false,
        };
        if flip {
            p.normal = -p.normal;
            p.offset = -p.offset;
        }
    }
}
