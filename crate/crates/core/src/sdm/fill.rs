use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::decompose::PlanarDecomposition;
use super::triangulate::{signed_area, triangulate_with_holes, P2};
use crate::error::{Error, Result};
use crate::mesh::{FaceLabel, Plane, TriMesh, Vec3};

/// Planes whose normals are closer than this angle are treated as parallel
/// when intersecting.
const MIN_PLANE_ANGLE_SIN: f64 = 0.17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillParams {
    /// A vertex is "on" a plane within this distance (m).
    pub dist_tol_m: f64,
    /// Loops with a vertex farther than this from every structural plane
    /// are left open (m).
    pub snap_radius_m: f64,
}

impl Default for FillParams {
    fn default() -> Self {
        Self {
            dist_tol_m: 0.02,
            snap_radius_m: 0.5,
        }
    }
}

/// A hole that could not be filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoop {
    pub vertices: Vec<usize>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FillOutput {
    pub mesh: TriMesh,
    /// Output face IDs of the new faces, ascending.
    pub filled_faces: Vec<usize>,
    /// Plane ID of each entry of `filled_faces`.
    pub plane_of_filled: Vec<usize>,
    pub open_loops: Vec<OpenLoop>,
}

/// Orthogonal projection of `p` onto the intersection of `planes`. Planes
/// nearly parallel to an earlier one in the list are skipped.
pub fn project_onto_planes(p: &Vec3, planes: &[&Plane]) -> Vec3 {
    let mut basis: Vec<&Plane> = Vec::with_capacity(3);
    for &pl in planes {
        let independent = match basis.len() {
            0 => true,
            1 => basis[0].normal.cross(&pl.normal).norm() > MIN_PLANE_ANGLE_SIN,
            2 => {
                let axis = basis[0].normal.cross(&basis[1].normal).normalize();
                axis.dot(&pl.normal).abs() > MIN_PLANE_ANGLE_SIN
            }
            _ => false,
        };
        if independent {
            basis.push(pl);
        }
    }
    match basis.len() {
        0 => *p,
        1 => basis[0].project(p),
        k => {
            let n = DMatrix::from_fn(k, 3, |i, j| basis[i].normal[j]);
            let r = DVector::from_fn(k, |i, _| basis[i].signed_distance(p));
            let gram = &n * n.transpose();
            match gram.lu().solve(&r) {
                Some(lam) => {
                    let c = n.transpose() * lam;
                    p - Vec3::new(c[0], c[1], c[2])
                }
                None => basis[0].project(p),
            }
        }
    }
}

struct VertexPlanes {
    /// Structural planes within `dist_tol`, nearest first.
    on: Vec<usize>,
    nearest: usize,
}

enum Plan {
    Single(usize),
    Multi { runs: Vec<(usize, Vec<usize>)> },
}

/// Fill each boundary loop with triangles lying on the structural planes
/// its vertices are closest to. Loops spanning two or three planes are split
/// along the plane intersection lines (and the shared corner point).
pub fn fill_holes_plane_extension(
    mesh: &TriMesh,
    loops: &[Vec<usize>],
    decomp: &PlanarDecomposition,
    params: &FillParams,
) -> FillOutput {
    let planes = &decomp.planes;
    let structural: Vec<usize> = decomp.structural_planes().map(|(i, _)| i).collect();
    let mut out = mesh.clone();
    out.texture = None;
    let mut filled: Vec<(usize, usize)> = Vec::new();
    let mut open = Vec::new();
    let mut single: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();

    for lp in loops {
        let info: Vec<VertexPlanes> = match lp
            .iter()
            .map(|&v| vertex_planes(&out.vertices[v], planes, &structural, params))
            .collect::<Result<Vec<_>>>()
        {
            Ok(i) => i,
            Err(e) => {
                open.push(OpenLoop {
                    vertices: lp.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match plan_loop(lp, &info) {
            Ok(Plan::Single(p)) => {
                for (&v, vi) in lp.iter().zip(&info) {
                    out.vertices[v] = snap(&out.vertices[v], p, &vi.on, planes);
                }
                single.entry(p).or_default().push(lp.clone());
            }
            Ok(Plan::Multi { runs }) => {
                fill_multi(&mut out, lp, &info, runs, planes, &mut filled);
            }
            Err(e) => open.push(OpenLoop {
                vertices: lp.clone(),
                reason: e.to_string(),
            }),
        }
    }

    for (p, loops) in single {
        fill_single_plane(&mut out, &planes[p], p, &loops, &mut filled);
    }

    filled.sort_unstable();
    FillOutput {
        mesh: out,
        filled_faces: filled.iter().map(|f| f.0).collect(),
        plane_of_filled: filled.iter().map(|f| f.1).collect(),
        open_loops: open,
    }
}

fn vertex_planes(p: &Vec3, planes: &[Plane], structural: &[usize], params: &FillParams) -> Result<VertexPlanes> {
    let mut by_dist: Vec<(f64, usize)> = structural.iter().map(|&i| (planes[i].distance(p), i)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some(&(d, nearest)) = by_dist.first() else {
        return Err(Error::UnsupportedLoop("no structural planes".into()));
    };
    if d > params.snap_radius_m {
        return Err(Error::UnsupportedLoop(format!(
            "vertex at ({:.3}, {:.3}, {:.3}) is {d:.3} m from the nearest structural plane",
            p.x, p.y, p.z
        )));
    }
    let on = by_dist
        .iter()
        .take_while(|(d, _)| *d <= params.dist_tol_m)
        .map(|&(_, i)| i)
        .collect();
    Ok(VertexPlanes { on, nearest })
}

fn plan_loop(lp: &[usize], info: &[VertexPlanes]) -> Result<Plan> {
    let n = lp.len();
    // A plane every vertex is on: the hole is planar.
    let common = info[0]
        .on
        .iter()
        .copied()
        .find(|p| info.iter().all(|vi| vi.on.contains(p)));
    if let Some(p) = common {
        return Ok(Plan::Single(p));
    }
    if info.iter().all(|vi| vi.nearest == info[0].nearest) {
        return Ok(Plan::Single(info[0].nearest));
    }

    // Assign each vertex a primary plane, sticking with the previous one
    // while the vertex is still on it so corner-line stretches don't flicker.
    let start = info
        .iter()
        .position(|vi| vi.on.len() <= 1)
        .ok_or_else(|| Error::UnsupportedLoop("every vertex lies on a plane intersection".into()))?;
    let mut primary = vec![0usize; n];
    primary[start] = info[start].nearest;
    for k in 1..n {
        let i = (start + k) % n;
        let prev = primary[(i + n - 1) % n];
        primary[i] = if info[i].on.contains(&prev) { prev } else { info[i].nearest };
    }

    let mut runs: Vec<(usize, Vec<usize>)> = Vec::new();
    for k in 0..n {
        let i = (start + k) % n;
        match runs.last_mut() {
            Some((p, r)) if *p == primary[i] => r.push(i),
            _ => runs.push((primary[i], vec![i])),
        }
    }
    if runs.len() > 1 && runs[0].0 == runs.last().unwrap().0 {
        let (_, tail) = runs.pop().unwrap();
        let mut head = tail;
        head.append(&mut runs[0].1);
        runs[0].1 = head;
    }
    let mut distinct: Vec<usize> = runs.iter().map(|r| r.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > 3 {
        return Err(Error::UnsupportedLoop(format!(
            "loop touches {} structural planes",
            distinct.len()
        )));
    }
    if distinct.len() != runs.len() {
        return Err(Error::UnsupportedLoop(
            "loop leaves and re-enters a plane".into(),
        ));
    }
    Ok(Plan::Multi { runs })
}

fn snap(p: &Vec3, primary: usize, on: &[usize], planes: &[Plane]) -> Vec3 {
    let mut set: Vec<&Plane> = vec![&planes[primary]];
    set.extend(on.iter().filter(|&&i| i != primary).map(|&i| &planes[i]));
    project_onto_planes(p, &set)
}

fn fill_multi(
    mesh: &mut TriMesh,
    lp: &[usize],
    info: &[VertexPlanes],
    runs: Vec<(usize, Vec<usize>)>,
    planes: &[Plane],
    filled: &mut Vec<(usize, usize)>,
) {
    let k = runs.len();
    let centroid = lp.iter().map(|&v| mesh.vertices[v]).sum::<Vec3>() / lp.len() as f64;

    // Snap run interiors first; junctions are overwritten below.
    for (p, run) in &runs {
        for &i in run {
            mesh.vertices[lp[i]] = snap(&mesh.vertices[lp[i]], *p, &info[i].on, planes);
        }
    }

    // Junction between run r and run r+1, as a mesh vertex ID.
    let mut junction = Vec::with_capacity(k);
    for r in 0..k {
        let (p, run) = &runs[r];
        let (q, next) = &runs[(r + 1) % k];
        let a = *run.last().unwrap();
        let b = next[0];
        let line = [&planes[*p], &planes[*q]];
        if info[a].on.contains(q) {
            let pos = project_onto_planes(&mesh.vertices[lp[a]], &line);
            mesh.vertices[lp[a]] = pos;
            junction.push(lp[a]);
        } else {
            let mid = (mesh.vertices[lp[a]] + mesh.vertices[lp[b]]) * 0.5;
            let m = mesh.vertices.len();
            mesh.vertices.push(project_onto_planes(&mid, &line));
            split_edge(mesh, lp[a], lp[b], m);
            junction.push(m);
        }
    }
    let corner = (k == 3).then(|| {
        let all: Vec<&Plane> = runs.iter().map(|(p, _)| &planes[*p]).collect();
        let c = mesh.vertices.len();
        mesh.vertices.push(project_onto_planes(&centroid, &all));
        c
    });

    for r in 0..k {
        let (p, run) = &runs[r];
        let mut ring: Vec<usize> = Vec::with_capacity(run.len() + 3);
        let j_in = junction[(r + k - 1) % k];
        if lp[run[0]] != j_in {
            ring.push(j_in);
        }
        ring.extend(run.iter().map(|&i| lp[i]));
        let j_out = junction[r];
        if *ring.last().unwrap() != j_out {
            ring.push(j_out);
        }
        if let Some(c) = corner {
            ring.push(c);
        }
        ring.dedup();
        if ring.len() >= 3 && ring[0] == *ring.last().unwrap() {
            ring.pop();
        }
        if ring.len() < 3 {
            continue;
        }
        emit(mesh, &planes[*p], *p, &ring, &[], filled);
    }
}

/// Replace the face holding edge `a`-`b` by two faces through new vertex `m`.
fn split_edge(mesh: &mut TriMesh, a: usize, b: usize, m: usize) {
    let found = mesh.faces.iter().enumerate().find_map(|(fi, f)| {
        (0..3).find_map(|k| {
            let (x, y) = (f[k], f[(k + 1) % 3]);
            ((x == a && y == b) || (x == b && y == a)).then_some((fi, k))
        })
    });
    let Some((fi, k)) = found else { return };
    let f = mesh.faces[fi];
    let (x, y, z) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
    mesh.faces[fi] = [x, m, z];
    mesh.faces.push([m, y, z]);
    if let Some(l) = &mut mesh.face_labels {
        l.push(l[fi]);
    }
    if let Some(p) = &mut mesh.face_plane {
        p.push(p[fi]);
    }
}

fn fill_single_plane(
    mesh: &mut TriMesh,
    plane: &Plane,
    pid: usize,
    loops: &[Vec<usize>],
    filled: &mut Vec<(usize, usize)>,
) {
    let (u, v) = plane.basis();
    let origin = plane.normal * plane.offset;
    let to2 = |p: &Vec3| -> P2 { [(p - origin).dot(&u), (p - origin).dot(&v)] };
    let polys: Vec<Vec<P2>> = loops
        .iter()
        .map(|lp| lp.iter().map(|&i| to2(&mesh.vertices[i])).collect())
        .collect();
    let areas: Vec<f64> = polys
        .iter()
        .map(|pts| signed_area(pts, &(0..pts.len()).collect::<Vec<_>>()))
        .collect();

    // Negative loops inside a positive one are islands left standing in a
    // larger hole; attach each to the smallest enclosing outer loop.
    let mut holes: Vec<Vec<usize>> = vec![Vec::new(); loops.len()];
    let mut attached = vec![false; loops.len()];
    for i in 0..loops.len() {
        if areas[i] >= 0.0 {
            continue;
        }
        let probe = polys[i][0];
        let host = (0..loops.len())
            .filter(|&j| areas[j] > 0.0 && point_in_polygon(probe, &polys[j]))
            .min_by(|&a, &b| areas[a].total_cmp(&areas[b]));
        if let Some(j) = host {
            holes[j].push(i);
            attached[i] = true;
        }
    }
    for i in 0..loops.len() {
        if attached[i] {
            continue;
        }
        let hs: Vec<&[usize]> = holes[i].iter().map(|&h| loops[h].as_slice()).collect();
        emit(mesh, plane, pid, &loops[i], &hs, filled);
    }
}

fn point_in_polygon(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Triangulate `ring` (minus `holes`) in the plane's coordinates and append
/// the faces.
fn emit(
    mesh: &mut TriMesh,
    plane: &Plane,
    pid: usize,
    ring: &[usize],
    holes: &[&[usize]],
    filled: &mut Vec<(usize, usize)>,
) {
    let (u, v) = plane.basis();
    let origin = plane.normal * plane.offset;
    let mut ids: Vec<usize> = ring.to_vec();
    for h in holes {
        ids.extend_from_slice(h);
    }
    let pts: Vec<P2> = ids
        .iter()
        .map(|&i| {
            let d = mesh.vertices[i] - origin;
            [d.dot(&u), d.dot(&v)]
        })
        .collect();
    let outer: Vec<usize> = (0..ring.len()).collect();
    let mut next = ring.len();
    let hole_rings: Vec<Vec<usize>> = holes
        .iter()
        .map(|h| {
            let r = (next..next + h.len()).collect();
            next += h.len();
            r
        })
        .collect();
    let tris = triangulate_with_holes(&pts, &outer, &hole_rings);
    let labels_present = mesh.face_labels.is_some();
    let planes_len = mesh.faces.len();
    let face_plane = mesh.face_plane.get_or_insert_with(|| vec![None; planes_len]);
    for t in tris {
        let f = mesh.faces.len();
        mesh.faces.push(t.map(|i| ids[i]));
        face_plane.push(Some(pid));
        filled.push((f, pid));
    }
    if labels_present {
        let l = mesh.face_labels.as_mut().unwrap();
        l.resize(mesh.faces.len(), FaceLabel::Structure);
    }
}
