//! Re-texturing a mesh from posed panoramas: best-view selection per face
//! and baking into a shelf-packed atlas with one chart per plane.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, RgbImage};
use crate::mesh::{Bvh, FaceUvs, Plane, TriMesh, Vec3};
use crate::pano::{point_to_pixel, EquirectCamera, Pose};

/// Occluders closer than this to the face are ignored (m).
pub const VISIBILITY_TOL: f64 = 0.01;

const GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct PosedPano {
    pub camera: EquirectCamera,
    pub pose: Pose,
    pub image: RgbImage,
}

impl PosedPano {
    pub fn new(pose: Pose, image: RgbImage) -> Result<Self> {
        let camera = EquirectCamera::new(image.width, image.height)?;
        Ok(Self { camera, pose, image })
    }

    /// Bilinear lookup at continuous pixel coordinates (integer = pixel
    /// center), wrapping columns and clamping rows.
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let img = &self.image;
        let (w, h) = (img.width as isize, img.height as isize);
        let v = v.clamp(0.0, (h - 1) as f64);
        let (x0f, y0f) = (u.floor(), v.floor());
        let (tx, ty) = (u - x0f, v - y0f);
        let x0 = (x0f as isize).rem_euclid(w) as usize;
        let x1 = (x0 + 1) % w as usize;
        let y0 = y0f as usize;
        let y1 = (y0 + 1).min(h as usize - 1);
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let g = |x: usize, y: usize| img.get(x, y, k) as f64;
            *o = (1.0 - ty) * ((1.0 - tx) * g(x0, y0) + tx * g(x1, y0)) + ty * ((1.0 - tx) * g(x0, y1) + tx * g(x1, y1));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    /// Texels per meter.
    pub texel_density: f64,
    pub max_atlas: usize,
    /// Texels of margin around each chart.
    pub padding: usize,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            texel_density: 100.0,
            max_atlas: 8192,
            padding: 2,
        }
    }
}

/// A rectangle of the atlas holding one planar group of faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub faces: Vec<usize>,
    /// 3D point at chart-local texel coordinate (padding, padding).
    pub origin: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    /// Atlas placement, in texels.
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone)]
pub struct TexturedSdm {
    /// Input mesh with per-face UVs (OBJ convention, v up).
    pub mesh: TriMesh,
    pub atlas: RgbImage,
    pub face_view: Vec<Option<usize>>,
    pub unseen_faces: Vec<usize>,
    pub charts: Vec<Chart>,
    pub density: f64,
    pub padding: usize,
}

impl TexturedSdm {
    /// In-plane 3D point at the center of chart texel `(i, j)`.
    pub fn texel_point(&self, chart: &Chart, i: usize, j: usize) -> Vec3 {
        let s = (i as f64 + 0.5 - self.padding as f64) / self.density;
        let t = (j as f64 + 0.5 - self.padding as f64) / self.density;
        chart.origin + chart.axis_u * s + chart.axis_v * t
    }
}

/// Per face, the pano with the highest `visible · |cos| / d²`, where the
/// ray from the pano center to the face centroid must not hit anything
/// closer than `VISIBILITY_TOL` before the face. Ties go to the lowest ID;
/// faces no pano sees get `None`.
pub fn select_views(mesh: &TriMesh, panos: &[PosedPano]) -> Vec<Option<usize>> {
    let bvh = Bvh::new(mesh);
    (0..mesh.faces.len())
        .into_par_iter()
        .map(|f| {
            let c = mesh.face_centroid(f);
            let n = mesh.face_normal(f);
            let mut best: Option<(usize, f64)> = None;
            for (k, p) in panos.iter().enumerate() {
                let o = p.pose.position;
                let d = (c - o).norm();
                if d <= VISIBILITY_TOL {
                    continue;
                }
                let dir = (c - o) / d;
                if bvh.intersect_within(&o, &dir, d - VISIBILITY_TOL).is_some() {
                    continue;
                }
                let score = n.dot(&dir).abs() / (d * d);
                if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                    best = Some((k, score));
                }
            }
            best.map(|(k, _)| k)
        })
        .collect()
}

/// Chart grouping key: the face's plane, or the face itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Plane(usize),
    Face(usize),
}

struct Layout {
    faces: Vec<usize>,
    origin: Vec3,
    axis_u: Vec3,
    axis_v: Vec3,
    width: usize,
    height: usize,
}

/// 2D convex hull (monotone chain), counter-clockwise.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let ordered: Vec<[f64; 2]> = if pass == 0 { pts.clone() } else { pts.iter().rev().copied().collect() };
        for p in ordered {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// In-plane axes that depend only on the geometry, not on the world frame:
/// the minimum-area bounding rectangle of the group, rotated so the anchor
/// vertex sits closest to the chart's low corner.
fn intrinsic_axes(points: &[Vec3], normal: &Vec3, anchor: &Vec3) -> (Vec3, Vec3) {
    let (t1, t2) = Plane::through(anchor, normal).basis();
    let flat: Vec<[f64; 2]> = points.iter().map(|p| [(p - anchor).dot(&t1), (p - anchor).dot(&t2)]).collect();
    let hull = convex_hull(flat);
    let extent = |u: [f64; 2]| {
        let v = [-u[1], u[0]];
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &hull {
            let q = [p[0] * u[0] + p[1] * u[1], p[0] * v[0] + p[1] * v[1]];
            for a in 0..2 {
                lo[a] = lo[a].min(q[a]);
                hi[a] = hi[a].max(q[a]);
            }
        }
        (lo, hi)
    };
    let mut dirs = Vec::new();
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len > 1e-12 {
            dirs.push([(b[0] - a[0]) / len, (b[1] - a[1]) / len]);
        }
    }
    if dirs.is_empty() {
        return (t1, t2);
    }
    let area = |u: [f64; 2]| {
        let (lo, hi) = extent(u);
        (hi[0] - lo[0]) * (hi[1] - lo[1])
    };
    let best = dirs.iter().map(|&u| area(u)).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.max(1e-12);
    let mut candidates = Vec::new();
    for &u in dirs.iter().filter(|&&u| area(u) <= best + tol) {
        let mut r = u;
        for _ in 0..4 {
            candidates.push(r);
            r = [-r[1], r[0]];
        }
    }
    // The anchor is the origin of the flat coordinates; prefer it nearest
    // the low corner, v first.
    let key = |u: [f64; 2]| {
        let (lo, _) = extent(u);
        (-lo[1], -lo[0])
    };
    let mut pick = candidates[0];
    for &c in &candidates[1..] {
        let (kc, kp) = (key(c), key(pick));
        if kc.0 < kp.0 - 1e-9 || ((kc.0 - kp.0).abs() <= 1e-9 && kc.1 < kp.1 - 1e-9) {
            pick = c;
        }
    }
    let u = t1 * pick[0] + t2 * pick[1];
    (u, normal.cross(&u))
}

fn layout_group(mesh: &TriMesh, faces: Vec<usize>, params: &TextureParams) -> Layout {
    let normal = faces
        .iter()
        .map(|&f| mesh.face_cross(f))
        .fold(Vec3::zeros(), |a, b| a + b)
        .try_normalize(0.0)
        .unwrap_or_else(|| mesh.face_normal(faces[0]));
    let anchor = mesh.vertices[mesh.faces[faces[0]][0]];
    let points: Vec<Vec3> = faces.iter().flat_map(|&f| mesh.triangle(f)).collect();
    let (axis_u, axis_v) = intrinsic_axes(&points, &normal, &anchor);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &points {
        let q = [(p - anchor).dot(&axis_u), (p - anchor).dot(&axis_v)];
        for a in 0..2 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    let size = |a: usize| ((hi[a] - lo[a]) * params.texel_density).ceil().max(1.0) as usize + 2 * params.padding;
    let origin = anchor + axis_u * lo[0] + axis_v * lo[1];
    Layout {
        faces,
        origin,
        axis_u,
        axis_v,
        width: size(0),
        height: size(1),
    }
}

/// Shelf packing, tallest first. Returns placements and atlas size.
fn pack(sizes: &[(usize, usize)], max: usize) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    let area: usize = sizes.iter().map(|(w, h)| w * h).sum();
    let widest = sizes.iter().map(|s| s.0).max().unwrap_or(1);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(a.cmp(&b)));
    let mut width = ((area as f64).sqrt().ceil() as usize).max(widest).max(1).next_power_of_two();
    loop {
        let mut pos = vec![(0, 0); sizes.len()];
        let (mut x, mut y, mut shelf) = (0, 0, 0);
        for &i in &order {
            let (w, h) = sizes[i];
            if x + w > width {
                y += shelf;
                x = 0;
                shelf = 0;
            }
            pos[i] = (x, y);
            x += w;
            shelf = shelf.max(h);
        }
        let height = y + shelf;
        if width <= max && height <= max {
            return Ok((pos, width, height.max(1)));
        }
        if width >= max || height <= width {
            return Err(Error::AtlasOverflow {
                needed: width.max(height),
                max,
            });
        }
        width = (width * 2).min(max);
    }
}

fn barycentric(p: [f64; 2], t: &[[f64; 2]; 3]) -> [f64; 3] {
    let [a, b, c] = t;
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    [l0, l1, 1.0 - l0 - l1]
}

struct ChartBake {
    texels: Vec<[u8; 3]>,
    seen: Vec<bool>,
}

/// Chart-local texel coordinates of a 3D point.
fn to_chart(l: &Layout, p: &Vec3, params: &TextureParams) -> [f64; 2] {
    let d = p - l.origin;
    [
        d.dot(&l.axis_u) * params.texel_density + params.padding as f64,
        d.dot(&l.axis_v) * params.texel_density + params.padding as f64,
    ]
}

fn bake_chart(mesh: &TriMesh, l: &Layout, panos: &[PosedPano], choice: &[Option<usize>], params: &TextureParams) -> ChartBake {
    let (w, h) = (l.width, l.height);
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    let mut queue = VecDeque::new();
    let tris: Vec<[[f64; 2]; 3]> = l
        .faces
        .iter()
        .map(|&f| mesh.triangle(f).map(|p| to_chart(l, &p, params)))
        .collect();
    for (k, t) in tris.iter().enumerate() {
        let x0 = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(w);
        let y0 = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                if owner[i].is_some() {
                    continue;
                }
                let b = barycentric([x as f64 + 0.5, y as f64 + 0.5], t);
                if b.iter().all(|&v| v >= -1e-9) {
                    owner[i] = Some(k);
                    queue.push_back(i);
                }
            }
        }
    }
    if queue.is_empty() {
        // Sliver smaller than a texel: give it the whole chart.
        owner.iter_mut().for_each(|o| *o = Some(0));
    }
    // Padding and gaps take the nearest owner (BFS order), so every chart
    // texel is written.
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let nb = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for j in nb.into_iter().flatten() {
            if owner[j].is_none() {
                owner[j] = owner[i];
                queue.push_back(j);
            }
        }
    }

    let mut texels = vec![GRAY; w * h];
    let mut seen = vec![false; w * h];
    for i in 0..w * h {
        let k = owner[i].expect("flooded");
        let f = l.faces[k];
        let Some(view) = choice[f] else { continue };
        let b = barycentric([(i % w) as f64 + 0.5, (i / w) as f64 + 0.5], &tris[k]);
        let [a, bb, c] = mesh.triangle(f);
        let p = a * b[0] + bb * b[1] + c * b[2];
        let pano = &panos[view];
        let Ok((u, v, _)) = point_to_pixel(&pano.camera, &pano.pose, &p) else {
            continue;
        };
        let s = pano.sample(u, v);
        texels[i] = s.map(|x| x.round().clamp(0.0, 255.0) as u8);
        seen[i] = true;
    }
    ChartBake { texels, seen }
}

/// Bake an atlas for `mesh` from `panos` using the per-face `choice` (see
/// [`select_views`]). Faces sharing a plane share one chart. Texels of
/// unseen faces get the mean of their chart's seen texels, or mid-gray.
pub fn bake_texture(mesh: &TriMesh, panos: &[PosedPano], choice: &[Option<usize>], params: &TextureParams) -> Result<TexturedSdm> {
    if choice.len() != mesh.faces.len() {
        return Err(Error::MismatchedInput(format!(
            "{} view choices for {} faces",
            choice.len(),
            mesh.faces.len()
        )));
    }
    if let Some(&bad) = choice.iter().flatten().find(|&&k| k >= panos.len()) {
        return Err(Error::MismatchedInput(format!("view {bad} but only {} panoramas", panos.len())));
    }
    if !(params.texel_density > 0.0 && params.texel_density.is_finite()) {
        return Err(Error::Config(format!("texel density must be positive, got {}", params.texel_density)));
    }

    let mut groups: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
    for f in 0..mesh.faces.len() {
        let key = match mesh.face_plane.as_ref().and_then(|p| p[f]) {
            Some(p) => Group::Plane(p),
            None => Group::Face(f),
        };
        groups.entry(key).or_default().push(f);
    }
    let layouts: Vec<Layout> = groups.into_values().map(|faces| layout_group(mesh, faces, params)).collect();
    let sizes: Vec<(usize, usize)> = layouts.iter().map(|l| (l.width, l.height)).collect();
    let (pos, aw, ah) = pack(&sizes, params.max_atlas)?;

    let baked: Vec<ChartBake> = layouts.par_iter().map(|l| bake_chart(mesh, l, panos, choice, params)).collect();

    let mut atlas = Image::new(aw, ah, 3, 0u8);
    let mut written = vec![false; aw * ah];
    let mut total = [0.0f64; 3];
    let mut total_n = 0usize;
    let mut charts = Vec::with_capacity(layouts.len());
    let mut uvs = vec![[[0.0; 2]; 3]; mesh.faces.len()];
    for ((l, mut b), &(cx, cy)) in layouts.iter().zip(baked).zip(&pos) {
        let mut sum = [0.0f64; 3];
        let n = b.seen.iter().filter(|&&s| s).count();
        for (t, _) in b.texels.iter().zip(&b.seen).filter(|(_, s)| **s) {
            for k in 0..3 {
                sum[k] += t[k] as f64;
            }
        }
        if n > 0 {
            let mean = sum.map(|s| (s / n as f64).round() as u8);
            for (t, s) in b.texels.iter_mut().zip(&b.seen) {
                if !s {
                    *t = mean;
                }
            }
        }
        for j in 0..l.height {
            for i in 0..l.width {
                let t = b.texels[j * l.width + i];
                let (x, y) = (cx + i, cy + j);
                for k in 0..3 {
                    atlas.set(x, y, k, t[k]);
                    total[k] += t[k] as f64;
                }
                written[y * aw + x] = true;
                total_n += 1;
            }
        }
        for &f in &l.faces {
            uvs[f] = mesh.triangle(f).map(|p| {
                let q = to_chart(l, &p, params);
                [(cx as f64 + q[0]) / aw as f64, 1.0 - (cy as f64 + q[1]) / ah as f64]
            });
        }
        charts.push(Chart {
            faces: l.faces.clone(),
            origin: l.origin,
            axis_u: l.axis_u,
            axis_v: l.axis_v,
            x: cx,
            y: cy,
            width: l.width,
            height: l.height,
        });
    }
    // Texels between charts get the atlas mean so mip filtering stays tame.
    let mean = if total_n > 0 {
        total.map(|s| (s / total_n as f64).round() as u8)
    } else {
        GRAY
    };
    for (i, w) in written.iter().enumerate() {
        if !w {
            atlas.data[i * 3..i * 3 + 3].copy_from_slice(&mean);
        }
    }

    let mut out = mesh.clone();
    out.texture = Some(FaceUvs {
        uvs,
        atlas: Some("atlas.png".into()),
    });
    let unseen_faces = (0..mesh.faces.len()).filter(|&f| choice[f].is_none()).collect();
    Ok(TexturedSdm {
        mesh: out,
        atlas,
        face_view: choice.to_vec(),
        unseen_faces,
        charts,
        density: params.texel_density,
        padding: params.padding,
    })
}
