//! Synthetic benchmark: empty box rooms, primitive furniture with
//! approximate floor shadows, rendered furnished/empty panorama pairs with
//! exact furniture masks, and scoring of pipeline outputs against them.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_binary_mask, read_rgb, write_mask, write_rgb, Image, Mask, RgbImage};
use crate::mesh::{load_mesh, save_mesh, Bvh, TriMesh, Vec3};
use crate::metrics::{cloud_to_mesh_rmse, image_metrics, psnr_from_mse, MetricReport};
use crate::pano::{render_geometry_with, save_manifest, EquirectCamera, PanoEntry, Pose, NO_FACE};
use crate::sdm::triangulate::triangulate_with_holes;

/// Panorama centers must be at least this far from every wall (m).
pub const PANO_WALL_CLEARANCE: f64 = 0.5;
/// Footprints keep this gap to the walls and to each other so the floor
/// can be cut around them (m).
pub const FOOTPRINT_GAP: f64 = 0.05;
pub const SHADOW_FACTOR: f64 = 0.6;
/// Shadow ellipse semi-axes relative to the footprint half-extents.
pub const SHADOW_SCALE: f64 = 1.25;
const CYLINDER_SEGMENTS: usize = 24;
const LIGHT_BELOW_CEILING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub shape: Shape,
    /// Footprint extents along the rotated x/y axes and height (m). A
    /// cylinder's footprint is the ellipse inscribed in that rectangle.
    pub size: [f64; 3],
    /// Footprint center and base height.
    pub position: [f64; 3],
    /// Rotation about +z (radians).
    #[serde(default)]
    pub yaw: f64,
}

impl Furniture {
    fn footprint_radius(&self) -> f64 {
        0.5 * self.size[0].hypot(self.size[1])
    }

    fn on_floor(&self) -> bool {
        self.position[2].abs() < 1e-9
    }

    /// Counter-clockwise footprint ring (seen from above), z = 0.
    fn footprint(&self) -> Vec<[f64; 2]> {
        let (hx, hy) = (0.5 * self.size[0], 0.5 * self.size[1]);
        let local: Vec<[f64; 2]> = match self.shape {
            Shape::Box => vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]],
            Shape::Cylinder => (0..CYLINDER_SEGMENTS)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / CYLINDER_SEGMENTS as f64;
                    [hx * a.cos(), hy * a.sin()]
                })
                .collect(),
        };
        let (s, c) = self.yaw.sin_cos();
        local
            .into_iter()
            .map(|[x, y]| [self.position[0] + c * x - s * y, self.position[1] + s * x + c * y])
            .collect()
    }

    /// Is floor point `(x, y)` inside the shadow ellipse?
    fn shadows(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.position[0], y - self.position[1]);
        let (s, c) = self.yaw.sin_cos();
        let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
        let (ax, ay) = (SHADOW_SCALE * 0.5 * self.size[0], SHADOW_SCALE * 0.5 * self.size[1]);
        (lx / ax).powi(2) + (ly / ay).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Width (x), depth (y), height (z) in meters; the room spans
    /// `[0, w] × [0, d] × [0, h]`.
    pub room: [f64; 3],
    pub panos: Vec<[f64; 3]>,
    #[serde(default)]
    pub furniture: Vec<Furniture>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pano_width")]
    pub pano_width: usize,
    /// Wall and ceiling tessellation step (m).
    #[serde(default = "default_grid")]
    pub grid: f64,
}

fn default_pano_width() -> usize {
    512
}

fn default_grid() -> f64 {
    0.25
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [w, d, h] = self.room;
        if !(w > 1.0 && d > 1.0 && h > 1.0) || !self.room.iter().all(|v| v.is_finite()) {
            return Err(Error::Spec(format!("room {w}x{d}x{h} must exceed 1 m per side")));
        }
        if !(self.grid > 0.0 && self.grid <= w.min(d).min(h)) {
            return Err(Error::Spec(format!("grid step {} out of range", self.grid)));
        }
        EquirectCamera::new(self.pano_width, self.pano_width / 2).map_err(|e| Error::Spec(e.to_string()))?;
        if self.panos.is_empty() {
            return Err(Error::Spec("scene needs at least one panorama".into()));
        }
        for (i, f) in self.furniture.iter().enumerate() {
            if !f.size.iter().all(|s| *s > 0.0 && s.is_finite()) || !f.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Spec(format!("furniture {i} has invalid size or position")));
            }
            let r = f.footprint_radius() + FOOTPRINT_GAP;
            let [x, y, z] = f.position;
            if x - r < 0.0 || y - r < 0.0 || x + r > w || y + r > d || z < 0.0 || z + f.size[2] > h - FOOTPRINT_GAP {
                return Err(Error::Spec(format!("furniture {i} is outside the room")));
            }
            for (j, g) in self.furniture.iter().enumerate().take(i) {
                let dist = (x - g.position[0]).hypot(y - g.position[1]);
                if dist < r + g.footprint_radius() {
                    return Err(Error::Spec(format!("furniture {i} overlaps furniture {j}")));
                }
            }
        }
        for (i, p) in self.panos.iter().enumerate() {
            let c = PANO_WALL_CLEARANCE;
            if p[0] < c || p[1] < c || p[0] > w - c || p[1] > d - c || p[2] <= 0.0 || p[2] >= h {
                return Err(Error::Spec(format!("pano {i} is not inside the room with {c} m clearance")));
            }
            for (j, f) in self.furniture.iter().enumerate() {
                let inside = (p[0] - f.position[0]).hypot(p[1] - f.position[1]) < f.footprint_radius()
                    && p[2] >= f.position[2]
                    && p[2] <= f.position[2] + f.size[2];
                if inside {
                    return Err(Error::Spec(format!("pano {i} is inside furniture {j}")));
                }
            }
        }
        Ok(())
    }

    pub fn camera(&self) -> EquirectCamera {
        EquirectCamera::new(self.pano_width, self.pano_width / 2).expect("validated")
    }
}

/// What a face is made of; drives the procedural material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Floor,
    Ceiling,
    Wall,
    Furniture(usize),
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub spec: SceneSpec,
    pub empty_mesh: TriMesh,
    pub furnished_mesh: TriMesh,
    /// Per furnished face.
    pub surfaces: Vec<Surface>,
    pub poses: Vec<Pose>,
    pub empty_panos: Vec<RgbImage>,
    pub furnished_panos: Vec<RgbImage>,
    /// Exact furniture visibility per furnished pano.
    pub masks: Vec<Mask>,
}

impl SynthScene {
    pub fn is_furniture_face(&self, f: usize) -> bool {
        matches!(self.surfaces[f], Surface::Furniture(_))
    }
}

struct MeshBuilder {
    mesh: TriMesh,
    surfaces: Vec<Surface>,
}

impl MeshBuilder {
    fn push(&mut self, verts: Vec<Vec3>, faces: Vec<[usize; 3]>, s: Surface) {
        self.surfaces.extend(std::iter::repeat_n(s, faces.len()));
        let off = self.mesh.vertices.len();
        self.mesh.vertices.extend(verts);
        self.mesh.faces.extend(faces.into_iter().map(|f| f.map(|i| i + off)));
    }

    /// Grid of `na × nb` quads spanned by `a` and `b` from `o`; `a × b`
    /// is the front side.
    fn grid(&mut self, o: Vec3, a: Vec3, b: Vec3, na: usize, nb: usize, s: Surface) {
        let mut v = Vec::new();
        for j in 0..=nb {
            for i in 0..=na {
                v.push(o + a * (i as f64 / na as f64) + b * (j as f64 / nb as f64));
            }
        }
        let mut f = Vec::new();
        for j in 0..nb {
            for i in 0..na {
                let c = j * (na + 1) + i;
                f.push([c, c + 1, c + na + 2]);
                f.push([c, c + na + 2, c + na + 1]);
            }
        }
        self.push(v, f, s);
    }

    /// Weld and drop nothing else; surfaces stay aligned because welding
    /// only removes collapsed faces, which the builders never produce.
    fn finish(mut self) -> Result<(TriMesh, Vec<Surface>)> {
        let n = self.mesh.faces.len();
        self.mesh.weld(1e-7);
        if self.mesh.faces.len() != n {
            return Err(Error::Spec("scene geometry produced degenerate faces".into()));
        }
        self.mesh.validate()?;
        Ok((self.mesh, self.surfaces))
    }
}

/// Room shell; the floor is cut around the on-floor footprints.
fn build_mesh(spec: &SceneSpec, furniture: &[Furniture]) -> Result<(TriMesh, Vec<Surface>)> {
    let [w, d, h] = spec.room;
    let n = |len: f64| ((len / spec.grid).round() as usize).max(1);
    let (nx, ny, nz) = (n(w), n(d), n(h));
    let mut b = MeshBuilder {
        mesh: TriMesh::empty(),
        surfaces: Vec::new(),
    };
    let (x, y, z) = (Vec3::x() * w, Vec3::y() * d, Vec3::z() * h);
    b.grid(z, y, x, ny, nx, Surface::Ceiling);
    b.grid(Vec3::zeros(), z, x, nz, nx, Surface::Wall);
    b.grid(y, x, z, nx, nz, Surface::Wall);
    b.grid(Vec3::zeros(), y, z, ny, nz, Surface::Wall);
    b.grid(x, z, y, nz, ny, Surface::Wall);

    // Floor: boundary ring matching the wall bottoms, counter-clockwise
    // from above so faces point up.
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..nx {
        pts.push([w * i as f64 / nx as f64, 0.0]);
    }
    for j in 0..ny {
        pts.push([w, d * j as f64 / ny as f64]);
    }
    for i in (1..=nx).rev() {
        pts.push([w * i as f64 / nx as f64, d]);
    }
    for j in (1..=ny).rev() {
        pts.push([0.0, d * j as f64 / ny as f64]);
    }
    let outer: Vec<usize> = (0..pts.len()).collect();
    let mut holes = Vec::new();
    for f in furniture.iter().filter(|f| f.on_floor()) {
        let ring = f.footprint();
        holes.push((pts.len()..pts.len() + ring.len()).collect::<Vec<_>>());
        pts.extend(ring);
    }
    let tris = triangulate_with_holes(&pts, &outer, &holes);
    let verts = pts.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect();
    b.push(verts, tris, Surface::Floor);

    for (i, f) in furniture.iter().enumerate() {
        let ring = f.footprint();
        let (z0, z1) = (f.position[2], f.position[2] + f.size[2]);
        let k = ring.len();
        let mut v: Vec<Vec3> = ring.iter().map(|p| Vec3::new(p[0], p[1], z0)).collect();
        v.extend(ring.iter().map(|p| Vec3::new(p[0], p[1], z1)));
        v.push(Vec3::new(f.position[0], f.position[1], z1));
        let mut faces = Vec::new();
        for a in 0..k {
            let bb = (a + 1) % k;
            faces.push([a, bb, k + bb]);
            faces.push([a, k + bb, k + a]);
            faces.push([2 * k, k + a, k + bb]);
        }
        if !f.on_floor() {
            v.push(Vec3::new(f.position[0], f.position[1], z0));
            for a in 0..k {
                faces.push([2 * k + 1, (a + 1) % k, a]);
            }
        }
        b.push(v, faces, Surface::Furniture(i));
    }
    b.finish()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded value noise in [-1, 1] on 8 cm cells.
fn grain(p: &Vec3, seed: u64) -> f64 {
    let c = |v: f64| (v / 0.08).floor() as i64 as u64;
    let h = splitmix(seed ^ splitmix(c(p.x) ^ splitmix(c(p.y).wrapping_add(splitmix(c(p.z))))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

const FURNITURE_COLORS: [[f64; 3]; 5] = [
    [170.0, 40.0, 40.0],
    [40.0, 70.0, 170.0],
    [40.0, 140.0, 60.0],
    [200.0, 150.0, 30.0],
    [120.0, 50.0, 140.0],
];

fn albedo(s: Surface) -> [f64; 3] {
    match s {
        Surface::Floor => [150.0, 118.0, 86.0],
        Surface::Ceiling => [235.0, 233.0, 228.0],
        Surface::Wall => [210.0, 204.0, 192.0],
        Surface::Furniture(i) => FURNITURE_COLORS[i % FURNITURE_COLORS.len()],
    }
}

/// Lambertian shading under one ceiling light, with per-surface grain and
/// the floor shadow ellipses of `shadows`.
fn shade(spec: &SceneSpec, mesh: &TriMesh, surfaces: &[Surface], shadows: &[Furniture], pose: &Pose) -> (RgbImage, Image<u32>) {
    let cam = spec.camera();
    let bvh = Bvh::new(mesh);
    let r = render_geometry_with(mesh, &bvh, &cam, pose);
    let depth = r.depth_image();
    let normal = r.normal_image();
    let light = Vec3::new(0.5 * spec.room[0], 0.5 * spec.room[1], spec.room[2] - LIGHT_BELOW_CEILING);
    let (w, h) = (cam.width, cam.height);
    let mut img = Image::new(w, h, 3, 0u8);
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![0u8; 3 * w];
            for u in 0..w {
                let i = v * w + u;
                let f = r.face_id.data[i];
                if f == NO_FACE {
                    continue;
                }
                let s = surfaces[f as usize];
                let dir = pose.rotation * cam.direction(u as f64, v as f64);
                let p = pose.position + dir * depth.data[i];
                let n = Vec3::new(normal.data[3 * i], normal.data[3 * i + 1], normal.data[3 * i + 2]);
                let l = (light - p).normalize();
                let lambert = n.dot(&l).max(0.0);
                let mut k = (0.45 + 0.55 * lambert) * (1.0 + 0.05 * grain(&p, spec.seed));
                if s == Surface::Floor && shadows.iter().any(|sf| sf.shadows(p.x, p.y)) {
                    k *= SHADOW_FACTOR;
                }
                let a = albedo(s);
                for c in 0..3 {
                    row[3 * u + c] = (a[c] * k).round().clamp(0.0, 255.0) as u8;
                }
            }
            row
        })
        .collect();
    for (v, row) in rows.into_iter().enumerate() {
        img.data[v * 3 * w..(v + 1) * 3 * w].copy_from_slice(&row);
    }
    (img, r.face_id)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let (empty_mesh, empty_surf) = build_mesh(spec, &[])?;
    let (furnished_mesh, surfaces) = build_mesh(spec, &spec.furniture)?;
    let poses: Vec<Pose> = spec.panos.iter().map(|p| Pose::at(Vec3::new(p[0], p[1], p[2]))).collect();
    let mut empty_panos = Vec::new();
    let mut furnished_panos = Vec::new();
    let mut masks = Vec::new();
    for pose in &poses {
        let (e, _) = shade(spec, &empty_mesh, &empty_surf, &[], pose);
        let (f, ids) = shade(spec, &furnished_mesh, &surfaces, &spec.furniture, pose);
        masks.push(ids.map(|id| id != NO_FACE && matches!(surfaces[id as usize], Surface::Furniture(_))));
        empty_panos.push(e);
        furnished_panos.push(f);
    }
    Ok(SynthScene {
        spec: spec.clone(),
        empty_mesh,
        furnished_mesh,
        surfaces,
        poses,
        empty_panos,
        furnished_panos,
        masks,
    })
}

pub fn scene_dir_name(index: usize) -> String {
    format!("scene_{index:03}")
}

pub fn pano_name(i: usize) -> String {
    format!("pano_{i:03}.png")
}

pub fn mask_name(i: usize) -> String {
    format!("mask_{i:03}.png")
}

/// Write `scene_###/{empty,furnished}/{mesh.ply, pano_###.png,
/// mask_###.png, poses.json}` plus the spec, returning the scene directory.
pub fn write_scene(scene: &SynthScene, root: &Path, index: usize) -> Result<PathBuf> {
    let dir = root.join(scene_dir_name(index));
    let variants = [
        ("empty", &scene.empty_mesh, &scene.empty_panos, false),
        ("furnished", &scene.furnished_mesh, &scene.furnished_panos, true),
    ];
    for (name, mesh, panos, with_masks) in variants {
        let sub = dir.join(name);
        save_mesh(mesh, &sub.join("mesh.ply"))?;
        let mut entries = Vec::new();
        for (i, (img, pose)) in panos.iter().zip(&scene.poses).enumerate() {
            write_rgb(&sub.join(pano_name(i)), img)?;
            let mask = if with_masks {
                scene.masks[i].clone()
            } else {
                Image::new(img.width, img.height, 1, false)
            };
            write_mask(&sub.join(mask_name(i)), &mask)?;
            entries.push(PanoEntry {
                id: format!("{i:03}"),
                image: pano_name(i),
                mask: Some(mask_name(i)),
                position: pose.position.into(),
                rotation_wxyz: pose.wxyz(),
            });
        }
        save_manifest(&sub.join("poses.json"), &entries)?;
    }
    let spec_path = dir.join("spec.json");
    let text = serde_json::to_string_pretty(&scene.spec).expect("spec serializes");
    std::fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(dir)
}

/// Generate and write every scene (in parallel; output is independent of
/// the thread count).
pub fn write_dataset(specs: &[SceneSpec], root: &Path) -> Result<Vec<PathBuf>> {
    specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| write_scene(&generate_scene(s)?, root, i))
        .collect()
}

/// Three desk-scale rooms with four panoramas and up to five pieces each.
pub fn desk_suite(seed: u64) -> Vec<SceneSpec> {
    let rooms = [[4.0, 3.5, 2.7], [5.0, 4.0, 2.8], [3.5, 3.0, 2.6]];
    rooms
        .iter()
        .enumerate()
        .map(|(k, &room)| random_scene(room, 4, 5, seed.wrapping_mul(1000).wrapping_add(k as u64)))
        .collect()
}

/// Rejection-sampled scene: up to `max_furniture` non-overlapping pieces on
/// the floor, then `n_panos` camera positions clear of walls and furniture.
pub fn random_scene(room: [f64; 3], n_panos: usize, max_furniture: usize, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [w, d, _] = room;
    let mut spec = SceneSpec {
        room,
        panos: Vec::new(),
        furniture: Vec::new(),
        seed,
        pano_width: default_pano_width(),
        grid: default_grid(),
    };
    let count = rng.random_range(1..=max_furniture);
    let mut tries = 0;
    while spec.furniture.len() < count && tries < 500 {
        tries += 1;
        let shape = if rng.random_bool(0.3) { Shape::Cylinder } else { Shape::Box };
        let size = [rng.random_range(0.4..1.2), rng.random_range(0.4..1.0), rng.random_range(0.4..1.1)];
        let f = Furniture {
            shape,
            size,
            position: [rng.random_range(0.0..w), rng.random_range(0.0..d), 0.0],
            yaw: rng.random_range(0.0..std::f64::consts::PI),
        };
        spec.furniture.push(f);
        spec.panos = vec![[w / 2.0, d / 2.0, 1.0]];
        if spec.validate().is_err() || too_close(&spec, [w / 2.0, d / 2.0]) {
            spec.furniture.pop();
        }
    }
    spec.panos.clear();
    let mut tries = 0;
    while spec.panos.len() < n_panos && tries < 5000 {
        tries += 1;
        let c = PANO_WALL_CLEARANCE + 0.1;
        let p = [rng.random_range(c..w - c), rng.random_range(c..d - c), rng.random_range(1.3..1.7)];
        if !too_close(&spec, [p[0], p[1]]) {
            spec.panos.push(p);
        }
    }
    spec
}

/// Within 0.3 m of a footprint's bounding circle.
fn too_close(spec: &SceneSpec, p: [f64; 2]) -> bool {
    spec.furniture
        .iter()
        .any(|f| (p[0] - f.position[0]).hypot(p[1] - f.position[1]) < f.footprint_radius() + 0.3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene: String,
    pub panos: Vec<MetricReport>,
    pub mean: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scenes: Vec<SceneScore>,
    pub mean: MetricReport,
}

/// Where a pipeline run over `scene_###/furnished` is expected to put its
/// outputs: `<runs>/scene_###/{panos/pano_###.png, sdm.ply}`.
pub fn run_pano_path(run_dir: &Path, i: usize) -> PathBuf {
    run_dir.join("panos").join(pano_name(i))
}

pub fn run_sdm_path(run_dir: &Path) -> PathBuf {
    run_dir.join("sdm.ply")
}

/// Average of reports; masked fields averaged over the reports that have
/// them.
pub fn mean_report(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len().max(1) as f64;
    let mean_opt = |get: &dyn Fn(&MetricReport) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(get).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mse = reports.iter().map(|r| r.mse).sum::<f64>() / n;
    let mse_masked = mean_opt(&|r| r.mse_masked);
    let rmse = mean_opt(&|r| r.rmse_m);
    MetricReport {
        mse,
        psnr_db: psnr_from_mse(mse),
        ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        mse_masked,
        psnr_masked_db: mse_masked.map(psnr_from_mse),
        ssim_masked: mean_opt(&|r| r.ssim_masked),
        rmse_m: rmse,
        pixels: reports.iter().map(|r| r.pixels).sum(),
        masked_pixels: reports.iter().map(|r| r.masked_pixels).sum(),
        samples: reports.iter().map(|r| r.samples).sum(),
    }
}

/// Samples drawn for the scene-level cloud-to-mesh RMSE.
pub const SCORE_SAMPLES: usize = 20_000;

/// Score pipeline outputs against the dataset's empty ground truth:
/// per-pano global and furniture-masked image metrics and SDM RMSE.
pub fn score_run(dataset: &Path, runs: &Path) -> Result<ScoreReport> {
    let mut scene_dirs: Vec<PathBuf> = std::fs::read_dir(dataset)
        .map_err(|e| Error::io(dataset, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_")))
        .collect();
    scene_dirs.sort();
    if scene_dirs.is_empty() {
        return Err(Error::MissingOutput(format!("no scene_### directories in {}", dataset.display())));
    }
    let mut scenes = Vec::new();
    for dir in scene_dirs {
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        let run = runs.join(&name);
        let gt = crate::pano::load_manifest(&dir.join("empty"), None)?;
        let furnished = crate::pano::load_manifest(&dir.join("furnished"), None)?;
        let mut panos = Vec::new();
        for i in 0..gt.panos.len() {
            let pred_path = run_pano_path(&run, i);
            if !pred_path.exists() {
                return Err(Error::MissingOutput(pred_path.display().to_string()));
            }
            let pred = read_rgb(&pred_path)?.to_unit();
            let target = read_rgb(&gt.image_path(i))?.to_unit();
            let mask_path = furnished
                .mask_path(i)
                .ok_or_else(|| Error::MissingOutput(format!("{name}: pano {i} has no mask")))?;
            let mask = read_binary_mask(&mask_path)?;
            let mask = (mask.count_true() > 0).then_some(mask);
            panos.push(image_metrics(&pred, &target, mask.as_ref())?);
        }
        let sdm_path = run_sdm_path(&run);
        if !sdm_path.exists() {
            return Err(Error::MissingOutput(sdm_path.display().to_string()));
        }
        let sdm = load_mesh(&sdm_path)?;
        let reference = load_mesh(&gt.mesh)?;
        let rmse = cloud_to_mesh_rmse(&sdm, &reference, SCORE_SAMPLES, 0, false)?;
        let mut mean = mean_report(&panos);
        mean.rmse_m = Some(rmse);
        mean.samples = SCORE_SAMPLES;
        scenes.push(SceneScore {
            scene: name,
            panos,
            mean,
            rmse_m: Some(rmse),
        });
    }
    let means: Vec<MetricReport> = scenes.iter().map(|s| s.mean.clone()).collect();
    Ok(ScoreReport {
        mean: mean_report(&means),
        scenes,
    })
}
