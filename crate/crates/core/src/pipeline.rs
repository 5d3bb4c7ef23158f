//! End-to-end orchestration: mask projection, SDM, control images,
//! inpainting, blending, an optional super-resolution hook and texture
//! baking, each stage cached by content hash. Also emits control-image
//! fine-tuning datasets from unfurnished scenes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{generate_composite_mask, make_control_image, CannyParams, MaskSpec};
use crate::error::{Error, Result};
use crate::image::{read_binary_mask, read_rgb, write_mask, write_rgb, Mask, RgbImage};
use crate::inpaint::{blend_inpaint, inpaint, Backend, BackendKind, BlendParams, InpaintRequest, ServiceClient, ServiceConfig};
use crate::mesh::{load_mesh, save_mesh, TriMesh, Vec3};
use crate::pano::{load_manifest, mask_frame, project_masks_to_faces, render_geometry_with, EquirectCamera, MaskProjectionConfig, Pose, Scene};
use crate::sdm::{build_sdm, SdmConfig};
use crate::texture::{bake_texture, select_views, PosedPano, TextureParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for per-pano stages; 0 uses all cores.
    pub workers: usize,
    /// Base seed; pano `i` is inpainted with `seed + i`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintConfig {
    pub backend: BackendKind,
    /// Baseline only: honor control edges as barriers.
    pub use_control: bool,
    pub service: ServiceConfig,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Baseline,
            use_control: true,
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperResConfig {
    /// Program and arguments split on whitespace; `{input}` and `{output}`
    /// are replaced by PNG paths. The output must keep the input size.
    pub command: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub masks: MaskSpec,
}

/// The whole pipeline configuration; one TOML table per section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: RunConfig,
    pub masks: MaskProjectionConfig,
    pub sdm: SdmConfig,
    pub control: CannyParams,
    pub inpaint: InpaintConfig,
    pub blend: BlendParams,
    pub superres: SuperResConfig,
    pub texture: TextureParams,
    pub dataset: DatasetConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.blend.validate()?;
        self.dataset.masks.validate()?;
        if !(0.0..=1.0).contains(&self.sdm.label_threshold) {
            return Err(Error::Config(format!("sdm.label_threshold {} not in [0, 1]", self.sdm.label_threshold)));
        }
        if !(self.texture.texel_density > 0.0) {
            return Err(Error::Config("texture.texel_density must be positive".into()));
        }
        if let Some(cmd) = &self.superres.command {
            if !cmd.contains("{input}") || !cmd.contains("{output}") {
                return Err(Error::Config("superres.command needs {input} and {output}".into()));
            }
        }
        Ok(())
    }

    fn backend(&self) -> Result<Backend> {
        Ok(match self.inpaint.backend {
            BackendKind::Baseline => Backend::Baseline {
                use_control: self.inpaint.use_control,
            },
            BackendKind::Service => Backend::Service(ServiceClient::new(self.inpaint.service.clone())?),
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.pipeline.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

/// Whether a stage works on panoramas or on the mesh, for the runtime split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Image,
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub kind: StageKind,
    pub status: StageStatus,
    pub seconds: f64,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub manifest: PathBuf,
    pub panos: usize,
    pub workers: usize,
    pub stages: Vec<StageRecord>,
    pub image_seconds: f64,
    pub mesh_seconds: f64,
    pub total_seconds: f64,
}

impl RunLog {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    /// Output path relative to the run directory -> content hash.
    outputs: BTreeMap<String, String>,
}

/// Content-addressed stage cache under `<out>/.cache`.
struct Stages<'a> {
    out: &'a Path,
    log: Vec<StageRecord>,
}

struct StageSpec<'a> {
    name: &'a str,
    kind: StageKind,
    /// Upstream stage keys, config JSON and the like.
    salt: Vec<String>,
    inputs: Vec<PathBuf>,
    /// Relative to the run directory.
    outputs: Vec<String>,
}

impl Stages<'_> {
    fn entry_path(&self, name: &str) -> PathBuf {
        self.out.join(".cache").join(format!("{name}.json"))
    }

    fn key(&self, spec: &StageSpec) -> Result<String> {
        let mut h = Sha256::new();
        h.update(spec.name.as_bytes());
        for s in &spec.salt {
            h.update([0u8]);
            h.update(s.as_bytes());
        }
        for p in &spec.inputs {
            h.update([1u8]);
            h.update(hash_file(p)?.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    fn is_fresh(&self, name: &str, key: &str, outputs: &[String]) -> bool {
        let Ok(text) = std::fs::read_to_string(self.entry_path(name)) else {
            return false;
        };
        let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) else {
            return false;
        };
        entry.key == key
            && entry.outputs.len() == outputs.len()
            && outputs.iter().all(|o| {
                entry.outputs.get(o).is_some_and(|h| hash_file(&self.out.join(o)).is_ok_and(|x| &x == h))
            })
    }

    /// Run `body` unless the cache holds outputs for the same key. Any
    /// failure is wrapped with the stage name; earlier cache entries stay.
    fn run(&mut self, spec: StageSpec, body: impl FnOnce() -> Result<()>) -> Result<String> {
        let wrap = |e: Error| Error::Stage {
            stage: spec.name.to_string(),
            source: Box::new(e),
        };
        let t = Instant::now();
        let key = self.key(&spec).map_err(wrap)?;
        let status = if self.is_fresh(spec.name, &key, &spec.outputs) {
            StageStatus::Cached
        } else {
            let _ = std::fs::remove_file(self.entry_path(spec.name));
            body().map_err(wrap)?;
            let mut outputs = BTreeMap::new();
            for o in &spec.outputs {
                outputs.insert(o.clone(), hash_file(&self.out.join(o)).map_err(wrap)?);
            }
            let entry = CacheEntry { key: key.clone(), outputs };
            let path = self.entry_path(spec.name);
            crate::image::ensure_parent(&path).map_err(wrap)?;
            let text = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
            std::fs::write(&path, text).map_err(|e| wrap(Error::io(&path, e)))?;
            StageStatus::Ran
        };
        log::info!("stage {}: {:?} in {:.3}s", spec.name, status, t.elapsed().as_secs_f64());
        self.log.push(StageRecord {
            name: spec.name.to_string(),
            kind: spec.kind,
            status,
            seconds: t.elapsed().as_secs_f64(),
            key: key.clone(),
        });
        Ok(key)
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

pub fn control_name(i: usize) -> String {
    format!("control/control_{i:03}.png")
}

pub fn inpainted_name(i: usize) -> String {
    format!("inpainted/pano_{i:03}.png")
}

pub fn blended_name(i: usize) -> String {
    format!("blended/pano_{i:03}.png")
}

pub fn output_pano_name(i: usize) -> String {
    format!("panos/pano_{i:03}.png")
}

pub const SCORES_NAME: &str = "face_scores.json";
pub const SDM_NAME: &str = "sdm.ply";
pub const TEXTURED_NAME: &str = "textured/mesh.obj";
pub const ATLAS_NAME: &str = "textured/atlas.png";
pub const RUN_LOG_NAME: &str = "run.json";

fn load_poses(scene: &Scene) -> Result<Vec<Pose>> {
    scene.panos.iter().map(|p| p.pose()).collect()
}

fn scene_masks(scene: &Scene) -> Result<Vec<PathBuf>> {
    (0..scene.panos.len())
        .map(|i| {
            let path = scene
                .mask_path(i)
                .ok_or_else(|| Error::MissingOutput(format!("pano {} has no mask entry", scene.panos[i].id)))?;
            if !path.exists() {
                return Err(Error::MissingOutput(format!("mask file {}", path.display())));
            }
            Ok(path)
        })
        .collect()
}

/// Per-face furniture scores from the scene's masks.
pub fn face_scores(mesh: &TriMesh, scene: &Scene, config: &MaskProjectionConfig) -> Result<Vec<Option<f64>>> {
    let poses = load_poses(scene)?;
    let frames = scene_masks(scene)?
        .iter()
        .zip(poses)
        .map(|(path, pose)| {
            let mask = read_binary_mask(path)?;
            let cam = EquirectCamera::new(mask.width, mask.height)?;
            Ok(mask_frame(cam, pose, mask))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(project_masks_to_faces(mesh, &frames, config)?.score)
}

/// Control image for `mesh` seen from `pose`.
pub fn control_for(mesh: &TriMesh, bvh: &crate::mesh::Bvh, cam: &EquirectCamera, pose: &Pose, params: &CannyParams) -> Result<Mask> {
    let r = render_geometry_with(mesh, bvh, cam, pose);
    Ok(make_control_image(&r.depth, &r.normal, params)?.edges)
}

fn run_superres(template: &str, input: &Path, output: &Path) -> Result<()> {
    let args: Vec<String> = template
        .split_whitespace()
        .map(|a| a.replace("{input}", &input.to_string_lossy()).replace("{output}", &output.to_string_lossy()))
        .collect();
    let (prog, rest) = args.split_first().ok_or_else(|| Error::Config("empty superres.command".into()))?;
    let status = Command::new(prog)
        .args(rest)
        .status()
        .map_err(|e| Error::BackendUnavailable(format!("super-resolution hook {prog}: {e}")))?;
    if !status.success() {
        return Err(Error::BackendError {
            status: status.code().unwrap_or(-1).clamp(0, u16::MAX as i32) as u16,
            message: format!("super-resolution hook exited with {status}"),
        });
    }
    let (a, b) = (read_rgb(input)?, read_rgb(output)?);
    if !a.same_shape(&b) {
        return Err(Error::MismatchedInput(format!(
            "super-resolution output {}x{} differs from input {}x{}",
            b.width, b.height, a.width, a.height
        )));
    }
    Ok(())
}

/// Run every stage for the scene at `manifest` (a `poses.json` or its
/// directory), writing into `out`. Unchanged stages are reused from
/// `out/.cache`; `run.json` records status and wall time per stage.
pub fn run_pipeline(manifest: &Path, mesh_path: Option<&Path>, out: &Path, config: &PipelineConfig) -> Result<RunLog> {
    config.validate()?;
    let t0 = Instant::now();
    let scene = load_manifest(manifest, mesh_path)?;
    let n = scene.panos.len();
    let pool = config.pool()?;
    let images: Vec<PathBuf> = (0..n).map(|i| scene.image_path(i)).collect();
    let mut st = Stages { out, log: Vec::new() };
    let rel = |names: &dyn Fn(usize) -> String| (0..n).map(names).collect::<Vec<_>>();
    let abs = |r: &str| out.join(r);
    let stage_err = |stage: &str, e: Error| Error::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    };

    // 1. Mask projection.
    let masks = scene_masks(&scene).map_err(|e| stage_err("masks", e))?;
    let mut inputs = vec![scene.manifest.clone(), scene.mesh.clone()];
    inputs.extend(masks.iter().cloned());
    let k_masks = st.run(
        StageSpec {
            name: "masks",
            kind: StageKind::Mesh,
            salt: vec![json(&config.masks)],
            inputs,
            outputs: vec![SCORES_NAME.into()],
        },
        || {
            let mesh = load_mesh(&scene.mesh)?;
            let scores = face_scores(&mesh, &scene, &config.masks)?;
            let path = abs(SCORES_NAME);
            crate::image::ensure_parent(&path)?;
            std::fs::write(&path, json(&scores)).map_err(|e| Error::io(&path, e))
        },
    )?;

    // 2. SDM.
    let poses = load_poses(&scene)?;
    let k_sdm = st.run(
        StageSpec {
            name: "sdm",
            kind: StageKind::Mesh,
            salt: vec![k_masks, json(&config.sdm)],
            inputs: vec![scene.mesh.clone(), abs(SCORES_NAME)],
            outputs: vec![SDM_NAME.into()],
        },
        || {
            let mesh = load_mesh(&scene.mesh)?;
            let path = abs(SCORES_NAME);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let scores: Vec<Option<f64>> = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
            let centers: Vec<Vec3> = poses.iter().map(|p| p.position).collect();
            let sdm = build_sdm(&mesh, &scores, &config.sdm, &centers)?;
            if !sdm.watertight {
                log::warn!("SDM has {} boundary edges", sdm.boundary_edges);
            }
            save_mesh(&sdm.mesh, &abs(SDM_NAME))
        },
    )?;

    // 3. Control images.
    let controls = rel(&control_name);
    let k_control = st.run(
        StageSpec {
            name: "control",
            kind: StageKind::Image,
            salt: vec![k_sdm, json(&config.control)],
            inputs: [vec![abs(SDM_NAME)], images.clone()].concat(),
            outputs: controls.clone(),
        },
        || {
            let sdm = load_mesh(&abs(SDM_NAME))?;
            let bvh = crate::mesh::Bvh::new(&sdm);
            pool.install(|| {
                (0..n).into_par_iter().try_for_each(|i| {
                    let img = read_rgb(&images[i])?;
                    let cam = EquirectCamera::new(img.width, img.height)?;
                    let edges = control_for(&sdm, &bvh, &cam, &poses[i], &config.control)?;
                    write_mask(&abs(&controls[i]), &edges)
                })
            })
        },
    )?;

    // 4. Inpainting.
    let inpainted = rel(&inpainted_name);
    let backend = config.backend()?;
    let k_inpaint = st.run(
        StageSpec {
            name: "inpaint",
            kind: StageKind::Image,
            salt: vec![
                k_control,
                json(&config.inpaint),
                config.pipeline.seed.to_string(),
            ],
            inputs: [images.clone(), masks.clone(), controls.iter().map(|c| abs(c)).collect()].concat(),
            outputs: inpainted.clone(),
        },
        || {
            pool.install(|| {
                (0..n).into_par_iter().try_for_each(|i| {
                    let image = read_rgb(&images[i])?;
                    let mask = read_binary_mask(&masks[i])?;
                    let edges = read_binary_mask(&abs(&controls[i]))?;
                    let mut req = InpaintRequest::new(
                        image,
                        mask,
                        Some(crate::control::ControlImage {
                            edges,
                            source: crate::control::ControlSource::Combined,
                        }),
                    );
                    req.seed = config.pipeline.seed.wrapping_add(i as u64);
                    write_rgb(&abs(&inpainted[i]), &inpaint(&req, &backend)?)
                })
            })
        },
    )?;

    // 5. Blending, then the optional super-resolution hook.
    let finals = rel(&output_pano_name);
    let hook = config.superres.command.as_deref();
    let blended = if hook.is_some() { rel(&blended_name) } else { finals.clone() };
    let k_blend = st.run(
        StageSpec {
            name: "blend",
            kind: StageKind::Image,
            salt: vec![k_inpaint, json(&config.blend)],
            inputs: [images.clone(), masks.clone(), inpainted.iter().map(|c| abs(c)).collect()].concat(),
            outputs: blended.clone(),
        },
        || {
            pool.install(|| {
                (0..n).into_par_iter().try_for_each(|i| {
                    let original = read_rgb(&images[i])?;
                    let filled = read_rgb(&abs(&inpainted[i]))?;
                    let mask = read_binary_mask(&masks[i])?;
                    write_rgb(&abs(&blended[i]), &blend_inpaint(&original, &filled, &mask, &config.blend)?)
                })
            })
        },
    )?;
    let k_final = match hook {
        Some(cmd) => st.run(
            StageSpec {
                name: "superres",
                kind: StageKind::Image,
                salt: vec![k_blend, cmd.to_string()],
                inputs: blended.iter().map(|c| abs(c)).collect(),
                outputs: finals.clone(),
            },
            || {
                for i in 0..n {
                    crate::image::ensure_parent(&abs(&finals[i]))?;
                    run_superres(cmd, &abs(&blended[i]), &abs(&finals[i]))?;
                }
                Ok(())
            },
        )?,
        None => k_blend,
    };

    // 6. Texture.
    st.run(
        StageSpec {
            name: "texture",
            kind: StageKind::Mesh,
            salt: vec![k_final, json(&config.texture)],
            inputs: [vec![abs(SDM_NAME)], finals.iter().map(|c| abs(c)).collect()].concat(),
            outputs: vec![TEXTURED_NAME.into(), "textured/mesh.mtl".into(), ATLAS_NAME.into()],
        },
        || {
            let sdm = load_mesh(&abs(SDM_NAME))?;
            let panos = finals
                .iter()
                .zip(&poses)
                .map(|(f, pose)| PosedPano::new(*pose, read_rgb(&abs(f))?))
                .collect::<Result<Vec<_>>>()?;
            let choice = pool.install(|| select_views(&sdm, &panos));
            let baked = bake_texture(&sdm, &panos, &choice, &config.texture)?;
            if !baked.unseen_faces.is_empty() {
                log::warn!("{} SDM faces are not seen by any panorama", baked.unseen_faces.len());
            }
            save_mesh(&baked.mesh, &abs(TEXTURED_NAME))?;
            write_rgb(&abs(ATLAS_NAME), &baked.atlas)
        },
    )?;

    let sum = |k: StageKind| st.log.iter().filter(|s| s.kind == k).map(|s| s.seconds).sum::<f64>();
    let log = RunLog {
        manifest: scene.manifest.clone(),
        panos: n,
        workers: pool.current_num_threads(),
        image_seconds: sum(StageKind::Image),
        mesh_seconds: sum(StageKind::Mesh),
        total_seconds: t0.elapsed().as_secs_f64(),
        stages: st.log,
    };
    let path = out.join(RUN_LOG_NAME);
    let text = serde_json::to_string_pretty(&log).expect("run log serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub scene: String,
    pub pano: String,
    pub split: Split,
    /// Paths relative to the dataset root.
    pub image: String,
    pub control: String,
    pub mask: String,
    pub masked: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub seed: u64,
    pub scenes: BTreeMap<String, Split>,
    pub items: Vec<DatasetItem>,
}

/// Scene label used for splitting: the manifest directory name, or
/// `<parent>_empty` for a synthetic `scene_###/empty` directory.
pub fn scene_label(scene: &Scene) -> String {
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
    let own = name(&scene.dir);
    match scene.dir.parent() {
        Some(parent) if own == "empty" => format!("{}_empty", name(parent)),
        _ => own,
    }
}

/// 80/10/10 split of scene labels, ordered by a seeded hash.
pub fn split_scenes(labels: &[String], seed: u64) -> BTreeMap<String, Split> {
    let mut order: Vec<(String, &String)> = labels
        .iter()
        .map(|l| (sha256_hex(format!("{seed}:{l}").as_bytes()), l))
        .collect();
    order.sort();
    let n = labels.len();
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
    order
        .into_iter()
        .enumerate()
        .map(|(k, (_, l))| {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (l.clone(), split)
        })
        .collect()
}

fn pano_seed(seed: u64, scene: &str, pano: &str) -> u64 {
    let h = Sha256::digest(format!("{seed}:{scene}:{pano}").as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Write `(control, mask, masked image)` triples for every pano of the
/// given unfurnished scenes, split by scene, plus `index.json`.
pub fn emit_finetune_dataset(scenes: &[PathBuf], out: &Path, config: &PipelineConfig) -> Result<DatasetIndex> {
    config.validate()?;
    let loaded = scenes.iter().map(|p| load_manifest(p, None)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = loaded.iter().map(scene_label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::MismatchedInput(format!("scene label {l} appears twice")));
        }
    }
    // Refuse before writing anything.
    for scene in &loaded {
        for i in 0..scene.panos.len() {
            if let Some(path) = scene.mask_path(i) {
                if read_binary_mask(&path)?.count_true() > 0 {
                    return Err(Error::RefusesFurnished(format!(
                        "pano {} ({}) has furniture pixels",
                        scene.panos[i].id,
                        path.display()
                    )));
                }
            }
        }
    }
    let splits = split_scenes(&labels, config.dataset.seed);
    let pool = config.pool()?;
    let mut items = Vec::new();
    for (scene, label) in loaded.iter().zip(&labels) {
        let mesh = load_mesh(&scene.mesh)?;
        let bvh = crate::mesh::Bvh::new(&mesh);
        let split = splits[label];
        let poses = load_poses(scene)?;
        let scene_items = pool.install(|| {
            (0..scene.panos.len())
                .into_par_iter()
                .map(|i| {
                    let id = &scene.panos[i].id;
                    let image = read_rgb(&scene.image_path(i))?;
                    let cam = EquirectCamera::new(image.width, image.height)?;
                    let control = control_for(&mesh, &bvh, &cam, &poses[i], &config.control)?;
                    let spec = MaskSpec {
                        seed: pano_seed(config.dataset.seed, label, id),
                        ..config.dataset.masks
                    };
                    let mask = generate_composite_mask(&cam, &spec)?;
                    let masked = apply_mask(&image, &mask);
                    let base = format!("{}/{label}_{id}", split.name());
                    let item = DatasetItem {
                        scene: label.clone(),
                        pano: id.clone(),
                        split,
                        image: format!("{base}_image.png"),
                        control: format!("{base}_control.png"),
                        mask: format!("{base}_mask.png"),
                        masked: format!("{base}_masked.png"),
                    };
                    write_rgb(&out.join(&item.image), &image)?;
                    write_mask(&out.join(&item.control), &control)?;
                    write_mask(&out.join(&item.mask), &mask)?;
                    write_rgb(&out.join(&item.masked), &masked)?;
                    Ok(item)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        items.extend(scene_items);
    }
    let index = DatasetIndex {
        seed: config.dataset.seed,
        scenes: splits,
        items,
    };
    let path = out.join("index.json");
    crate::image::ensure_parent(&path)?;
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

/// Masked pixels set to black.
pub fn apply_mask(image: &RgbImage, mask: &Mask) -> RgbImage {
    let mut out = image.clone();
    for (p, &m) in mask.data.iter().enumerate() {
        if m {
            out.data[3 * p..3 * p + 3].fill(0);
        }
    }
    out
}
