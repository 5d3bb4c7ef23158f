use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use defurnish::image::{read_binary_mask, read_rgb, write_mask, write_rgb};
use defurnish::inpaint::{blend_inpaint, inpaint, Backend, BackendKind, InpaintRequest, ServiceClient};
use defurnish::mesh::{load_mesh, save_mesh, Bvh};
use defurnish::metrics::{cloud_to_mesh_rmse, image_metrics};
use defurnish::pano::{load_manifest, EquirectCamera};
use defurnish::pipeline::{control_for, emit_finetune_dataset, face_scores, run_pipeline, PipelineConfig};
use defurnish::sdm::build_sdm;
use defurnish::synth::{desk_suite, score_run, write_dataset, SceneSpec};
use defurnish::texture::{bake_texture, select_views, PosedPano};
use defurnish::Error;

/// Defurnish indoor scans: simplified mesh, control images, inpainting,
/// texture baking and evaluation.
#[derive(Debug, Parser)]
#[command(name = "sdm-pipeline", version)]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write a synthetic furnished/empty dataset.
    Synth {
        /// JSON scene spec or array of specs.
        #[arg(long, conflicts_with = "desk_suite", required_unless_present = "desk_suite")]
        spec: Option<PathBuf>,
        /// Generate the three-room desk suite with this seed instead.
        #[arg(long)]
        desk_suite: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render control images of a mesh from the scene's poses.
    Control {
        /// Manifest file or directory holding poses.json.
        #[arg(long)]
        scene: PathBuf,
        /// Mesh to render; defaults to the scene mesh.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the simplified defurnished mesh from the scene's masks.
    Sdm {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inpaint one panorama and blend it into the original.
    Inpaint {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        control: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `inpaint.backend`.
        #[arg(long)]
        backend: Option<BackendArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Bake a texture atlas for a mesh from the scene's panoramas.
    Texture {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        /// Output OBJ; the MTL and atlas.png go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Image metrics of a prediction, or cloud-to-mesh RMSE of two meshes.
    Eval {
        #[arg(long, requires = "target")]
        pred: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        candidate: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long)]
        symmetric: bool,
    },
    /// Score pipeline outputs against a synthetic dataset.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline on one scene, or on every furnished scene of a
    /// synthetic dataset.
    Run {
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        scene: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, conflicts_with = "dataset")]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit control-image fine-tuning triples from unfurnished scenes.
    EmitDataset {
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum BackendArg {
    Baseline,
    Service,
}

const EXIT_INPUT: u8 = 1;
const EXIT_STAGE: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Stage { .. } | Error::BackendUnavailable(_) | Error::BackendError { .. } | Error::AtlasOverflow { .. }) => {
            EXIT_STAGE
        }
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn print_json(v: serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_specs(path: &Path) -> anyhow::Result<Vec<SceneSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    let specs = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    Ok(specs.map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?)
}

fn backend(config: &PipelineConfig, kind: BackendKind) -> anyhow::Result<Backend> {
    Ok(match kind {
        BackendKind::Baseline => Backend::Baseline {
            use_control: config.inpaint.use_control,
        },
        BackendKind::Service => Backend::Service(ServiceClient::new(config.inpaint.service.clone())?),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Cmd::Synth { spec, desk_suite: seed, out } => {
            let specs = match (spec, seed) {
                (Some(p), _) => load_specs(&p)?,
                (None, Some(seed)) => desk_suite(seed),
                (None, None) => bail!("need --spec or --desk-suite"),
            };
            let dirs = write_dataset(&specs, &out)?;
            log::info!("wrote {} scenes to {}", dirs.len(), out.display());
        }
        Cmd::Control { scene, mesh, out } => {
            let scene = load_manifest(&scene, None)?;
            let mesh = load_mesh(mesh.as_deref().unwrap_or(&scene.mesh))?;
            let bvh = Bvh::new(&mesh);
            for i in 0..scene.panos.len() {
                let img = read_rgb(&scene.image_path(i))?;
                let cam = EquirectCamera::new(img.width, img.height)?;
                let edges = control_for(&mesh, &bvh, &cam, &scene.panos[i].pose()?, &config.control)?;
                write_mask(&out.join(format!("control_{}.png", scene.panos[i].id)), &edges)?;
            }
        }
        Cmd::Sdm { scene, mesh, out } => {
            let scene = load_manifest(&scene, mesh.as_deref())?;
            let input = load_mesh(&scene.mesh)?;
            let scores = face_scores(&input, &scene, &config.masks)?;
            let centers: Vec<_> = scene.panos.iter().map(|p| p.pose().map(|p| p.position)).collect::<Result<_, _>>()?;
            let sdm = build_sdm(&input, &scores, &config.sdm, &centers)?;
            save_mesh(&sdm.mesh, &out)?;
            print_json(serde_json::json!({
                "faces": sdm.mesh.faces.len(),
                "removed_faces": sdm.removed_faces.len(),
                "filled_faces": sdm.filled_faces.len(),
                "planes": sdm.planes.len(),
                "open_loops": sdm.open_loops.len(),
                "reopened_faces": sdm.reopened_faces,
                "boundary_edges": sdm.boundary_edges,
                "watertight": sdm.watertight,
            }))?;
        }
        Cmd::Inpaint {
            image,
            mask,
            control,
            out,
            backend: kind,
            seed,
        } => {
            let img = read_rgb(&image)?;
            let mask = read_binary_mask(&mask)?;
            let control = control
                .map(|p| {
                    read_binary_mask(&p).map(|edges| defurnish::control::ControlImage {
                        edges,
                        source: defurnish::control::ControlSource::Combined,
                    })
                })
                .transpose()?;
            let mut req = InpaintRequest::new(img, mask, control);
            req.seed = seed;
            let kind = match kind {
                Some(BackendArg::Baseline) => BackendKind::Baseline,
                Some(BackendArg::Service) => BackendKind::Service,
                None => config.inpaint.backend,
            };
            let filled = inpaint(&req, &backend(&config, kind)?)?;
            write_rgb(&out, &blend_inpaint(&req.image, &filled, &req.mask, &config.blend)?)?;
        }
        Cmd::Texture { scene, mesh, out } => {
            let scene = load_manifest(&scene, None)?;
            let mesh = load_mesh(&mesh)?;
            let panos = (0..scene.panos.len())
                .map(|i| PosedPano::new(scene.panos[i].pose()?, read_rgb(&scene.image_path(i))?))
                .collect::<Result<Vec<_>, _>>()?;
            let choice = select_views(&mesh, &panos);
            let baked = bake_texture(&mesh, &panos, &choice, &config.texture)?;
            save_mesh(&baked.mesh, &out)?;
            write_rgb(&out.with_file_name("atlas.png"), &baked.atlas)?;
            log::info!(
                "{} charts, atlas {}x{}, {} unseen faces",
                baked.charts.len(),
                baked.atlas.width,
                baked.atlas.height,
                baked.unseen_faces.len()
            );
        }
        Cmd::Eval {
            pred,
            target,
            mask,
            candidate,
            reference,
            samples,
            symmetric,
        } => {
            let mut report = match (pred, target) {
                (Some(p), Some(t)) => {
                    let mask = mask.map(|m| read_binary_mask(&m)).transpose()?;
                    image_metrics(&read_rgb(&p)?.to_unit(), &read_rgb(&t)?.to_unit(), mask.as_ref())?
                }
                _ => Default::default(),
            };
            if let (Some(c), Some(r)) = (candidate, reference) {
                let rmse = cloud_to_mesh_rmse(&load_mesh(&c)?, &load_mesh(&r)?, samples, 0, symmetric)?;
                report.rmse_m = Some(rmse);
                report.samples = samples;
            } else if report.pixels == 0 {
                bail!(Error::MissingOutput("eval needs --pred/--target or --candidate/--reference".into()));
            }
            print_json(serde_json::to_value(&report)?)?;
        }
        Cmd::Score { dataset, run, out } => {
            let report = score_run(&dataset, &run)?;
            if let Some(out) = out {
                write_json(&out, &serde_json::to_value(&report)?)?;
            }
            print_json(serde_json::to_value(&report)?)?;
        }
        Cmd::Run { scene, dataset, mesh, out } => {
            if let Some(scene) = scene {
                let log = run_pipeline(&scene, mesh.as_deref(), &out, &config)?;
                print_json(serde_json::to_value(&log)?)?;
            } else if let Some(dataset) = dataset {
                let mut scenes: Vec<PathBuf> = std::fs::read_dir(&dataset)
                    .map_err(|e| Error::Io {
                        path: dataset.clone(),
                        source: e,
                    })?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.join("furnished").is_dir())
                    .collect();
                scenes.sort();
                if scenes.is_empty() {
                    bail!(Error::MissingOutput(format!("no scene_###/furnished in {}", dataset.display())));
                }
                for s in scenes {
                    let name = s.file_name().expect("directory entry has a name");
                    let log = run_pipeline(&s.join("furnished"), None, &out.join(name), &config)?;
                    log::info!("{}: {:.2}s", name.to_string_lossy(), log.total_seconds);
                }
            }
        }
        Cmd::EmitDataset { scenes, out } => {
            let index = emit_finetune_dataset(&scenes, &out, &config)?;
            log::info!("wrote {} items for {} scenes", index.items.len(), index.scenes.len());
        }
    }
    Ok(())
}
