//! Scene manifests: a JSON array of posed panoramas,
//! `[{id, image, mask?, position: [x,y,z], rotation_wxyz: [w,x,y,z]}]`.
//! Relative paths resolve against the manifest's directory; the scene mesh
//! is `mesh.ply` next to the manifest unless given explicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};
use crate::image::ensure_parent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoEntry {
    pub id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub position: [f64; 3],
    pub rotation_wxyz: [f64; 4],
}

impl PanoEntry {
    pub fn pose(&self) -> Result<Pose> {
        Pose::from_wxyz(self.position, self.rotation_wxyz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub mesh: PathBuf,
    pub panos: Vec<PanoEntry>,
}

impl Scene {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.resolve(&self.panos[i].image)
    }

    pub fn mask_path(&self, i: usize) -> Option<PathBuf> {
        self.panos[i].mask.as_deref().map(|m| self.resolve(m))
    }
}

/// Load a manifest file, or a directory containing `poses.json`.
pub fn load_manifest(path: &Path, mesh: Option<&Path>) -> Result<Scene> {
    let manifest = if path.is_dir() {
        path.join("poses.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let panos: Vec<PanoEntry> =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest, e.to_string()))?;
    for p in &panos {
        p.pose()?;
    }
    let dir = manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let mesh = mesh.map_or_else(|| dir.join("mesh.ply"), Path::to_path_buf);
    Ok(Scene {
        dir,
        manifest,
        mesh,
        panos,
    })
}

pub fn save_manifest(path: &Path, panos: &[PanoEntry]) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(panos).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![PanoEntry {
            id: "000".into(),
            image: "pano_000.png".into(),
            mask: Some("mask_000.png".into()),
            position: [1.0, 2.0, 1.6],
            rotation_wxyz: [1.0, 0.0, 0.0, 0.0],
        }];
        let p = dir.path().join("poses.json");
        save_manifest(&p, &entries).unwrap();
        let scene = load_manifest(dir.path(), None).unwrap();
        assert_eq!(scene.panos, entries);
        assert_eq!(scene.mesh, dir.path().join("mesh.ply"));
        assert_eq!(scene.mask_path(0).unwrap(), dir.path().join("mask_000.png"));
    }

    #[test]
    fn bad_rotation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.json");
        std::fs::write(
            &p,
            r#"[{"id":"a","image":"a.png","position":[0,0,0],"rotation_wxyz":[2,0,0,0]}]"#,
        )
        .unwrap();
        assert!(load_manifest(&p, None).is_err());
    }
}
