use serde::{Deserialize, Serialize};

use super::{render_geometry_with, EquirectCamera, FrameData, PanoFrame, NO_FACE};
use crate::error::{Error, Result};
use crate::image::Mask;
use crate::mesh::{Bvh, FaceLabel, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskProjectionConfig {
    /// Depth clamp in the inverse-distance weight (m).
    pub min_depth_m: f64,
    /// Scores strictly above this label a face as furniture.
    pub threshold: f64,
    /// Erode each mask by this many pixels before voting.
    pub erosion_px: usize,
}

impl Default for MaskProjectionConfig {
    fn default() -> Self {
        Self {
            min_depth_m: 0.5,
            threshold: 0.5,
            erosion_px: 0,
        }
    }
}

/// Per-face furniture score; `None` marks faces no mask pixel observed.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceScores {
    pub score: Vec<Option<f64>>,
    pub labels: Vec<FaceLabel>,
}

impl FaceScores {
    pub fn relabel(&self, threshold: f64) -> Vec<FaceLabel> {
        self.score.iter().map(|s| label_for(*s, threshold)).collect()
    }
}

fn label_for(score: Option<f64>, threshold: f64) -> FaceLabel {
    match score {
        None => FaceLabel::Unknown,
        Some(s) if s > threshold => FaceLabel::Furniture,
        Some(_) => FaceLabel::Structure,
    }
}

/// Aggregate per-pano furniture masks onto mesh faces. Each pixel votes its
/// mask value for the front-most face its ray hits, weighted by
/// `1 / max(depth, min_depth)`.
pub fn project_masks_to_faces(
    mesh: &TriMesh,
    masks: &[PanoFrame],
    config: &MaskProjectionConfig,
) -> Result<FaceScores> {
    let bvh = Bvh::new(mesh);
    let n = mesh.faces.len();
    let mut weight = vec![0.0f64; n];
    let mut vote = vec![0.0f64; n];
    for (i, frame) in masks.iter().enumerate() {
        let FrameData::Mask(mask) = &frame.data else {
            return Err(Error::MismatchedInput(format!("frame {i} is not a mask")));
        };
        if mask.width != frame.camera.width || mask.height != frame.camera.height || mask.channels != 1 {
            return Err(Error::MismatchedInput(format!(
                "mask {i} is {}x{}x{} but camera is {}x{}",
                mask.width, mask.height, mask.channels, frame.camera.width, frame.camera.height
            )));
        }
        let mask = if config.erosion_px > 0 {
            erode(mask, config.erosion_px)
        } else {
            mask.clone()
        };
        let r = render_geometry_with(mesh, &bvh, &frame.camera, &frame.pose);
        let depth = r.depth_image();
        // Sequential accumulation in pixel order keeps sums reproducible.
        for (p, &fid) in r.face_id.data.iter().enumerate() {
            if fid == NO_FACE {
                continue;
            }
            let w = pixel_weight(depth.data[p], config.min_depth_m);
            weight[fid as usize] += w;
            if mask.data[p] {
                vote[fid as usize] += w;
            }
        }
    }
    let score: Vec<Option<f64>> = weight
        .iter()
        .zip(&vote)
        .map(|(&w, &v)| (w > 0.0).then(|| v / w))
        .collect();
    let labels = score.iter().map(|s| label_for(*s, config.threshold)).collect();
    Ok(FaceScores { score, labels })
}

#[inline]
pub(crate) fn pixel_weight(depth: f64, min_depth: f64) -> f64 {
    1.0 / depth.max(min_depth)
}

/// Binary erosion with a square structuring element; columns wrap.
pub fn erode(mask: &Mask, radius: usize) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let r = radius as isize;
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.data[y * w + x] {
                continue;
            }
            let mut keep = true;
            'win: for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                    if !mask.data[yy as usize * w + xx] {
                        keep = false;
                        break 'win;
                    }
                }
            }
            out.data[y * w + x] = keep;
        }
    }
    out
}

/// Convenience: wrap a mask into a frame.
pub fn mask_frame(camera: EquirectCamera, pose: super::Pose, mask: Mask) -> PanoFrame {
    PanoFrame {
        camera,
        pose,
        data: FrameData::Mask(mask),
    }
}
