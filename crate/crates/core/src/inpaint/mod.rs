//! Mask inpainting of panoramas: a local edge-aware baseline, a client for
//! an external diffusion service, and feathered blending.

mod baseline;
mod blend;
mod service;

pub use baseline::{baseline_inpaint, harmonic_fill, RESIDUAL_TOL};
pub use blend::{alpha_of_distance, blend_alpha, blend_inpaint, distance_to_mask, BlendParams};
pub use service::{downscale_mask, downscale_rgb, upsample_rgb, ServiceClient, ServiceConfig};

use serde::{Deserialize, Serialize};

use crate::control::{ControlImage, ControlSource};
use crate::error::{Error, Result};
use crate::image::{Image, Mask, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    pub image: RgbImage,
    /// `true` = replace.
    pub mask: Mask,
    pub control: ControlImage,
    pub prompt: Option<String>,
    pub seed: u64,
}

impl InpaintRequest {
    /// Request with an empty control image when `control` is `None`.
    pub fn new(image: RgbImage, mask: Mask, control: Option<ControlImage>) -> Self {
        let control = control.unwrap_or_else(|| ControlImage {
            edges: Image::new(image.width, image.height, 1, false),
            source: ControlSource::Combined,
        });
        Self {
            image,
            mask,
            control,
            prompt: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width, self.image.height);
        if self.image.channels != 3 {
            return Err(Error::MismatchedInput(format!("image has {} channels", self.image.channels)));
        }
        for (name, m) in [("mask", &self.mask), ("control", &self.control.edges)] {
            if m.width != w || m.height != h || m.channels != 1 {
                return Err(Error::MismatchedInput(format!(
                    "{name} is {}x{}x{}, image is {w}x{h}",
                    m.width, m.height, m.channels
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Baseline,
    Service,
}

pub enum Backend {
    /// Harmonic fill; `use_control = false` ignores the control edges.
    Baseline { use_control: bool },
    Service(ServiceClient),
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Baseline { .. } => BackendKind::Baseline,
            Backend::Service(_) => BackendKind::Service,
        }
    }
}

/// Run the selected backend. Output has the input's dimensions.
pub fn inpaint(req: &InpaintRequest, backend: &Backend) -> Result<RgbImage> {
    req.validate()?;
    let out = match backend {
        Backend::Baseline { use_control } => {
            baseline_inpaint(&req.image, &req.mask, use_control.then_some(&req.control.edges))?
        }
        Backend::Service(client) => client.inpaint(req)?,
    };
    debug_assert!(out.same_shape(&req.image));
    Ok(out)
}
