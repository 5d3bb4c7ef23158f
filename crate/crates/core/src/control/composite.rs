use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::pano::EquirectCamera;

/// Ranges for the random-circle training masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    /// Inclusive range for the number of circles.
    pub n_circles: (usize, usize),
    /// Inclusive range for the radius as a fraction of `min(width, height)`.
    pub radius_frac: (f64, f64),
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            n_circles: (1, 10),
            radius_frac: (0.05, 0.25),
            seed: 0,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.n_circles;
        let (rlo, rhi) = self.radius_frac;
        if lo < 1 || hi < lo {
            return Err(Error::Validation(format!("bad circle count range [{lo}, {hi}]")));
        }
        if !(rlo > 0.0 && rlo <= rhi && rhi <= 0.5) {
            return Err(Error::Validation(format!("bad radius fraction range [{rlo}, {rhi}]")));
        }
        Ok(())
    }
}

/// A disc in pixel coordinates, where pixel `(x, y)` covers
/// `[x, x+1) × [y, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

pub fn sample_circles(cam: &EquirectCamera, spec: &MaskSpec) -> Result<Vec<Circle>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let k = rng.random_range(spec.n_circles.0..=spec.n_circles.1);
    Ok((0..k)
        .map(|_| {
            let r = rng.random_range(spec.radius_frac.0..=spec.radius_frac.1) * w.min(h);
            let cx = rng.random_range(0.0..w);
            let cy = rng.random_range(0.0..h);
            Circle { cx, cy, r }
        })
        .collect())
}

/// Union of discs, a pixel being inside when its center is. Columns wrap
/// around the panorama seam.
pub fn rasterize_circles(width: usize, height: usize, circles: &[Circle]) -> Mask {
    let mut mask = Mask::new(width, height, 1, false);
    for c in circles {
        let y0 = (c.cy - c.r - 0.5).floor().max(0.0) as usize;
        let y1 = ((c.cy + c.r - 0.5).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        for y in y0..=y1 {
            let dy = y as f64 + 0.5 - c.cy;
            let rem = c.r * c.r - dy * dy;
            if rem < 0.0 {
                continue;
            }
            let half = rem.sqrt();
            let x0 = (c.cx - half - 0.5).ceil() as isize;
            let x1 = (c.cx + half - 0.5).floor() as isize;
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - c.cx;
                if dx * dx + dy * dy <= c.r * c.r {
                    let xi = (x.rem_euclid(width as isize)) as usize;
                    mask.data[y * width + xi] = true;
                }
            }
        }
    }
    mask
}

pub fn generate_composite_mask(cam: &EquirectCamera, spec: &MaskSpec) -> Result<Mask> {
    let circles = sample_circles(cam, spec)?;
    Ok(rasterize_circles(cam.width, cam.height, &circles))
}
