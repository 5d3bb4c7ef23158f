use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_cols, filter_rows, gaussian_blur, percentile, Border};
use crate::image::{GrayImage, Mask};

/// Gradient magnitudes at or below this fraction of the maximum are treated
/// as flat and excluded from percentile thresholds.
const FLAT_FRACTION: f64 = 1e-9;

/// Hysteresis thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Thresholds {
    /// Gradient magnitudes in input units per pixel.
    Absolute { low: f64, high: f64 },
    /// Percentiles (0–100) of the non-flat gradient magnitudes.
    Percentile { low: f64, high: f64 },
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::Percentile { low: 70.0, high: 90.0 }
    }
}

impl Thresholds {
    fn validate(&self) -> Result<()> {
        let (low, high, max) = match *self {
            Thresholds::Absolute { low, high } => (low, high, f64::INFINITY),
            Thresholds::Percentile { low, high } => (low, high, 100.0),
        };
        if !(low > 0.0 && high >= low && high <= max) {
            return Err(Error::BadThreshold(format!(
                "need 0 < low <= high{}; got low={low}, high={high}",
                if max.is_finite() { " <= 100" } else { "" }
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub sigma: f64,
    pub thresholds: Thresholds,
    /// Treat columns as periodic (panorama seam).
    pub wrap_columns: bool,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            thresholds: Thresholds::default(),
            wrap_columns: true,
        }
    }
}

/// Canny edge detector: Gaussian blur, Sobel gradients, non-maximum
/// suppression over four quantized directions, hysteresis.
pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<Mask> {
    params.thresholds.validate()?;
    if img.channels != 1 {
        return Err(Error::MismatchedInput(format!(
            "canny needs a single-channel image, got {} channels",
            img.channels
        )));
    }
    if let Some(i) = img.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::MismatchedInput(format!("pixel {i} is not finite")));
    }
    let (w, h) = (img.width, img.height);
    let bx = if params.wrap_columns { Border::Wrap } else { Border::Clamp };
    let smooth = gaussian_blur(&img.data, w, h, params.sigma, bx, Border::Clamp);

    // Sobel as separable [1 2 1] ⊗ [-1 0 1].
    let gx = filter_cols(&filter_rows(&smooth, w, h, &[-1.0, 0.0, 1.0], bx), w, h, &[1.0, 2.0, 1.0], Border::Clamp);
    let gy = filter_cols(&filter_rows(&smooth, w, h, &[1.0, 2.0, 1.0], bx), w, h, &[-1.0, 0.0, 1.0], Border::Clamp);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();

    let max = mag.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(Mask::new(w, h, 1, false));
    }
    let (low, high) = match params.thresholds {
        Thresholds::Absolute { low, high } => (low, high),
        Thresholds::Percentile { low, high } => {
            let mut nonflat: Vec<f64> = mag.iter().copied().filter(|&m| m > FLAT_FRACTION * max).collect();
            let hi = percentile(&mut nonflat, high / 100.0).unwrap_or(max);
            let lo = percentile(&mut nonflat, low / 100.0).unwrap_or(max);
            (lo, hi)
        }
    };

    let nms = suppress(&mag, &gx, &gy, w, h, params.wrap_columns, max);
    Ok(hysteresis(&nms, w, h, low, high, params.wrap_columns))
}

/// Keep pixels that are a maximum along their gradient direction. Ties are
/// broken toward the negative side so a symmetric ridge stays one pixel
/// wide.
fn suppress(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize, wrap: bool, max: f64) -> Vec<f64> {
    let tan22 = (std::f64::consts::PI / 8.0).tan();
    let at = |x: isize, y: isize| -> f64 {
        if y < 0 || y >= h as isize {
            return 0.0;
        }
        let x = if wrap {
            x.rem_euclid(w as isize)
        } else if x < 0 || x >= w as isize {
            return 0.0;
        } else {
            x
        };
        mag[y as usize * w + x as usize]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= FLAT_FRACTION * max {
                continue;
            }
            let (dx, dy) = (gx[i], gy[i]);
            let (ax, ay) = (dx.abs(), dy.abs());
            // Offset of the neighbor along the gradient.
            let (ox, oy): (isize, isize) = if ay <= ax * tan22 {
                (1, 0)
            } else if ax <= ay * tan22 {
                (0, 1)
            } else if (dx > 0.0) == (dy > 0.0) {
                (1, 1)
            } else {
                (1, -1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let before = at(xi - ox, yi - oy);
            let after = at(xi + ox, yi + oy);
            if m > before && m >= after {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(nms: &[f64], w: usize, h: usize, low: f64, high: f64, wrap: bool) -> Mask {
    let mut edges = Mask::new(w, h, 1, false);
    let mut queue = VecDeque::new();
    for (i, &m) in nms.iter().enumerate() {
        if m > 0.0 && m >= high {
            edges.data[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (mut nx, ny) = (x + dx, y + dy);
                if ny < 0 || ny >= h as isize {
                    continue;
                }
                if wrap {
                    nx = nx.rem_euclid(w as isize);
                } else if nx < 0 || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.data[j] && nms[j] > 0.0 && nms[j] >= low {
                    edges.data[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}
