//! Feathered compositing of an inpainted panorama over the original.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Mask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendParams {
    /// Distance (px) over which alpha falls from 1 to 0.
    pub feather_px: f64,
    /// Mask dilation (px) before feathering.
    pub dilate_px: f64,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            feather_px: 16.0,
            dilate_px: 8.0,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.feather_px >= 0.0 && self.dilate_px >= 0.0) || !self.feather_px.is_finite() || !self.dilate_px.is_finite() {
            return Err(Error::Validation(format!(
                "blend radii must be finite and non-negative (feather {}, dilate {})",
                self.feather_px, self.dilate_px
            )));
        }
        Ok(())
    }

    /// Pixels farther than this from the mask keep the original value.
    pub fn band(&self) -> f64 {
        self.dilate_px + self.feather_px
    }
}

/// 1D squared distance transform (lower envelope of parabolas). Infinite
/// samples contribute no parabola.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Euclidean distance (px) from each pixel center to the nearest mask pixel
/// center; 0 on the mask. Columns wrap, rows do not.
pub fn distance_to_mask(mask: &Mask) -> GrayImage {
    let (w, h) = (mask.width, mask.height);
    let mut g = vec![f64::INFINITY; w * h];
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = if mask.data[y * w + x] { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col, &mut tmp);
        for y in 0..h {
            g[y * w + x] = tmp[y];
        }
    }
    // Rows: three periods so every pixel sees its nearest wrapped copy.
    let mut row = vec![0.0; 3 * w];
    let mut rout = vec![0.0; 3 * w];
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for k in 0..3 {
            row[k * w..(k + 1) * w].copy_from_slice(&g[y * w..(y + 1) * w]);
        }
        edt_1d(&row, &mut rout);
        for x in 0..w {
            out[y * w + x] = rout[w + x].sqrt();
        }
    }
    GrayImage::from_vec(w, h, 1, out).expect("sized")
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Alpha as a function of distance to the mask.
pub fn alpha_of_distance(d: f64, params: &BlendParams) -> f64 {
    if d <= params.dilate_px {
        1.0
    } else if params.feather_px == 0.0 {
        0.0
    } else {
        1.0 - smoothstep((d - params.dilate_px) / params.feather_px)
    }
}

pub fn blend_alpha(mask: &Mask, params: &BlendParams) -> GrayImage {
    distance_to_mask(mask).map(|d| alpha_of_distance(d, params))
}

/// `alpha·inpainted + (1−alpha)·original`, rounded; alpha 0 copies the
/// original bytes and alpha 1 the inpainted ones.
pub fn blend_inpaint(original: &RgbImage, inpainted: &RgbImage, mask: &Mask, params: &BlendParams) -> Result<RgbImage> {
    params.validate()?;
    if !original.same_shape(inpainted) || !mask.same_size(original) || mask.channels != 1 {
        return Err(Error::MismatchedInput(format!(
            "original {}x{}x{}, inpainted {}x{}x{}, mask {}x{}",
            original.width,
            original.height,
            original.channels,
            inpainted.width,
            inpainted.height,
            inpainted.channels,
            mask.width,
            mask.height
        )));
    }
    let alpha = blend_alpha(mask, params);
    let c = original.channels;
    let mut out = original.clone();
    for (i, &a) in alpha.data.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for k in 0..c {
            let j = i * c + k;
            out.data[j] = if a == 1.0 {
                inpainted.data[j]
            } else {
                (a * inpainted.data[j] as f64 + (1.0 - a) * original.data[j] as f64).round() as u8
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use proptest::prelude::*;

    fn brute_distance(mask: &Mask) -> Vec<f64> {
        let (w, h) = (mask.width, mask.height);
        let pts: Vec<(usize, usize)> = (0..w * h).filter(|&i| mask.data[i]).map(|i| (i % w, i / w)).collect();
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                pts.iter()
                    .map(|&(px, py)| {
                        let dx = x.abs_diff(px).min(w - x.abs_diff(px)) as f64;
                        let dy = y.abs_diff(py) as f64;
                        (dx * dx + dy * dy).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn random_mask(w: usize, h: usize, seed: u64, p: f64) -> Mask {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::from_vec(w, h, 1, (0..w * h).map(|_| rng.random_bool(p)).collect()).unwrap()
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        for seed in 0..10 {
            let m = random_mask(40, 20, seed, 0.01 + 0.01 * seed as f64);
            if m.count_true() == 0 {
                continue;
            }
            let fast = distance_to_mask(&m);
            for (a, b) in fast.data.iter().zip(brute_distance(&m)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_pixel_alpha_profile() {
        let mut m = Image::new(32, 16, 1, false);
        m.data[8 * 32 + 30] = true;
        let p = BlendParams {
            feather_px: 4.0,
            dilate_px: 0.0,
        };
        let alpha = blend_alpha(&m, &p);
        for (i, d) in brute_distance(&m).into_iter().enumerate() {
            let t = (d / 4.0).min(1.0);
            let want = 1.0 - t * t * (3.0 - 2.0 * t);
            assert!((alpha.data[i] - want).abs() < 1e-12);
        }
        // The profile wraps across the seam.
        assert!(alpha.data[8 * 32 + 1] > 0.0);
    }

    #[test]
    fn hard_composite_without_feather() {
        let orig = Image::new(8, 4, 3, 10u8);
        let inp = Image::new(8, 4, 3, 200u8);
        let m = random_mask(8, 4, 3, 0.3);
        let p = BlendParams {
            feather_px: 0.0,
            dilate_px: 0.0,
        };
        let out = blend_inpaint(&orig, &inp, &m, &p).unwrap();
        for i in 0..32 {
            let want = if m.data[i] { 200 } else { 10 };
            assert!(out.data[i * 3..i * 3 + 3].iter().all(|&v| v == want));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let img = Image::new(4, 2, 3, 0u8);
        let m = Image::new(4, 2, 1, true);
        let p = BlendParams {
            feather_px: -1.0,
            dilate_px: 0.0,
        };
        assert!(blend_inpaint(&img, &img, &m, &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn out_of_band_identity(seed in any::<u64>(), feather in 0.0f64..6.0, dilate in 0.0f64..4.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (48, 24);
            let orig = Image::from_vec(w, h, 3, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap();
            let inp = Image::from_vec(w, h, 3, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap();
            let m = random_mask(w, h, seed, 0.005);
            let p = BlendParams { feather_px: feather, dilate_px: dilate };
            let out = blend_inpaint(&orig, &inp, &m, &p).unwrap();
            let d = brute_distance(&m);
            for i in 0..w * h {
                if d[i] > p.band() {
                    prop_assert_eq!(&out.data[i * 3..i * 3 + 3], &orig.data[i * 3..i * 3 + 3]);
                }
            }
            prop_assert_eq!(blend_inpaint(&orig, &orig, &m, &p).unwrap(), orig);
        }
    }
}
