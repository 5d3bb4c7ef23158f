//! Small convolution helpers over row-major single-channel planes.

/// How out-of-range sample indices are mapped back into the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Periodic (used for the horizontal axis of panoramas).
    Wrap,
    /// Symmetric reflection that repeats the edge sample: `c b a | a b c`.
    Reflect,
    /// Repeat the nearest edge sample.
    Clamp,
}

impl Border {
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        if (0..n).contains(&i) {
            return i as usize;
        }
        match self {
            Border::Wrap => i.rem_euclid(n) as usize,
            Border::Clamp => i.clamp(0, n - 1) as usize,
            Border::Reflect => {
                let period = 2 * n;
                let m = i.rem_euclid(period);
                (if m < n { m } else { period - 1 - m }) as usize
            }
        }
    }
}

/// Normalized 1D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Correlate every row of `plane` (`w × h`) with `taps` (odd length).
pub fn filter_rows(plane: &[f64], w: usize, h: usize, taps: &[f64], border: Border) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[border.index(x as isize + k as isize - r, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Correlate every column of `plane` (`w × h`) with `taps` (odd length).
pub fn filter_cols(plane: &[f64], w: usize, h: usize, taps: &[f64], border: Border) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let yy = border.index(y as isize + k as isize - r, h);
            let src = &plane[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += t * src[x];
            }
        }
    }
    out
}

/// Separable Gaussian blur.
pub fn gaussian_blur(plane: &[f64], w: usize, h: usize, sigma: f64, bx: Border, by: Border) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let taps = gaussian_kernel(sigma, (3.0 * sigma).ceil() as usize);
    let rows = filter_rows(plane, w, h, &taps, bx);
    filter_cols(&rows, w, h, &taps, by)
}

/// Dense 2D correlation with a square `(2r+1)²` kernel.
pub fn correlate2d(plane: &[f64], w: usize, h: usize, kernel: &[f64], r: usize, border: Border) -> Vec<f64> {
    let size = 2 * r + 1;
    debug_assert_eq!(kernel.len(), size * size);
    let ri = r as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..size {
                let yy = border.index(y as isize + ky as isize - ri, h);
                for kx in 0..size {
                    let xx = border.index(x as isize + kx as isize - ri, w);
                    acc += kernel[ky * size + kx] * plane[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Value at quantile `q ∈ [0, 1]` of `values` by nearest rank. `values` is
/// sorted in place.
pub fn percentile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = (q.clamp(0.0, 1.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.saturating_sub(1).min(values.len() - 1)])
}
