//! Auxiliary super-resolution losses with analytic gradients: the LoG
//! contrast loss and the one-sided FFTMax spectral loss.
//!
//! Images are `Image<f64>` with any number of channels; losses are averaged
//! over channels.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter::{correlate2d, Border};
use crate::image::GrayImage;

/// Default LoG scale (px).
pub const DEFAULT_LOG_SIGMA: f64 = 1.0;
/// Default FFTMax denominator guard, relative to the largest target
/// magnitude.
pub const FFTMAX_EPS_REL: f64 = 1e-8;

/// Discretized Laplacian-of-Gaussian, radius `⌈3σ⌉`, shifted to sum to zero.
/// Returns `(taps, radius)` with taps row-major over `(2r+1)²`.
pub fn log_kernel(sigma: f64) -> (Vec<f64>, usize) {
    let r = (3.0 * sigma).ceil() as usize;
    let ri = r as isize;
    let s2 = sigma * sigma;
    let mut k = Vec::with_capacity((2 * r + 1).pow(2));
    for y in -ri..=ri {
        for x in -ri..=ri {
            let q = (x * x + y * y) as f64 / (2.0 * s2);
            k.push(-(1.0 - q) * (-q).exp() / (std::f64::consts::PI * s2 * s2));
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    for v in &mut k {
        *v -= mean;
    }
    (k, r)
}

/// LoG response of every channel, reflective border.
pub fn log_response(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!("LoG sigma must be positive, got {sigma}")));
    }
    let (k, r) = log_kernel(sigma);
    Ok(map_channels(img, |plane| correlate2d(plane, img.width, img.height, &k, r, Border::Reflect)))
}

fn map_channels(img: &GrayImage, f: impl Fn(&[f64]) -> Vec<f64>) -> GrayImage {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut out = GrayImage::new(w, h, c, 0.0);
    for ch in 0..c {
        let plane = img.channel(ch);
        for (i, v) in f(&plane.data).into_iter().enumerate() {
            out.data[i * c + ch] = v;
        }
    }
    out
}

fn check_shapes(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::MismatchedInput(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Mean absolute difference of the LoG responses.
pub fn contrast_loss(pred: &GrayImage, target: &GrayImage, sigma: f64) -> Result<f64> {
    check_shapes(pred, target)?;
    let a = log_response(pred, sigma)?;
    let b = log_response(target, sigma)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len().max(1) as f64)
}

/// Gradient of [`contrast_loss`] with respect to `pred`. At exact ties the
/// subgradient 0 is used.
pub fn contrast_loss_grad(pred: &GrayImage, target: &GrayImage, sigma: f64) -> Result<GrayImage> {
    check_shapes(pred, target)?;
    let a = log_response(pred, sigma)?;
    let b = log_response(target, sigma)?;
    let n = a.data.len().max(1) as f64;
    let sign = GrayImage {
        data: a.data.iter().zip(&b.data).map(|(x, y)| (x - y).signum() * ((x != y) as u8 as f64) / n).collect(),
        ..a
    };
    let (k, r) = log_kernel(sigma);
    let (w, h) = (pred.width, pred.height);
    // Adjoint of the reflected correlation: scatter each output back to the
    // input samples it read.
    Ok(map_channels(&sign, |s| {
        let size = 2 * r + 1;
        let ri = r as isize;
        let mut g = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let sv = s[y * w + x];
                if sv == 0.0 {
                    continue;
                }
                for ky in 0..size {
                    let yy = Border::Reflect.index(y as isize + ky as isize - ri, h);
                    for kx in 0..size {
                        let xx = Border::Reflect.index(x as isize + kx as isize - ri, w);
                        g[yy * w + xx] += k[ky * size + kx] * sv;
                    }
                }
            }
        }
        g
    }))
}

/// 2D DFT of a real plane (`w × h`, row-major), full spectrum.
fn fft2(plane: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, w, h, false);
    buf
}

/// Unnormalized 2D (inverse) DFT.
fn fft2_in_place(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (rows, cols) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in buf.chunks_mut(w) {
        rows.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        cols.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

/// Real-to-complex half spectrum: columns `0..=w/2`.
#[inline]
fn half_cols(w: usize) -> usize {
    w / 2 + 1
}

/// Magnitude half-spectra of each channel, `[channel][y * (w/2+1) + x]`.
pub fn magnitude_spectrum(img: &GrayImage) -> Vec<Vec<f64>> {
    let (w, h) = (img.width, img.height);
    let hw = half_cols(w);
    (0..img.channels)
        .map(|c| {
            let spec = fft2(&img.channel(c).data, w, h);
            let mut m = Vec::with_capacity(h * hw);
            for y in 0..h {
                for x in 0..hw {
                    m.push(spec[y * w + x].norm());
                }
            }
            m
        })
        .collect()
}

fn resolve_eps(target_mags: &[Vec<f64>], eps: Option<f64>) -> Result<f64> {
    match eps {
        Some(e) if e > 0.0 => Ok(e),
        Some(e) => Err(Error::Validation(format!("FFTMax eps must be positive, got {e}"))),
        None => {
            let max = target_mags.iter().flatten().copied().fold(0.0, f64::max);
            Ok((FFTMAX_EPS_REL * max).max(f64::MIN_POSITIVE))
        }
    }
}

/// One-sided relative spectral excess: mean over half-spectrum bins (DC
/// included) of `((P − T) / max(T, eps))²` where `P > T`, else 0. `eps`
/// defaults to `1e-8 ×` the largest target magnitude.
pub fn fftmax_loss(pred: &GrayImage, target: &GrayImage, eps: Option<f64>) -> Result<f64> {
    check_shapes(pred, target)?;
    let p = magnitude_spectrum(pred);
    let t = magnitude_spectrum(target);
    let eps = resolve_eps(&t, eps)?;
    let mut total = 0.0;
    for (pc, tc) in p.iter().zip(&t) {
        let sum: f64 = pc
            .iter()
            .zip(tc)
            .filter(|(a, b)| a > b)
            .map(|(a, b)| ((a - b) / b.max(eps)).powi(2))
            .sum();
        total += sum / pc.len() as f64;
    }
    Ok(total / p.len().max(1) as f64)
}

/// Gradient of [`fftmax_loss`] with respect to `pred`.
pub fn fftmax_loss_grad(pred: &GrayImage, target: &GrayImage, eps: Option<f64>) -> Result<GrayImage> {
    check_shapes(pred, target)?;
    let (w, h, c) = (pred.width, pred.height, pred.channels);
    let hw = half_cols(w);
    let t = magnitude_spectrum(target);
    let eps = resolve_eps(&t, eps)?;
    let bins = (h * hw) as f64;
    let mut out = GrayImage::new(w, h, c, 0.0);
    for ch in 0..c {
        let mut spec = fft2(&pred.channel(ch).data, w, h);
        // Keep w_k·X_k on the half spectrum, zero elsewhere; an inverse
        // transform then gives Σ_k w_k X_k e^{+iωk·x}.
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let m = spec[i].norm();
                let tk = t[ch][y * hw + x.min(hw - 1)];
                spec[i] = if x < hw && m > tk {
                    let d = tk.max(eps);
                    spec[i] * (2.0 * (m - tk) / (d * d) / m)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
        }
        fft2_in_place(&mut spec, w, h, true);
        for (i, v) in spec.iter().enumerate() {
            out.data[i * c + ch] = v.re / bins / c as f64;
        }
    }
    Ok(out)
}

/// Largest per-pixel relative error between an analytic gradient and
/// central finite differences of `loss` with step `step`. The denominator
/// is floored at `1e-12` to keep zero-gradient pixels finite.
pub fn grad_check(
    loss: impl Fn(&GrayImage) -> f64,
    analytic: &GrayImage,
    at: &GrayImage,
    step: f64,
) -> f64 {
    let mut probe = at.clone();
    let mut worst = 0.0f64;
    for i in 0..at.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + step;
        let up = loss(&probe);
        probe.data[i] = orig - step;
        let down = loss(&probe);
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.data[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    worst
}
