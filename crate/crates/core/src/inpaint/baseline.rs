//! Edge-aware harmonic fill: Laplace's equation over the masked pixels with
//! Dirichlet data from unmasked neighbors. Control-edge pixels inside the
//! mask are removed from the domain, so no flux crosses them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Mask, RgbImage};

/// Max-norm residual target on the 0–255 scale.
pub const RESIDUAL_TOL: f64 = 1e-4;

const GRAY: f64 = 127.5;

/// 4-neighbors with wrapped columns and bounded rows.
fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    let left = y * w + (x + w - 1) % w;
    let right = y * w + (x + 1) % w;
    let up = (y > 0).then(|| i - w);
    let down = (y + 1 < h).then(|| i + w);
    [Some(left), Some(right), up, down].into_iter().flatten()
}

/// Sparse SPD system for the free pixels of one fill domain.
struct System {
    /// Plane index of each unknown.
    pixels: Vec<usize>,
    /// Unknown-to-unknown couplings (CSR).
    offsets: Vec<usize>,
    adj: Vec<usize>,
    diag: Vec<f64>,
    /// Plane indices of the Dirichlet neighbors of each unknown (CSR).
    bnd_offsets: Vec<usize>,
    bnd: Vec<usize>,
    /// Component label per unknown, and whether that component touches
    /// known data.
    component: Vec<usize>,
    anchored: Vec<bool>,
}

impl System {
    fn build(w: usize, h: usize, fill: &[bool], barrier: &[bool]) -> Self {
        let free = |i: usize| fill[i] && !barrier[i];
        let pixels: Vec<usize> = (0..w * h).filter(|&i| free(i)).collect();
        let mut slot = vec![usize::MAX; w * h];
        for (k, &p) in pixels.iter().enumerate() {
            slot[p] = k;
        }
        let mut offsets = vec![0];
        let mut adj = Vec::new();
        let mut diag = Vec::with_capacity(pixels.len());
        let mut bnd_offsets = vec![0];
        let mut bnd = Vec::new();
        for &p in &pixels {
            let mut d = 0.0;
            for q in neighbors(p, w, h) {
                if !fill[q] {
                    bnd.push(q);
                    d += 1.0;
                } else if !barrier[q] {
                    adj.push(slot[q]);
                    d += 1.0;
                }
            }
            diag.push(d);
            offsets.push(adj.len());
            bnd_offsets.push(bnd.len());
        }

        let n = pixels.len();
        let mut component = vec![usize::MAX; n];
        let mut anchored = Vec::new();
        for s in 0..n {
            if component[s] != usize::MAX {
                continue;
            }
            let c = anchored.len();
            let mut touches = false;
            let mut stack = vec![s];
            component[s] = c;
            while let Some(k) = stack.pop() {
                touches |= bnd_offsets[k + 1] > bnd_offsets[k];
                for &j in &adj[offsets[k]..offsets[k + 1]] {
                    if component[j] == usize::MAX {
                        component[j] = c;
                        stack.push(j);
                    }
                }
            }
            anchored.push(touches);
        }
        System {
            pixels,
            offsets,
            adj,
            diag,
            bnd_offsets,
            bnd,
            component,
            anchored,
        }
    }

    fn active(&self, k: usize) -> bool {
        self.anchored[self.component[k]]
    }

    /// `y = A x` restricted to anchored unknowns.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..x.len() {
            if !self.active(k) {
                y[k] = 0.0;
                continue;
            }
            let off: f64 = self.adj[self.offsets[k]..self.offsets[k + 1]].iter().map(|&j| x[j]).sum();
            y[k] = self.diag[k] * x[k] - off;
        }
    }

    /// Jacobi-preconditioned conjugate gradients on the anchored
    /// components; returns the unknown values.
    fn solve(&self, plane: &[f64], fallback: f64) -> Vec<f64> {
        let n = self.pixels.len();
        let b: Vec<f64> = (0..n)
            .map(|k| {
                if self.active(k) {
                    self.bnd[self.bnd_offsets[k]..self.bnd_offsets[k + 1]].iter().map(|&q| plane[q]).sum()
                } else {
                    0.0
                }
            })
            .collect();

        // Start from each component's mean boundary value.
        let mut csum = vec![0.0; self.anchored.len()];
        let mut ccount = vec![0usize; self.anchored.len()];
        for k in 0..n {
            let c = self.component[k];
            csum[c] += b[k];
            ccount[c] += self.bnd_offsets[k + 1] - self.bnd_offsets[k];
        }
        let mut x: Vec<f64> = (0..n)
            .map(|k| {
                let c = self.component[k];
                if ccount[c] > 0 {
                    csum[c] / ccount[c] as f64
                } else {
                    fallback
                }
            })
            .collect();

        let mut ax = vec![0.0; n];
        self.apply(&x, &mut ax);
        let mut r: Vec<f64> = (0..n).map(|k| b[k] - ax[k]).collect();
        let mut z: Vec<f64> = (0..n).map(|k| if self.active(k) { r[k] / self.diag[k] } else { 0.0 }).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 10 * n + 100;
        for _ in 0..max_iter {
            if r.iter().all(|v| v.abs() < RESIDUAL_TOL) {
                break;
            }
            self.apply(&p, &mut ax);
            let pap: f64 = p.iter().zip(&ax).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ax[k];
            }
            for k in 0..n {
                z[k] = if self.active(k) { r[k] / self.diag[k] } else { 0.0 };
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        x
    }
}

/// Harmonic fill of one channel plane. `fill` marks pixels to replace,
/// `barrier` marks fill pixels excluded from diffusion; they are filled
/// afterwards from adjacent solved pixels, layer by layer. Regions with no
/// known boundary get `fallback`.
pub fn harmonic_fill(plane: &[f64], w: usize, h: usize, fill: &[bool], barrier: &[bool], fallback: f64) -> Vec<f64> {
    let sys = System::build(w, h, fill, barrier);
    let solved = sys.solve(plane, fallback);
    let mut out = plane.to_vec();
    for (k, &p) in sys.pixels.iter().enumerate() {
        out[p] = solved[k];
    }
    fill_barriers(&mut out, w, h, fill, barrier, fallback);
    out
}

fn fill_barriers(out: &mut [f64], w: usize, h: usize, fill: &[bool], barrier: &[bool], fallback: f64) {
    let mut resolved: Vec<bool> = (0..w * h).map(|i| !(fill[i] && barrier[i])).collect();
    let mut pending: Vec<usize> = (0..w * h).filter(|&i| !resolved[i]).collect();
    while !pending.is_empty() {
        let layer: Vec<(usize, f64)> = pending
            .iter()
            .filter_map(|&i| {
                let (s, n) = neighbors(i, w, h)
                    .filter(|&q| resolved[q])
                    .fold((0.0, 0usize), |(s, n), q| (s + out[q], n + 1));
                (n > 0).then(|| (i, s / n as f64))
            })
            .collect();
        if layer.is_empty() {
            for &i in &pending {
                out[i] = fallback;
            }
            return;
        }
        for &(i, v) in &layer {
            out[i] = v;
            resolved[i] = true;
        }
        pending.retain(|&i| !resolved[i]);
    }
}

/// Deterministic local inpainter. With `control`, control-edge pixels under
/// the mask block diffusion so each side of a structural line is filled
/// from its own side.
pub fn baseline_inpaint(image: &RgbImage, mask: &Mask, control: Option<&Mask>) -> Result<RgbImage> {
    let (w, h, c) = (image.width, image.height, image.channels);
    if !mask.same_size(image) || mask.channels != 1 {
        return Err(Error::MismatchedInput(format!(
            "mask {}x{} vs image {}x{}",
            mask.width, mask.height, w, h
        )));
    }
    if let Some(ctrl) = control {
        if !ctrl.same_size(image) || ctrl.channels != 1 {
            return Err(Error::MismatchedInput(format!(
                "control {}x{} vs image {}x{}",
                ctrl.width, ctrl.height, w, h
            )));
        }
    }
    if mask.count_true() == 0 {
        return Ok(image.clone());
    }
    let barrier: Vec<bool> = match control {
        Some(ctrl) => ctrl.data.iter().zip(&mask.data).map(|(e, m)| *e && *m).collect(),
        None => vec![false; w * h],
    };
    let planes: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|k| {
            let plane: Vec<f64> = image.data.iter().skip(k).step_by(c).map(|&v| v as f64).collect();
            let (s, n) = plane
                .iter()
                .zip(&mask.data)
                .filter(|(_, m)| !**m)
                .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
            let mean = if n > 0 { s / n as f64 } else { GRAY };
            harmonic_fill(&plane, w, h, &mask.data, &barrier, mean)
        })
        .collect();
    let mut out = image.clone();
    for (i, m) in mask.data.iter().enumerate() {
        if *m {
            for k in 0..c {
                out.data[i * c + k] = planes[k][i].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}
