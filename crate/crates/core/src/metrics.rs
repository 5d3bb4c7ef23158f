//! Image quality metrics (MSE, PSNR, SSIM and masked variants) and the
//! cloud-to-mesh RMSE between two surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_cols, filter_rows, gaussian_kernel, Border};
use crate::image::{GrayImage, Mask};
use crate::mesh::{Bvh, TriMesh, Vec3};

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Serialize an f64 that may be `+∞` as the string `"inf"`.
pub mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("unexpected string {s:?}"))),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    #[serde(with = "inf_as_string")]
    pub psnr_db: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_masked: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "inf_as_string::option")]
    pub psnr_masked_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim_masked: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_m: Option<f64>,
    pub pixels: usize,
    pub masked_pixels: usize,
    pub samples: usize,
}

/// `10·log10(1 / mse)` for unit-range images; `+∞` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn check(pred: &GrayImage, target: &GrayImage, mask: Option<&Mask>) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::MismatchedInput(format!(
            "pred {}x{}x{} vs target {}x{}x{}",
            pred.width, pred.height, pred.channels, target.width, target.height, target.channels
        )));
    }
    if let Some(m) = mask {
        if m.width != pred.width || m.height != pred.height || m.channels != 1 {
            return Err(Error::MismatchedInput(format!(
                "mask {}x{} vs image {}x{}",
                m.width, m.height, pred.width, pred.height
            )));
        }
        if m.count_true() == 0 {
            return Err(Error::EmptyMask);
        }
    }
    Ok(())
}

/// Mean squared error over the pixels selected by `mask` (all if `None`).
pub fn mse(pred: &GrayImage, target: &GrayImage, mask: Option<&Mask>) -> Result<f64> {
    check(pred, target, mask)?;
    let c = pred.channels;
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in 0..pred.width * pred.height {
        if mask.is_some_and(|m| !m.data[p]) {
            continue;
        }
        for k in 0..c {
            let d = pred.data[p * c + k] - target.data[p * c + k];
            sum += d * d;
        }
        n += c;
    }
    Ok(sum / n.max(1) as f64)
}

/// Per-pixel SSIM map of one channel plane (Gaussian 11×11, σ = 1.5,
/// symmetric padding so every pixel is a window center).
pub fn ssim_map(x: &[f64], y: &[f64], w: usize, h: usize) -> Vec<f64> {
    let g = gaussian_kernel(SSIM_SIGMA, SSIM_RADIUS);
    let blur = |p: &[f64]| filter_cols(&filter_rows(p, w, h, &g, Border::Reflect), w, h, &g, Border::Reflect);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, my, sxx, syy, sxy) = (blur(x), blur(y), blur(&xx), blur(&yy), blur(&xy));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    (0..w * h)
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let va = sxx[i] - a * a;
            let vb = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (va + vb + c2))
        })
        .collect()
}

/// Mean SSIM over channels and over window centers selected by `mask`.
pub fn ssim(pred: &GrayImage, target: &GrayImage, mask: Option<&Mask>) -> Result<f64> {
    check(pred, target, mask)?;
    let (w, h, c) = (pred.width, pred.height, pred.channels);
    let mut total = 0.0;
    for k in 0..c {
        let map = ssim_map(&pred.channel(k).data, &target.channel(k).data, w, h);
        let (sum, n) = map
            .iter()
            .enumerate()
            .filter(|(i, _)| mask.is_none_or(|m| m.data[*i]))
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        total += sum / n.max(1) as f64;
    }
    Ok(total / c.max(1) as f64)
}

/// Global metrics plus masked variants when `mask` is given. Images are
/// expected in [0, 1].
pub fn image_metrics(pred: &GrayImage, target: &GrayImage, mask: Option<&Mask>) -> Result<MetricReport> {
    check(pred, target, mask)?;
    let m = mse(pred, target, None)?;
    let mut report = MetricReport {
        mse: m,
        psnr_db: psnr_from_mse(m),
        ssim: ssim(pred, target, None)?,
        pixels: pred.width * pred.height,
        ..Default::default()
    };
    if let Some(mask) = mask {
        let mm = mse(pred, target, Some(mask))?;
        report.mse_masked = Some(mm);
        report.psnr_masked_db = Some(psnr_from_mse(mm));
        report.ssim_masked = Some(ssim(pred, target, Some(mask))?);
        report.masked_pixels = mask.count_true();
    }
    Ok(report)
}

/// `n` points uniformly distributed over the surface (area-weighted),
/// deterministic for a given seed.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Vec<Vec3> {
    let mut cum = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cum.push(acc);
    }
    if acc <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..acc);
            let f = cum.partition_point(|&c| c <= t).min(cum.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect()
}

fn sum_sq_distances(points: &[Vec3], reference: &TriMesh) -> f64 {
    let bvh = Bvh::new(reference);
    let d2: Vec<f64> = points.par_iter().map(|p| bvh.distance(p).powi(2)).collect();
    d2.iter().sum()
}

/// Root-mean-square distance from `n_samples` points on `candidate` to
/// `reference`. With `symmetric`, reference→candidate samples are pooled in.
pub fn cloud_to_mesh_rmse(
    candidate: &TriMesh,
    reference: &TriMesh,
    n_samples: usize,
    seed: u64,
    symmetric: bool,
) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::DegenerateInput("cloud-to-mesh RMSE needs two non-empty meshes".into()));
    }
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be positive".into()));
    }
    let pts = sample_surface(candidate, n_samples, seed);
    let mut sum = sum_sq_distances(&pts, reference);
    let mut n = pts.len();
    if symmetric {
        let back = sample_surface(reference, n_samples, seed.wrapping_add(1));
        sum += sum_sq_distances(&back, candidate);
        n += back.len();
    }
    Ok((sum / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::box_room;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::Rng;

    fn random(w: usize, h: usize, c: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// SSIM straight from the windowed definition with explicit weights and
    /// reflected indices.
    fn brute_ssim(x: &GrayImage, y: &GrayImage) -> f64 {
        let (w, h) = (x.width as isize, x.height as isize);
        let r = 5isize;
        let wt = |d: isize| (-(d * d) as f64 / (2.0 * 1.5 * 1.5)).exp();
        let norm: f64 = (-r..=r).map(wt).sum::<f64>().powi(2);
        let refl = |i: isize, n: isize| if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
        let mut total = 0.0;
        for cy in 0..h {
            for cx in 0..w {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let k = wt(dx) * wt(dy) / norm;
                        let i = (refl(cy + dy, h) * w + refl(cx + dx, w)) as usize;
                        let (a, b) = (x.data[i], y.data[i]);
                        mx += k * a;
                        my += k * b;
                        sxx += k * a * a;
                        syy += k * b * b;
                        sxy += k * a * b;
                    }
                }
                let (va, vb, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                let (c1, c2) = (1e-4, 9e-4);
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (va + vb + c2));
            }
        }
        total / (w * h) as f64
    }

    #[test]
    fn identical_images() {
        let a = random(16, 8, 3, 1);
        let r = image_metrics(&a, &a, None).unwrap();
        assert_eq!(r.mse, 0.0);
        assert!(r.psnr_db.is_infinite());
        assert!((r.ssim - 1.0).abs() < 1e-12);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"psnr_db\":\"inf\""), "{json}");
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn constant_offset_psnr_20db() {
        let p = GrayImage::new(8, 8, 3, 0.0);
        let t = GrayImage::new(8, 8, 3, 0.1);
        let r = image_metrics(&p, &t, None).unwrap();
        assert!((r.mse - 0.01).abs() < 1e-15);
        assert!((r.psnr_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_windowed_oracle() {
        let a = random(32, 32, 1, 7);
        let b = random(32, 32, 1, 8).map(|v| 0.3 * v + 0.6 * 0.5);
        let fast = ssim(&a, &b, None).unwrap();
        assert!((fast - brute_ssim(&a, &b)).abs() < 1e-6);
    }

    #[test]
    fn masks() {
        let a = random(16, 8, 3, 2);
        let b = random(16, 8, 3, 3);
        let all = Mask::new(16, 8, 1, true);
        let r = image_metrics(&a, &b, Some(&all)).unwrap();
        assert!((r.mse_masked.unwrap() - r.mse).abs() < 1e-12);
        assert!((r.ssim_masked.unwrap() - r.ssim).abs() < 1e-12);
        assert!((r.psnr_masked_db.unwrap() - r.psnr_db).abs() < 1e-12);
        assert_eq!(r.masked_pixels, 128);
        let none = Mask::new(16, 8, 1, false);
        assert!(matches!(image_metrics(&a, &b, Some(&none)), Err(Error::EmptyMask)));
        assert!(matches!(
            image_metrics(&a, &random(8, 8, 3, 1), None),
            Err(Error::MismatchedInput(_))
        ));
    }

    #[test]
    fn masked_mse_counts_only_masked_pixels() {
        let t = GrayImage::new(4, 4, 1, 0.0);
        let mut p = t.clone();
        p.data[5] = 0.5;
        let mut m = Mask::new(4, 4, 1, false);
        m.data[5] = true;
        m.data[6] = true;
        assert!((mse(&p, &t, Some(&m)).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rmse_of_identical_is_zero() {
        let m = box_room(Vec3::zeros(), Vec3::new(4.0, 4.0, 3.0));
        assert!(cloud_to_mesh_rmse(&m, &m, 5000, 1, false).unwrap() < 1e-9);
        assert!(cloud_to_mesh_rmse(&m, &m, 5000, 1, true).unwrap() < 1e-9);
    }

    #[test]
    fn rmse_of_lifted_floor() {
        let quad = |z: f64| {
            TriMesh::new(
                vec![
                    Vec3::new(0.0, 0.0, z),
                    Vec3::new(4.0, 0.0, z),
                    Vec3::new(4.0, 4.0, z),
                    Vec3::new(0.0, 4.0, z),
                ],
                vec![[0, 1, 2], [0, 2, 3]],
            )
            .unwrap()
        };
        let r = cloud_to_mesh_rmse(&quad(0.05), &quad(0.0), 2000, 3, false).unwrap();
        assert!((r - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rmse_converges() {
        let a = crate::mesh::icosphere(Vec3::zeros(), 1.0, 2);
        let b = crate::mesh::icosphere(Vec3::new(0.05, 0.0, 0.0), 1.1, 3);
        let r1 = cloud_to_mesh_rmse(&a, &b, 10_000, 5, false).unwrap();
        let r2 = cloud_to_mesh_rmse(&a, &b, 100_000, 5, false).unwrap();
        assert!((r1 - r2).abs() / r2 < 0.05, "{r1} vs {r2}");
    }

    #[test]
    fn empty_mesh_rejected() {
        let m = box_room(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        assert!(cloud_to_mesh_rmse(&TriMesh::empty(), &m, 10, 0, false).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn psnr_mse_identity_and_ssim_symmetry(seed in any::<u64>()) {
            let a = random(12, 10, 3, seed);
            let b = random(12, 10, 3, seed.wrapping_add(99));
            let r = image_metrics(&a, &b, None).unwrap();
            prop_assert!((r.psnr_db - 10.0 * (1.0 / r.mse).log10()).abs() <= 1e-9);
            prop_assert!((ssim(&a, &b, None).unwrap() - ssim(&b, &a, None).unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r.ssim));
        }
    }
}
