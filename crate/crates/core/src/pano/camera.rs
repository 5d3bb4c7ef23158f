use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self::at(Vec3::zeros())
    }

    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Rejects quaternions whose norm is not 1 within 1e-9.
    pub fn from_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(Error::MismatchedInput(format!(
                "rotation quaternion has norm {n}, expected 1"
            )));
        }
        Ok(Self {
            position: Vec3::from(position),
            rotation: UnitQuaternion::new_unchecked(q),
        })
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Compose: apply `self` after `other` (world ← self ← other).
    pub fn then(&self, rigid: &Pose) -> Pose {
        Pose {
            position: rigid.rotation * self.position + rigid.position,
            rotation: rigid.rotation * self.rotation,
        }
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }
}

/// Equirectangular image geometry, `width = 2 × height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquirectCamera {
    pub width: usize,
    pub height: usize,
}

impl EquirectCamera {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width != 2 * height || height < 8 {
            return Err(Error::MismatchedInput(format!(
                "equirect camera must be 2:1 and at least 16x8, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn with_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame unit direction through continuous pixel coordinates.
    /// Integer coordinates are pixel centers.
    #[inline]
    pub fn direction(&self, u: f64, v: f64) -> Vec3 {
        let theta = TAU * ((u + 0.5) / self.width as f64) - PI;
        let phi = FRAC_PI_2 - PI * ((v + 0.5) / self.height as f64);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Vec3::new(cp * ct, cp * st, sp)
    }

    /// Inverse of [`direction`](Self::direction); `u` wraps into
    /// `[-0.5, width - 0.5)`.
    #[inline]
    pub fn pixel_of_direction(&self, d: &Vec3) -> (f64, f64) {
        let theta = d.y.atan2(d.x);
        let phi = d.z.atan2(d.x.hypot(d.y));
        let w = self.width as f64;
        let mut u = (theta + PI) / TAU * w - 0.5;
        if u >= w - 0.5 {
            u -= w;
        }
        let v = (FRAC_PI_2 - phi) / PI * self.height as f64 - 0.5;
        (u, v)
    }

    /// Solid angle of pixel row `v` (steradians).
    pub fn pixel_solid_angle(&self, v: usize) -> f64 {
        let h = self.height as f64;
        let top = FRAC_PI_2 - PI * (v as f64 / h);
        let bottom = FRAC_PI_2 - PI * ((v + 1) as f64 / h);
        TAU / self.width as f64 * (top.sin() - bottom.sin())
    }
}

/// World-space ray through pixel `(u, v)`: `(origin, unit direction)`.
pub fn pixel_to_ray(cam: &EquirectCamera, pose: &Pose, u: f64, v: f64) -> Result<(Vec3, Vec3)> {
    let in_range = |x: f64, n: usize| x >= -0.5 && x <= n as f64 - 0.5;
    if !in_range(u, cam.width) || !in_range(v, cam.height) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: cam.width,
            height: cam.height,
        });
    }
    Ok((pose.position, pose.rotation * cam.direction(u, v)))
}

/// Project a world point: `(u, v, ray length)`.
pub fn point_to_pixel(cam: &EquirectCamera, pose: &Pose, p: &Vec3) -> Result<(f64, f64, f64)> {
    let d = p - pose.position;
    let depth = d.norm();
    if depth == 0.0 {
        return Err(Error::DegenerateInput("point coincides with camera center".into()));
    }
    let local = pose.rotation.inverse_transform_vector(&d);
    let (u, v) = cam.pixel_of_direction(&local);
    Ok((u, v, depth))
}
