use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Half-angle of the cone around ±Z (and around the horizontal) used to
/// classify planes.
pub const CLASS_ANGLE_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneClass {
    Floor,
    Wall,
    Ceiling,
    Other,
}

impl PlaneClass {
    /// Orientation-only class. Floor/ceiling need an additional support
    /// test (see the SDM builder); this only says what the normal permits.
    pub fn from_normal(n: &Vec3) -> Self {
        let c = CLASS_ANGLE_DEG.to_radians();
        if n.z >= c.cos() {
            PlaneClass::Floor
        } else if n.z <= -c.cos() {
            PlaneClass::Ceiling
        } else if n.z.abs() <= c.sin() {
            PlaneClass::Wall
        } else {
            PlaneClass::Other
        }
    }

    pub fn is_structural(self) -> bool {
        !matches!(self, PlaneClass::Other)
    }
}

/// Infinite plane `normal · x = offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    pub class: PlaneClass,
    pub inlier_faces: Vec<usize>,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let len = normal.norm();
        Self {
            normal: normal / len,
            offset: offset / len,
            class: PlaneClass::Other,
            inlier_faces: Vec::new(),
        }
    }

    pub fn through(point: &Vec3, normal: &Vec3) -> Self {
        let n = normal.normalize();
        Self::new(n, n.dot(point))
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    #[inline]
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.signed_distance(p).abs()
    }

    #[inline]
    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }

    /// Orthonormal in-plane axes `(u, v)` with `u × v = normal`.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let helper = if n.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let u = helper.cross(&n).normalize();
        let v = n.cross(&u);
        (u, v)
    }

    /// Class permitted by the normal alone.
    pub fn orientation_class(&self) -> PlaneClass {
        PlaneClass::from_normal(&self.normal)
    }
}

/// Total-least-squares plane through `points`.
pub fn fit_plane(points: &[Vec3]) -> Result<Plane> {
    fit_plane_oriented(points, None)
}

/// As [`fit_plane`], flipping the normal so most of `normals` agree with it.
pub fn fit_plane_oriented(points: &[Vec3], normals: Option<&[Vec3]>) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= 0.0 || middle <= 1e-12 * largest {
        return Err(Error::DegenerateInput(
            "points are collinear or coincident".into(),
        ));
    }
    let mut n: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();

    let vote = normals.map(|ns| {
        ns.iter()
            .map(|m| {
                let d = n.dot(m);
                if d > 0.0 {
                    1i64
                } else if d < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .sum::<i64>()
    });
    let flip = match vote {
        Some(v) if v != 0 => v < 0,
        _ => canonical_flip(&n),
    };
    if flip {
        n = -n;
    }
    Ok(Plane::new(n, n.dot(&centroid)))
}

/// Prefer a positive Z component, then Y, then X.
fn canonical_flip(n: &Vec3) -> bool {
    const EPS: f64 = 1e-12;
    for c in [n.z, n.y, n.x] {
        if c.abs() > EPS {
            return c < 0.0;
        }
    }
    false
}
