use nalgebra::{Matrix3, Matrix4, Vector3};

use super::lie::Twist;
use crate::error::{invalid, Result};

/// Rigid transform `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validated constructor: `RᵀR = I` and `det R = 1` within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 || !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid(format!(
                "not a rigid transform (orthogonality error {ortho:e}, det {det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Transform applying `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn log(&self) -> Result<Twist> {
        Twist::log(self)
    }

    pub fn rotation_angle(&self) -> f64 {
        super::rotation_angle(&self.rotation)
    }

    /// Projects the rotation back onto SO(3) via SVD.
    pub fn reorthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Pose { rotation: r, translation: self.translation }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major top 3×4 block: `r00 r01 r02 t0 r10 … t2`.
    pub fn to_rows12(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    /// Inverse of [`Pose::to_rows12`]. The rotation is not re-validated.
    pub fn from_rows12(v: &[f64; 12]) -> Pose {
        Pose {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }

    /// Translation vector and unit quaternion (hemisphere `w ≥ 0`).
    pub fn to_tq(&self) -> (Vector3<f64>, Quaternion) {
        (self.translation, Quaternion::from_rotation(&self.rotation))
    }

    pub fn from_tq(t: Vector3<f64>, q: &Quaternion) -> Pose {
        Pose { rotation: q.to_rotation(), translation: t }
    }

    /// Rotation about the x, y and z axes applied in that order (`R = Rz Ry Rx`).
    pub fn from_euler_xyz(rx: f64, ry: f64, rz: f64, t: Vector3<f64>) -> Pose {
        let (sx, cx) = rx.sin_cos();
        let (sy, cy) = ry.sin_cos();
        let (sz, cz) = rz.sin_cos();
        let mx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        let my = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let mz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        Pose { rotation: mz * my * mx, translation: t }
    }
}

/// Unit quaternion `(w, x, y, z)` with the hemisphere convention `w ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Shepperd's method followed by normalisation and the hemisphere fix.
    ///
    /// With `w == 0` (half turns) the first non-zero vector component is made positive.
    pub fn from_rotation(r: &Matrix3<f64>) -> Quaternion {
        let tr = r.trace();
        let (w, x, y, z);
        if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Quaternion { w, x, y, z }.normalized().canonical()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    fn canonical(self) -> Quaternion {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else {
            [self.x, self.y, self.z].into_iter().find(|v| *v != 0.0).is_some_and(|v| v < 0.0)
        };
        if flip {
            Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn to_rotation(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

/// How many compositions [`PoseAccumulator`] performs between re-orthonormalisations.
pub const REORTHONORMALIZE_EVERY: usize = 32;

/// Running product of poses that bounds rotation drift by projecting back
/// onto SO(3) every [`REORTHONORMALIZE_EVERY`] compositions.
#[derive(Clone, Debug)]
pub struct PoseAccumulator {
    current: Pose,
    since_fix: usize,
}

impl PoseAccumulator {
    pub fn new(start: Pose) -> Self {
        Self { current: start, since_fix: 0 }
    }

    /// `current ← current · step`.
    pub fn push(&mut self, step: &Pose) -> Pose {
        self.current = self.current.compose(step);
        self.since_fix += 1;
        if self.since_fix >= REORTHONORMALIZE_EVERY {
            self.current = self.current.reorthonormalized();
            self.since_fix = 0;
        }
        self.current
    }

    pub fn current(&self) -> Pose {
        self.current
    }
}
