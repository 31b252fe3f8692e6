use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

use super::Pose;
use crate::error::{Error, Result};

/// Minimal scalar interface so the exponential map can run on plain floats
/// and on forward-mode dual numbers alike.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// Below this squared angle the Rodrigues coefficients switch to their Taylor series.
const SMALL_ANGLE_SQ: f64 = 1e-6;

/// SE(3) exponential of `[ρ, φ]`, returned as the row-major rotation followed by the translation.
pub fn exp_twist_generic<S: Real>(xi: &[S; 6]) -> [S; 12] {
    let c = S::from_f64;
    let (rho, phi) = ([xi[0], xi[1], xi[2]], [xi[3], xi[4], xi[5]]);
    let theta_sq = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];
    let (a, b, cc) = if theta_sq.value() < SMALL_ANGLE_SQ {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        (
            c(1.0) - t2 / c(6.0) + t4 / c(120.0),
            c(0.5) - t2 / c(24.0) + t4 / c(720.0),
            c(1.0 / 6.0) - t2 / c(120.0) + t4 / c(5040.0),
        )
    } else {
        let theta = theta_sq.sqrt();
        let (s, co) = (theta.sin(), theta.cos());
        (s / theta, (c(1.0) - co) / theta_sq, (theta - s) / (theta_sq * theta))
    };

    let k = [
        [c(0.0), -phi[2], phi[1]],
        [phi[2], c(0.0), -phi[0]],
        [-phi[1], phi[0], c(0.0)],
    ];
    let mut k2 = [[c(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k2[i][j] = k[i][0] * k[0][j] + k[i][1] * k[1][j] + k[i][2] * k[2][j];
        }
    }
    let mut out = [c(0.0); 12];
    for i in 0..3 {
        let mut t = c(0.0);
        for j in 0..3 {
            let id = if i == j { c(1.0) } else { c(0.0) };
            out[3 * i + j] = id + a * k[i][j] + b * k2[i][j];
            let v = id + b * k[i][j] + cc * k2[i][j];
            t = t + v * rho[j];
        }
        out[9 + i] = t;
    }
    out
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Tangent-space coordinates of a pose: translational part `rho` (m) and rotational part `phi` (rad).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            rho: Vector3::new(a[0], a[1], a[2]),
            phi: Vector3::new(a[3], a[4], a[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z]
    }

    pub fn norm(&self) -> f64 {
        (self.rho.norm_squared() + self.phi.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn exp(&self) -> Pose {
        let m = exp_twist_generic(&self.to_array());
        Pose::from_parts_unchecked(
            Matrix3::new(m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]),
            Vector3::new(m[9], m[10], m[11]),
        )
    }

    /// Inverse of [`Twist::exp`]; fails within `1e-6` rad of a half turn.
    pub fn log(pose: &Pose) -> Result<Twist> {
        let r = &pose.rotation;
        let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let sin = 0.5 * w.norm();
        let cos = 0.5 * (r.trace() - 1.0);
        let theta = sin.atan2(cos);
        if theta > std::f64::consts::PI - 1e-6 {
            return Err(Error::AmbiguousLog { angle: theta });
        }
        let theta_sq = theta * theta;
        let scale = if theta_sq < SMALL_ANGLE_SQ {
            0.5 + theta_sq / 12.0 + 7.0 * theta_sq * theta_sq / 720.0
        } else {
            theta / (2.0 * theta.sin())
        };
        let phi = w * scale;
        // V⁻¹ = I − ½[φ]× + D [φ]×²
        let d = if theta_sq < SMALL_ANGLE_SQ {
            1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0
        } else {
            let a = theta.sin() / theta;
            let b = (1.0 - theta.cos()) / theta_sq;
            (1.0 - a / (2.0 * b)) / theta_sq
        };
        let k = skew(&phi);
        let v_inv = Matrix3::identity() - 0.5 * k + d * k * k;
        Ok(Twist { rho: v_inv * pose.translation, phi })
    }
}
