use nalgebra::{Vector2, Vector3};

use crate::error::{invalid, Result};

/// Points with camera depth at or below this value are treated as behind the camera.
pub const EPS_Z: f64 = 1e-6;

/// Pinhole intrinsics together with the image size they apply to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Result of projecting a camera-frame point that lies in front of the camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image centre.
    pub fn centered(width: usize, height: usize, focal: f64) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) * 0.5,
            (height as f64 - 1.0) * 0.5,
            width,
            height,
        )
    }

    /// Normalised KITTI-like intrinsics (`fx = 0.58 W`, `fy = 1.92 H`, centred principal point).
    pub fn kitti_like(width: usize, height: usize) -> Result<Self> {
        Self::new(
            0.58 * width as f64,
            1.92 * height as f64,
            (width as f64 - 1.0) * 0.5,
            (height as f64 - 1.0) * 0.5,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("intrinsics out of range: {self:?}")))
        }
    }

    /// Intrinsics for an image downsampled by averaging `factor × factor` blocks.
    ///
    /// With pixel centres at integers, new pixel `i` covers old pixels
    /// `factor·i .. factor·i + factor - 1`, so `u' = (u + 0.5) / factor - 0.5`.
    pub fn downscaled(&self, factor: usize, width: usize, height: usize) -> Intrinsics {
        let f = factor as f64;
        Intrinsics {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: (self.cx + 0.5) / f - 0.5,
            cy: (self.cy + 0.5) / f - 0.5,
            width,
            height,
        }
    }

    /// Ray direction `K⁻¹ [u, v, 1]ᵀ` (unit z component).
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// `d · K⁻¹ [u, v, 1]ᵀ`.
    pub fn backproject(&self, pixel: Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(invalid(format!("depth must be positive, got {depth}")));
        }
        Ok(self.ray(pixel.x, pixel.y) * depth)
    }

    /// Pixel and depth of a camera-frame point, or `None` when it is behind the camera.
    pub fn project(&self, point: &Vector3<f64>) -> Option<Projected> {
        if point.z <= EPS_Z {
            return None;
        }
        Some(Projected {
            pixel: Vector2::new(
                self.fx * point.x / point.z + self.cx,
                self.fy * point.y / point.z + self.cy,
            ),
            depth: point.z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 120.0, 31.5, 23.5, 64, 48).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let k = k();
        let p = k.backproject(Vector2::new(k.cx, k.cy), 5.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn one_focal_length_right_is_45_degrees() {
        let k = k();
        let p = k.backproject(Vector2::new(k.cx + k.fx, k.cy), 2.0).unwrap();
        assert!((p - Vector3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
        let q = k.project(&Vector3::new(2.0, 0.0, 2.0)).unwrap();
        assert!((q.pixel - Vector2::new(k.cx + k.fx, k.cy)).norm() < 1e-12);
        assert_eq!(q.depth, 2.0);
    }

    #[test]
    fn project_on_axis_and_behind() {
        let k = k();
        let q = k.project(&Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(q.pixel, Vector2::new(k.cx, k.cy));
        assert_eq!(q.depth, 5.0);
        assert!(k.project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(k.project(&Vector3::new(0.0, 0.0, EPS_Z)).is_none());
    }

    #[test]
    fn rejects_bad_depth_and_intrinsics() {
        let k = k();
        assert!(k.backproject(Vector2::new(1.0, 1.0), 0.0).is_err());
        assert!(k.backproject(Vector2::new(1.0, 1.0), -3.0).is_err());
        assert!(Intrinsics::new(-1.0, 1.0, 2.0, 2.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 2.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 2.0, 0.0, 4, 4).is_err());
    }

    #[test]
    fn downscale_keeps_ray_through_block_centre() {
        let k = k();
        let s = k.downscaled(2, 32, 24);
        // Old pixels 4 and 5 average into new pixel 2, centred at old 4.5.
        let old = k.ray(4.5, 6.5);
        let new = s.ray(2.0, 3.0);
        assert!((old - new).norm() < 1e-12);
    }
}
