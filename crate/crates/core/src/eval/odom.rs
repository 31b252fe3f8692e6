use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::geometry::Pose;

/// Subsequence lengths (m) over which drift is measured.
pub const SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Camera-to-world poses with their frame indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<usize>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    /// Frames numbered from zero.
    pub fn new(poses: Vec<Pose>) -> Self {
        Self { frames: (0..poses.len()).collect(), poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Cumulative distance travelled up to each pose.
    pub fn arc_length(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for (i, p) in self.poses.iter().enumerate() {
            if i > 0 {
                acc += (p.translation - self.poses[i - 1].translation).norm();
            }
            d.push(acc);
        }
        d
    }
}

/// How the scale of a monocular prediction is fixed before drift evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaleCorrection {
    #[default]
    None,
    /// Scale the prediction by the ratio of total path lengths.
    PathLength,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdomConfig {
    pub scale: ScaleCorrection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdomMetrics {
    /// Mean translational drift (%); `None` when the ground truth is shorter than 100 m.
    pub t_rel: Option<f64>,
    /// Mean rotational drift (deg per 100 m).
    pub r_rel: Option<f64>,
    /// Position RMSE after similarity alignment (m).
    pub ate: f64,
    /// Number of (start, length) segments averaged.
    pub segments: usize,
}

impl OdomMetrics {
    pub fn length_insufficient(&self) -> bool {
        self.t_rel.is_none()
    }
}

/// Least-squares similarity `(s, R, t)` with `dst ≈ s R src + t`.
pub fn umeyama_sim3(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<(f64, Matrix3<f64>, Vector3<f64>)> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(invalid("alignment needs two equally long, non-empty point sets"));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        cov += (b - mu_d) * (a - mu_s).transpose();
        var_s += (a - mu_s).norm_squared();
    }
    cov /= n;
    var_s /= n;
    if var_s <= 0.0 {
        return Ok((1.0, Matrix3::identity(), mu_d - mu_s));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let s = (svd.singular_values.component_mul(&sign.diagonal())).sum() / var_s;
    Ok((s, r, mu_d - s * r * mu_s))
}

/// Drift over 100–800 m subsequences starting at every frame, and ATE.
///
/// Segment ends are the first frame whose ground-truth arc length exceeds
/// the start's by at least `L`. Drift is only reported when the ground truth
/// covers 100 m.
pub fn odom_metrics(pred: &Trajectory, gt: &Trajectory, cfg: &OdomConfig) -> Result<OdomMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predicted poses against {} ground-truth poses", pred.len(), gt.len())));
    }
    if gt.len() < 2 {
        return Err(invalid("trajectories need at least two poses"));
    }
    let ate = {
        let src: Vec<_> = pred.poses.iter().map(|p| p.translation).collect();
        let dst: Vec<_> = gt.poses.iter().map(|p| p.translation).collect();
        let (s, r, t) = umeyama_sim3(&src, &dst)?;
        let se: f64 = src.iter().zip(&dst).map(|(a, b)| (s * r * a + t - b).norm_squared()).sum();
        (se / src.len() as f64).sqrt()
    };
    let dist = gt.arc_length();
    let scale = match cfg.scale {
        ScaleCorrection::None => 1.0,
        ScaleCorrection::PathLength => {
            let len = *pred.arc_length().last().unwrap();
            if len > 0.0 {
                dist.last().unwrap() / len
            } else {
                1.0
            }
        }
    };
    let pred_poses: Vec<Pose> =
        pred.poses.iter().map(|p| Pose::from_parts_unchecked(p.rotation, p.translation * scale)).collect();
    let (mut t_sum, mut r_sum, mut count) = (0.0, 0.0, 0usize);
    for first in 0..gt.len() {
        for &len in &SEGMENT_LENGTHS {
            let Some(last) = (first..gt.len()).find(|&j| dist[j] >= dist[first] + len) else { continue };
            let d_gt = gt.poses[first].inverse().compose(&gt.poses[last]);
            let d_pred = pred_poses[first].inverse().compose(&pred_poses[last]);
            let err = d_pred.inverse().compose(&d_gt);
            t_sum += err.translation.norm() / len;
            r_sum += err.rotation_angle() / len;
            count += 1;
        }
    }
    let (t_rel, r_rel) = if count == 0 {
        (None, None)
    } else {
        let n = count as f64;
        (Some(100.0 * t_sum / n), Some(r_sum.to_degrees() * 100.0 / n))
    };
    Ok(OdomMetrics { t_rel, r_rel, ate, segments: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn straight(n: usize, step: f64) -> Trajectory {
        Trajectory::new((0..n).map(|i| Pose::from_translation(Vector3::new(0.0, 0.0, step * i as f64))).collect())
    }

    fn wiggly(n: usize) -> Trajectory {
        let mut poses = vec![Pose::identity()];
        for i in 1..n {
            let step = Pose::from_euler_xyz(0.0, 0.02 * (i as f64 * 0.1).sin(), 0.0, Vector3::new(0.0, 0.0, 2.0));
            poses.push(poses[i - 1].compose(&step));
        }
        Trajectory::new(poses)
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let gt = wiggly(200);
        let m = odom_metrics(&gt, &gt, &OdomConfig::default()).unwrap();
        assert_eq!(m.t_rel, Some(0.0));
        assert!(m.r_rel.unwrap().abs() < 1e-9);
        assert!(m.ate < 1e-9);
    }

    #[test]
    fn one_percent_overshoot() {
        let gt = straight(201, 1.0);
        let pred = straight(201, 1.01);
        let m = odom_metrics(&pred, &gt, &OdomConfig::default()).unwrap();
        assert!((m.t_rel.unwrap() - 1.0).abs() < 1e-4, "{:?}", m.t_rel);
        assert!(m.r_rel.unwrap().abs() < 1e-9);
        assert!(m.ate < 1e-9);
        let corrected = odom_metrics(&pred, &gt, &OdomConfig { scale: ScaleCorrection::PathLength }).unwrap();
        assert!(corrected.t_rel.unwrap() < 1e-9);
    }

    #[test]
    fn short_trajectories_get_ate_only() {
        let gt = straight(50, 1.0);
        let m = odom_metrics(&gt, &gt, &OdomConfig::default()).unwrap();
        assert!(m.length_insufficient());
        assert_eq!(m.segments, 0);
        assert!(odom_metrics(&straight(3, 1.0), &gt, &OdomConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn ate_ignores_a_global_similarity(rx in -1.0f64..1.0, ry in -1.0f64..1.0, s in 0.2f64..5.0, tx in -50.0f64..50.0) {
            let gt = wiggly(60);
            let g = Pose::from_euler_xyz(rx, ry, 0.3, Vector3::new(tx, 2.0, -3.0));
            let pred = Trajectory::new(
                gt.poses.iter().map(|p| {
                    let q = g.compose(p);
                    Pose::from_parts_unchecked(q.rotation, q.translation * s)
                }).collect(),
            );
            let m = odom_metrics(&pred, &gt, &OdomConfig::default()).unwrap();
            prop_assert!(m.ate < 1e-6, "ate {}", m.ate);
        }
    }
}
