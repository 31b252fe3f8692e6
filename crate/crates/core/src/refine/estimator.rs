use nalgebra::{Matrix2x3, Matrix3x6, Matrix6, Vector3, Vector6};

use super::pyramid::half_mask;
use crate::autodiff::{se3, Tape};
use crate::error::{invalid, Error, Result};
use crate::geometry::{skew, Intrinsics, Pose, Twist, EPS_Z};
use crate::imagebuf::sample::apply_tap;
use crate::imagebuf::{bilinear_tap, box_mean, dilate, downsample2, DepthMap, Grid, Image, Mask};
use crate::losses::photometric_taped;
use crate::warp::{check_size, inverse_warp_taped};

/// Settings of the direct photometric pose estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Objective evaluations allowed in total; unused evaluations of a
    /// coarse scale carry over to the next finer one.
    pub iterations: usize,
    /// Number of scales, coarsest first; 1 means full resolution only.
    pub pyramid_levels: usize,
    /// RMS pixel displacement of the first trial step at each scale.
    pub initial_step: f64,
    /// Stop once the trial step falls below this displacement (pixels).
    pub min_step: f64,
    pub max_step: f64,
    pub lambda_rho: f64,
    pub ssim_radius: usize,
    /// Per-pixel errors pass through `c·ln(1 + σ/c)` to damp occlusion
    /// outliers; infinity keeps the plain mean.
    pub robust_scale: f64,
    /// The initial pose is kept unless the loss drops by at least this fraction.
    pub tolerance: f64,
}

impl EstimatorConfig {
    /// Budget for estimating a full relative pose from scratch.
    pub fn coarse() -> Self {
        Self {
            iterations: 100,
            pyramid_levels: 3,
            initial_step: 1.0,
            min_step: 1e-3,
            max_step: 4.0,
            lambda_rho: 0.15,
            ssim_radius: 1,
            robust_scale: 0.02,
            tolerance: 0.0,
        }
    }

    /// Smaller budget for the residual between an intermediate view and the target.
    pub fn residual() -> Self {
        Self { iterations: 40, pyramid_levels: 1, initial_step: 0.5, robust_scale: 0.005, tolerance: 3e-3, ..Self::coarse() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.pyramid_levels == 0 {
            return Err(invalid("estimator needs at least one iteration and one scale"));
        }
        if !(self.min_step > 0.0 && self.initial_step >= self.min_step && self.max_step >= self.initial_step) {
            return Err(invalid("estimator steps must satisfy 0 < min <= initial <= max"));
        }
        if !(0.0..1.0).contains(&self.tolerance) {
            return Err(invalid("tolerance must lie in [0, 1)"));
        }
        if !(self.robust_scale > 0.0) {
            return Err(invalid("robust scale must be positive"));
        }
        Ok(())
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::coarse()
    }
}

/// One alignment problem: `source` is warped onto the pixel grid of
/// `target` using `target_depth`. Optional masks exclude pixels of either image.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub source: &'a Image,
    pub target: &'a Image,
    pub target_depth: &'a DepthMap,
    pub source_mask: Option<&'a Mask>,
    pub target_mask: Option<&'a Mask>,
    pub k: &'a Intrinsics,
}

impl<'a> Problem<'a> {
    pub fn new(source: &'a Image, target: &'a Image, target_depth: &'a DepthMap, k: &'a Intrinsics) -> Self {
        Self { source, target, target_depth, source_mask: None, target_mask: None, k }
    }

    fn validate(&self) -> Result<()> {
        check_size("source image", self.source, self.k)?;
        check_size("target image", self.target, self.k)?;
        check_size("target depth", self.target_depth, self.k)?;
        for m in [self.source_mask, self.target_mask].into_iter().flatten() {
            check_size("mask", m, self.k)?;
        }
        if !self.target_depth.is_positive() {
            return Err(invalid("target depth must be positive"));
        }
        Ok(())
    }
}

/// Result of [`estimate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub pose: Pose,
    /// Left increment applied to the initial pose: `pose = exp(twist) · init`.
    pub twist: Twist,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub evaluations: usize,
}

/// Box radius applied before each halving of the coarse-to-fine pyramid.
const PREFILTER_RADIUS: usize = 3;

struct Scale {
    source: Grid,
    target: Grid,
    depth: Grid,
    source_mask: Option<Grid>,
    target_mask: Grid,
    k: Intrinsics,
}

impl Scale {
    fn full(p: &Problem) -> Scale {
        Scale {
            source: p.source.grid().clone(),
            target: p.target.grid().clone(),
            depth: p.target_depth.grid().clone(),
            source_mask: p.source_mask.map(|m| m.grid().clone()),
            target_mask: p.target_mask.map_or_else(
                || Mask::ones(p.k.height, p.k.width).into_grid(),
                |m| m.grid().clone(),
            ),
            k: *p.k,
        }
    }

    fn half(&self) -> Result<Scale> {
        let (h, w) = (self.k.height / 2, self.k.width / 2);
        let k = self.k.downscaled(2, w, h);
        k.validate()?;
        Ok(Scale {
            source: downsample2(&box_mean(&self.source, PREFILTER_RADIUS))?,
            target: downsample2(&box_mean(&self.target, PREFILTER_RADIUS))?,
            depth: downsample2(&self.depth)?,
            source_mask: match &self.source_mask {
                Some(m) => Some(half_mask(&Mask::new(m.clone())?)?.into_grid()),
                None => None,
            },
            target_mask: half_mask(&Mask::new(self.target_mask.clone())?)?.into_grid(),
            k,
        })
    }

    /// Target pixels used by the objective around `pose`: inside the target
    /// mask, projecting in front of the camera at least `margin` pixels inside
    /// the source (and onto fully valid source-mask cells), eroded by the SSIM
    /// radius so no window reaches an unusable pixel.
    fn gate_at(&self, pose: &Pose, cfg: &EstimatorConfig) -> Grid {
        let k = &self.k;
        let margin = cfg.ssim_radius as f64 + 1.0;
        let (umax, vmax) = ((k.width - 1) as f64 - margin, (k.height - 1) as f64 - margin);
        let mut gate = Grid::zeros(k.height, k.width, 1);
        let mut s = [0.0];
        for r in 0..k.height {
            for c in 0..k.width {
                if self.target_mask.get(r, c, 0) == 0.0 {
                    continue;
                }
                let p = pose.transform_point(&(k.ray(c as f64, r as f64) * self.depth.get(r, c, 0)));
                if p.z <= EPS_Z {
                    continue;
                }
                let (u, v) = (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
                if !(u >= margin && u <= umax && v >= margin && v <= vmax) {
                    continue;
                }
                if let Some(sm) = &self.source_mask {
                    let tap = bilinear_tap(k.width, k.height, u, v).expect("inside");
                    apply_tap(sm, &tap, &mut s);
                    if s[0] < 1.0 - 1e-9 {
                        continue;
                    }
                }
                gate.set(r, c, 0, 1.0);
            }
        }
        let outside = Mask::new(gate.map(|g| 1.0 - g)).expect("binary");
        dilate(&outside, cfg.ssim_radius, 1).map(|o| 1.0 - o)
    }

    /// Mean photometric error over `gate` after moving by the left increment
    /// `xi`, and its gradient. Infinite when the gate covers under 1% of the image.
    fn objective(
        &self,
        xi: &Vector6<f64>,
        base: &Pose,
        gate: &Grid,
        cfg: &EstimatorConfig,
        grad: bool,
    ) -> (f64, Option<Vector6<f64>>) {
        let n = gate.sum();
        if n < 0.01 * gate.len() as f64 || n < 1.0 {
            return (f64::INFINITY, None);
        }
        let tape = Tape::new();
        let xi_grid = Grid::from_vec(xi.as_slice().to_vec());
        let x = if grad { tape.leaf(xi_grid) } else { tape.constant(xi_grid) };
        let pose = se3::compose(se3::exp(x), se3::constant_pose(&tape, base));
        let warp = inverse_warp_taped(
            tape.constant(self.source.clone()),
            None,
            tape.constant(self.depth.clone()),
            pose,
            &self.k,
        );
        let weights = warp.valid.zip_map(gate, |a, b| a * b).expect("mask shape");
        let sigma = photometric_taped(
            warp.warped_image,
            tape.constant(self.target.clone()),
            cfg.lambda_rho,
            cfg.ssim_radius,
        );
        let rho = if cfg.robust_scale.is_finite() {
            let c = cfg.robust_scale;
            sigma.scale(1.0 / c).offset(1.0).ln().scale(c)
        } else {
            sigma
        };
        let loss = (rho * tape.constant(weights)).sum().scale(1.0 / n);
        let value = loss.item();
        let g = if grad && value.is_finite() {
            tape.backward(loss).ok().map(|g| Vector6::from_column_slice(g.wrt(x).data()))
        } else {
            None
        };
        (value, g)
    }

    /// Objective at `pose` over the gate chosen at that pose.
    fn loss_at(&self, pose: &Pose, cfg: &EstimatorConfig) -> f64 {
        let gate = self.gate_at(pose, cfg);
        self.objective(&Vector6::zeros(), pose, &gate, cfg, false).0
    }

    /// Mean over target pixels of `JᵀJ`, `J` being the Jacobian of the projected
    /// pixel position with respect to a left increment of `pose`.
    fn displacement_metric(&self, pose: &Pose) -> Matrix6<f64> {
        let k = &self.k;
        let mut g = Matrix6::zeros();
        let mut n = 0usize;
        for r in 0..k.height {
            for c in 0..k.width {
                if self.target_mask.get(r, c, 0) == 0.0 {
                    continue;
                }
                let d = self.depth.get(r, c, 0);
                let p = pose.transform_point(&(k.ray(c as f64, r as f64) * d));
                if p.z <= EPS_Z {
                    continue;
                }
                let iz = 1.0 / p.z;
                let jp = Matrix2x3::new(k.fx * iz, 0.0, -k.fx * p.x * iz * iz, 0.0, k.fy * iz, -k.fy * p.y * iz * iz);
                let mut a = Matrix3x6::zeros();
                a.fixed_view_mut::<3, 3>(0, 0).copy_from(&nalgebra::Matrix3::identity());
                a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&Vector3::new(p.x, p.y, p.z))));
                let j = jp * a;
                g += j.transpose() * j;
                n += 1;
            }
        }
        if n > 0 {
            g /= n as f64;
        }
        let damping = 1e-6 * g.trace() / 6.0 + 1e-12;
        g + Matrix6::identity() * damping
    }
}

/// Estimates the pose aligning `a` to `b` (mapping `b`-frame points into the
/// `a` frame), starting from `exp(init)`. Returns `exp(ξ*) · exp(init)`.
pub fn direct_estimate(
    a: &Image,
    b: &Image,
    depth_b: &DepthMap,
    k: &Intrinsics,
    init: &Twist,
    cfg: &EstimatorConfig,
) -> Result<Pose> {
    Ok(estimate(&Problem::new(a, b, depth_b, k), &init.exp(), cfg)?.pose)
}

/// Full form of [`direct_estimate`]: explicit masks and a diagnostic record.
pub fn estimate(problem: &Problem, init: &Pose, cfg: &EstimatorConfig) -> Result<Estimate> {
    estimate_at_level(problem, init, cfg, 1)
}

pub(crate) fn estimate_at_level(problem: &Problem, init: &Pose, cfg: &EstimatorConfig, level: usize) -> Result<Estimate> {
    problem.validate()?;
    cfg.validate()?;
    let mut scales = vec![Scale::full(problem)];
    for _ in 1..cfg.pyramid_levels {
        let last = scales.last().unwrap();
        if last.k.width < 16 || last.k.height < 8 {
            break;
        }
        let next = last.half()?;
        scales.push(next);
    }
    let diverged = |xi: &Vector6<f64>| Error::Diverged {
        level,
        last: Box::new(Twist::from_array(std::array::from_fn(|i| xi[i])).exp().compose(init)),
    };

    let pose_of = |xi: &Vector6<f64>| Twist::from_array(std::array::from_fn(|i| xi[i])).exp().compose(init);
    let mut xi = Vector6::zeros();
    let initial_loss = scales[0].loss_at(init, cfg);
    if initial_loss.is_nan() {
        return Err(diverged(&xi));
    }
    let mut evaluations = 1;
    let mut remaining = cfg.iterations;
    for (left, scale) in scales.iter().enumerate().rev() {
        let budget = remaining / (left + 1);
        let mut gate = scale.gate_at(&pose_of(&xi), cfg);
        let (mut f, g) = scale.objective(&xi, init, &gate, cfg, true);
        evaluations += 1;
        if f.is_nan() {
            return Err(diverged(&xi));
        }
        let Some(mut grad) = g else {
            remaining = remaining.saturating_sub(1);
            continue;
        };
        let metric = scale.displacement_metric(&pose_of(&xi));
        let chol = metric.cholesky();
        let mut step = cfg.initial_step;
        let mut used = 1;
        while used < budget && step >= cfg.min_step {
            let dir = match &chol {
                Some(c) => c.solve(&grad),
                None => grad,
            };
            let rms = dir.dot(&(metric * dir)).sqrt();
            if !(rms > 0.0) {
                break;
            }
            let cand = xi - dir * (step / rms);
            let (fc, gc) = scale.objective(&cand, init, &gate, cfg, true);
            used += 1;
            evaluations += 1;
            if fc.is_nan() {
                return Err(diverged(&xi));
            }
            let Some(gc) = gc.filter(|_| fc < f) else {
                step *= 0.5;
                continue;
            };
            xi = cand;
            step = (step * 1.5).min(cfg.max_step);
            let next_gate = scale.gate_at(&pose_of(&xi), cfg);
            if next_gate == gate {
                f = fc;
                grad = gc;
            } else {
                gate = next_gate;
                let (fr, gr) = scale.objective(&xi, init, &gate, cfg, true);
                evaluations += 1;
                match gr {
                    Some(gr) if fr.is_finite() => {
                        f = fr;
                        grad = gr;
                    }
                    _ => break,
                }
            }
        }
        remaining = remaining.saturating_sub(used);
    }
    let mut final_loss = scales[0].loss_at(&pose_of(&xi), cfg);
    evaluations += 1;
    if final_loss.is_nan() {
        return Err(diverged(&xi));
    }
    if !(final_loss <= initial_loss * (1.0 - cfg.tolerance)) && initial_loss.is_finite() {
        xi = Vector6::zeros();
        final_loss = initial_loss;
    }
    let twist = Twist::from_array(std::array::from_fn(|i| xi[i]));
    Ok(Estimate { pose: twist.exp().compose(init), twist, initial_loss, final_loss, evaluations })
}

/// The estimator's own objective for `cfg` at `pose`, at full resolution.
pub fn pose_objective(problem: &Problem, pose: &Pose, cfg: &EstimatorConfig) -> Result<f64> {
    problem.validate()?;
    cfg.validate()?;
    Ok(Scale::full(problem).loss_at(pose, cfg))
}

/// Mean photometric error of aligning `a` to `b` with `pose` over the pixels
/// that project inside `a` (the estimator's objective at full resolution).
pub fn photometric_pose_loss(problem: &Problem, pose: &Pose, lambda_rho: f64, ssim_radius: usize) -> Result<f64> {
    problem.validate()?;
    let cfg = EstimatorConfig { lambda_rho, ssim_radius, robust_scale: f64::INFINITY, ..EstimatorConfig::coarse() };
    Ok(Scale::full(problem).loss_at(pose, &cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{make_pair, Scene};

    #[test]
    fn identical_images_stay_at_identity() {
        let k = Intrinsics::kitti_like(64, 24).unwrap();
        let (img, depth) = Scene::random(2, &k).render(&Pose::identity(), &k).unwrap();
        let pose = direct_estimate(&img, &img, &depth, &k, &Twist::zero(), &EstimatorConfig::coarse()).unwrap();
        assert!(pose.log().unwrap().norm() < 1e-4);
    }

    #[test]
    fn recovers_lateral_translation_on_a_plane() {
        let k = Intrinsics::kitti_like(128, 48).unwrap();
        let truth = Pose::from_translation(Vector3::new(0.1, 0.0, 0.0));
        let pair = make_pair(&Scene::plane(5.0, 4, &k), &truth, &k).unwrap();
        let est = estimate(
            &Problem::new(&pair.image_t, &pair.image_t1, &pair.depth_t1, &k),
            &Pose::identity(),
            &EstimatorConfig::coarse(),
        )
        .unwrap();
        let err = (est.pose.translation - truth.translation).norm();
        assert!(err < 0.02 * 0.1, "translation error {err}");
        assert!(est.final_loss <= est.initial_loss);
    }

    #[test]
    fn starting_at_the_truth_stays_there() {
        let k = Intrinsics::kitti_like(96, 32).unwrap();
        let truth = Pose::from_euler_xyz(0.0, 0.03, 0.0, Vector3::new(0.05, 0.0, 0.4));
        let pair = make_pair(&Scene::plane(8.0, 5, &k), &truth, &k).unwrap();
        let pose = direct_estimate(&pair.image_t, &pair.image_t1, &pair.depth_t1, &k, &truth.log().unwrap(), &EstimatorConfig::coarse())
            .unwrap();
        assert!((pose.translation - truth.translation).norm() < 0.01);
        assert!(pose.compose(&truth.inverse()).rotation_angle() < 0.002);
    }

    #[test]
    fn rejects_bad_configuration() {
        let k = Intrinsics::kitti_like(32, 16).unwrap();
        let img = Image::from_fn(16, 32, 1, |r, c, _| ((r + c) % 3) as f64 / 3.0).unwrap();
        let d = DepthMap::filled(16, 32, 3.0);
        let cfg = EstimatorConfig { iterations: 0, ..EstimatorConfig::coarse() };
        assert!(direct_estimate(&img, &img, &d, &k, &Twist::zero(), &cfg).is_err());
    }
}
