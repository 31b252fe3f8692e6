//! Pose augmentation: a random rigid motion is applied to a frame by forward
//! warping, the holes are patched, and the known motion becomes a label that
//! any pose estimator can be scored against.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, Quaternion};
use crate::imagebuf::{DepthMap, Grid, Image, Mask};
use crate::losses::{aug_pose_loss_taped, AugLossParams};
use crate::refine::{estimate, EstimatorConfig, Problem};
use crate::warp::{fill_depth_nearest, fill_holes, forward_warp, HoleFillConfig};

/// Uniform per-axis sampler of small rigid motions.
///
/// The `i`-th draw depends only on `seed` and `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSampler {
    /// Bound on each Euler angle (rad).
    pub max_rotation: f64,
    /// Bound on each translation component (m).
    pub max_translation: f64,
    pub seed: u64,
    counter: u64,
}

impl PoseSampler {
    pub fn new(max_rotation: f64, max_translation: f64, seed: u64) -> Result<Self> {
        if !(max_rotation >= 0.0 && max_translation >= 0.0) || !max_rotation.is_finite() || !max_translation.is_finite() {
            return Err(invalid("sampler ranges must be finite and non-negative"));
        }
        Ok(Self { max_rotation, max_translation, seed, counter: 0 })
    }

    /// 5° and 0.3 m per axis.
    pub fn with_seed(seed: u64) -> Self {
        Self::new(5f64.to_radians(), 0.3, seed).expect("default ranges are valid")
    }

    /// Number of poses drawn so far.
    pub fn drawn(&self) -> u64 {
        self.counter
    }

    /// The `index`-th pose of this sampler's sequence, without advancing it.
    pub fn pose_at(&self, index: u64) -> Pose {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut uni = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        let (rx, ry, rz) = (uni(self.max_rotation), uni(self.max_rotation), uni(self.max_rotation));
        let t = Vector3::new(uni(self.max_translation), uni(self.max_translation), uni(self.max_translation));
        Pose::from_euler_xyz(rx, ry, rz, t)
    }
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Draws the next pose: angles about x, y, z and a translation, each uniform
/// within its bound; the rotation is `Rz Ry Rx`.
pub fn sample_pose(sampler: &mut PoseSampler) -> Pose {
    let p = sampler.pose_at(sampler.counter);
    sampler.counter += 1;
    p
}

/// A frame, its augmented counterpart and the motion between them.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub original: Image,
    /// Hole-filled forward warp of `original`.
    pub augmented: Image,
    /// Motion taking points of the original camera frame into the augmented one.
    pub label: Pose,
    /// Splat coverage.
    pub h_prime: Mask,
    /// Coverage after dilation; the pixels of `augmented` that carry content.
    pub h2: Mask,
    /// Inpainted ring `h2 − h_prime`.
    pub h3: Mask,
    /// Splatted depth in the augmented view, holes filled from the nearest splat.
    pub depth: DepthMap,
}

/// Draws a pose from `sampler`, forward-warps `image` with `depth` and fills the holes.
pub fn make_augmented_pair(
    image: &Image,
    depth: &DepthMap,
    k: &Intrinsics,
    sampler: &mut PoseSampler,
    fill: HoleFillConfig,
) -> Result<AugmentedSample> {
    let label = sample_pose(sampler);
    augment_with(image, depth, k, &label, fill)
}

/// [`make_augmented_pair`] with a given motion.
pub fn augment_with(
    image: &Image,
    depth: &DepthMap,
    k: &Intrinsics,
    label: &Pose,
    fill: HoleFillConfig,
) -> Result<AugmentedSample> {
    let fw = forward_warp(image, depth, label, k)?;
    let filled = fill_holes(&fw, fill)?;
    let depth_aug = fill_depth_nearest(&fw.splat_depth, &fw.hole_mask).ok_or(Error::EmptyValidSet)?;
    debug_assert!(filled.h3.data().iter().zip(filled.h2.data().iter().zip(filled.h_prime.data())).all(|(a, (b, c))| *a == b - c));
    Ok(AugmentedSample {
        original: image.clone(),
        augmented: filled.image,
        label: *label,
        h_prime: filled.h_prime,
        h2: filled.h2,
        h3: filled.h3,
        depth: depth_aug,
    })
}

/// Value and gradients of the augmentation loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugScore {
    /// Estimated motion, in the same direction as the label.
    pub estimate: Pose,
    pub loss: f64,
    pub d_w_t: f64,
    pub d_w_q: f64,
    /// Gradient with respect to the estimated translation.
    pub d_t: Vector3<f64>,
    /// Gradient with respect to the estimated quaternion `(w, x, y, z)`.
    pub d_q: [f64; 4],
}

/// Augmentation loss of `estimated` against `label`, with gradients.
pub fn score_pose(estimated: &Pose, label: &Pose, params: AugLossParams) -> AugScore {
    let (t_m, q_m) = estimated.to_tq();
    let (t_a, q_a) = label.to_tq();
    let tape = Tape::new();
    let v3 = |v: &Vector3<f64>| Grid::from_vec(v.as_slice().to_vec());
    let v4 = |q: &Quaternion| Grid::from_vec(q.to_array().to_vec());
    let (tm, qm) = (tape.leaf(v3(&t_m)), tape.leaf(v4(&q_m)));
    let (wt, wq) = (tape.leaf(Grid::scalar(params.w_t)), tape.leaf(Grid::scalar(params.w_q)));
    let loss = aug_pose_loss_taped(tm, qm, tape.constant(v3(&t_a)), tape.constant(v4(&q_a)), wt, wq);
    let g = tape.backward(loss).expect("scalar loss");
    let dq = g.wrt(qm);
    AugScore {
        estimate: *estimated,
        loss: loss.item(),
        d_w_t: g.wrt(wt).as_scalar(),
        d_w_q: g.wrt(wq).as_scalar(),
        d_t: Vector3::from_column_slice(g.wrt(tm).data()),
        d_q: [dq.data()[0], dq.data()[1], dq.data()[2], dq.data()[3]],
    }
}

/// Runs the direct estimator on the original frame and its augmentation, then
/// scores the result against the label.
///
/// The augmented frame is the target, its splatted depth stands in for a
/// predicted depth, and only pixels inside `h2` take part.
pub fn score_estimator(
    sample: &AugmentedSample,
    k: &Intrinsics,
    cfg: &EstimatorConfig,
    params: AugLossParams,
) -> Result<AugScore> {
    let problem = Problem {
        target_mask: Some(&sample.h2),
        ..Problem::new(&sample.original, &sample.augmented, &sample.depth, k)
    };
    let est = estimate(&problem, &Pose::identity(), cfg)?;
    Ok(score_pose(&est.pose.inverse(), &sample.label, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{Scene, make_pair};

    fn frame(seed: u64) -> (Image, DepthMap, Intrinsics) {
        let k = Intrinsics::kitti_like(64, 24).unwrap();
        let p = make_pair(&Scene::random(seed, &k), &Pose::identity(), &k).unwrap();
        (p.image_t, p.depth_t, k)
    }

    #[test]
    fn zero_ranges_give_identity() {
        let mut s = PoseSampler::new(0.0, 0.0, 9).unwrap();
        for _ in 0..5 {
            let p = sample_pose(&mut s);
            assert_eq!(p.to_matrix(), Pose::identity().to_matrix());
        }
        assert_eq!(s.drawn(), 5);
        assert!(PoseSampler::new(-0.1, 0.0, 0).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let (mut a, mut b) = (PoseSampler::with_seed(4), PoseSampler::with_seed(4));
        let mut c = PoseSampler::with_seed(5);
        for _ in 0..10 {
            let (pa, pb, pc) = (sample_pose(&mut a), sample_pose(&mut b), sample_pose(&mut c));
            assert_eq!(pa, pb);
            assert_ne!(pa, pc);
        }
    }

    #[test]
    fn marginals_are_uniform() {
        let mut s = PoseSampler::new(0.1, 0.3, 21).unwrap();
        let mut xs: Vec<f64> = (0..10_000).map(|_| sample_pose(&mut s).translation.x).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x + 0.3) / 0.6;
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value for n = 10 000.
        assert!(ks < 1.63 / n.sqrt(), "KS statistic {ks}");
        assert!(xs[0] >= -0.3 && xs[xs.len() - 1] <= 0.3);
    }

    #[test]
    fn identity_sampler_reproduces_the_frame() {
        let (img, d, k) = frame(2);
        let mut s = PoseSampler::new(0.0, 0.0, 0).unwrap();
        let a = make_augmented_pair(&img, &d, &k, &mut s, HoleFillConfig::default()).unwrap();
        assert_eq!(a.augmented, img);
        assert_eq!(a.h_prime.count_ones(), a.h_prime.len());
        assert_eq!(a.h3.count_ones(), 0);
    }

    #[test]
    fn masks_partition_and_output_is_deterministic() {
        let (img, d, k) = frame(3);
        let run = || make_augmented_pair(&img, &d, &k, &mut PoseSampler::with_seed(8), HoleFillConfig::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        for i in 0..a.h2.len() {
            assert_eq!(a.h3.data()[i], a.h2.data()[i] - a.h_prime.data()[i]);
        }
        assert!(a.depth.is_positive());
    }

    #[test]
    fn hole_fraction_grows_with_lateral_motion() {
        let k = Intrinsics::kitti_like(64, 24).unwrap();
        let p = make_pair(&Scene::plane(6.0, 1, &k), &Pose::identity(), &k).unwrap();
        let mut last = 0.0;
        for i in 0..8 {
            let pose = Pose::from_translation(Vector3::new(0.1 * i as f64, 0.0, 0.0));
            let a = augment_with(&p.image_t, &p.depth_t, &k, &pose, HoleFillConfig::default()).unwrap();
            let frac = 1.0 - a.h_prime.count_ones() as f64 / a.h_prime.len() as f64;
            assert!(frac >= last, "step {i}: {frac} < {last}");
            last = frac;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn exact_estimate_scores_zero() {
        let label = Pose::from_euler_xyz(0.02, -0.01, 0.03, Vector3::new(0.1, 0.0, -0.2));
        let s = score_pose(&label, &label, AugLossParams::default());
        assert!(s.loss.abs() < 1e-12);
    }

    #[test]
    fn identity_against_a_translation() {
        let label = Pose::from_translation(Vector3::new(0.2, 0.0, 0.0));
        let s = score_pose(&Pose::identity(), &label, AugLossParams::default());
        assert!((s.loss - 0.2).abs() < 1e-12);
        assert!((s.d_t.x + 1.0).abs() < 1e-9);
        // dL/dw = 1 − e·e^{−w}
        assert!((s.d_w_t - 0.8).abs() < 1e-9);
        assert!((s.d_w_q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weight_descent_reaches_log_error() {
        let label = Pose::from_euler_xyz(0.0, 0.0, 0.2, Vector3::new(0.5, 0.0, 0.0));
        let est = Pose::identity();
        let mut p = AugLossParams { w_t: 0.0, w_q: 0.0 };
        for _ in 0..2000 {
            let s = score_pose(&est, &label, p);
            p.w_t -= 0.1 * s.d_w_t;
            p.w_q -= 0.1 * s.d_w_q;
        }
        let (_, q) = label.to_tq();
        let eq = ((q.w - 1.0).powi(2) + q.x.powi(2) + q.y.powi(2) + q.z.powi(2)).sqrt();
        assert!((p.w_t - 0.5f64.ln()).abs() < 1e-6);
        assert!((p.w_q - eq.ln()).abs() < 1e-6);
    }

    #[test]
    fn estimator_recovers_a_sampled_label() {
        let k = Intrinsics::kitti_like(256, 96).unwrap();
        let p = make_pair(&Scene::random(100, &k), &Pose::identity(), &k).unwrap();
        let (img, d) = (p.image_t, p.depth_t);
        let label = PoseSampler::with_seed(11).pose_at(0);
        let a = augment_with(&img, &d, &k, &label, HoleFillConfig::default()).unwrap();
        let s = score_estimator(&a, &k, &EstimatorConfig::coarse(), AugLossParams::default()).unwrap();
        let err = (s.estimate.translation - label.translation).norm();
        assert!(err < 0.05 * label.translation.norm(), "error {err}");
        assert!(s.estimate.inverse().compose(&label).rotation_angle() < 0.5f64.to_radians());
    }
}
