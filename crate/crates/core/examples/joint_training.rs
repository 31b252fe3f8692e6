//! Joint depth and pose refinement on one pair under both association modes.

use monorefine::eval::{depth_metrics, Scaling};
use monorefine::geometry::{Intrinsics, Pose, Twist};
use monorefine::imagebuf::{DepthMap, Mask};
use monorefine::losses::{AssociationMode, LossConfig, SmoothNorm};
use monorefine::refine::{joint_refine_step, DepthPyramid, JointConfig, JointState};
use monorefine::synthdata::{make_pair, value_noise, Scene};
use nalgebra::Vector3;

fn noisy(d: &DepthMap, seed: u64) -> monorefine::Result<DepthMap> {
    DepthMap::from_fn(d.height(), d.width(), |r, c| {
        d.get(r, c, 0) * (1.0 + 0.4 * (value_noise(seed, c as f64 / 6.0, r as f64 / 6.0) - 0.5))
    })
}

fn main() -> monorefine::Result<()> {
    let k = Intrinsics::kitti_like(64, 24)?;
    let truth = Pose::from_euler_xyz(0.0, 0.03, 0.0, Vector3::new(0.1, 0.0, 0.6));
    let p = make_pair(&Scene::random(4, &k), &truth, &k)?;
    let dt = DepthPyramid::from_full(&noisy(&p.depth_t, 1)?, 4)?;
    let dt1 = DepthPyramid::from_full(&noisy(&p.depth_t1, 2)?, 4)?;
    let coarse = Twist::from_array([0.1, 0.0, -0.1, 0.0, 0.02, 0.0]).exp().compose(&truth);
    let fine = Twist::from_array([0.01, 0.0, -0.01, 0.0, 0.002, 0.0]).exp().compose(&truth);
    let all = Mask::ones(k.height, k.width);

    for mode in [AssociationMode::AllDepthAllPose, AssociationMode::StopDepthForCoarsePose] {
        let loss = LossConfig { smooth_norm: SmoothNorm::Mean, ..LossConfig::with_mode(mode) };
        let cfg = JointConfig { loss, ..JointConfig::default() };
        let mut state = JointState::new(&dt, &dt1, &[coarse, fine])?;
        let before = depth_metrics(state.depth_t1().finest(), &p.depth_t1, &all, Scaling::Median, 80.0)?;
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..100 {
            last = joint_refine_step(&p.image_t, &p.image_t1, &mut state, &k, &cfg)?.total;
            first.get_or_insert(last);
        }
        let after = depth_metrics(state.depth_t1().finest(), &p.depth_t1, &all, Scaling::Median, 80.0)?;
        println!(
            "{mode:?}: loss {:.4} -> {last:.4}, AbsRel {:.4} -> {:.4}",
            first.unwrap(),
            before.abs_rel,
            after.abs_rel
        );
    }
    Ok(())
}
