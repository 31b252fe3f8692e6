//! Pose augmentation: forward-warp a frame by a random motion, fill the
//! holes, then recover the motion with the direct estimator.

use monorefine::augment::{make_augmented_pair, score_estimator, PoseSampler};
use monorefine::geometry::{Intrinsics, Pose};
use monorefine::losses::AugLossParams;
use monorefine::refine::EstimatorConfig;
use monorefine::synthdata::{make_pair, Scene};
use monorefine::warp::HoleFillConfig;

fn main() -> monorefine::Result<()> {
    let k = Intrinsics::kitti_like(256, 96)?;
    let frame = make_pair(&Scene::random(100, &k), &Pose::identity(), &k)?;
    let mut sampler = PoseSampler::with_seed(11);

    for _ in 0..3 {
        let s = make_augmented_pair(&frame.image_t, &frame.depth_t, &k, &mut sampler, HoleFillConfig::default())?;
        let holes = 1.0 - s.h_prime.count_ones() as f64 / s.h_prime.len() as f64;
        let zeroed = s.h2.len() - s.h2.count_ones();
        let score = score_estimator(&s, &k, &EstimatorConfig::coarse(), AugLossParams::default())?;
        let e = score.estimate.inverse().compose(&s.label);
        println!(
            "label |t| {:.3} m, {:.2} deg | holes {:.1}%, inpainted {}, zeroed {} | error {:.4} m, {:.3} deg | loss {:.4}",
            s.label.translation.norm(),
            s.label.rotation_angle().to_degrees(),
            100.0 * holes,
            s.h3.count_ones(),
            zeroed,
            e.translation.norm(),
            e.rotation_angle().to_degrees(),
            score.loss
        );
    }
    Ok(())
}
