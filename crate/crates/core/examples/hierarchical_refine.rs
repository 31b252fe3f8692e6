//! Coarse pose plus residual refinements through intermediate views.

use monorefine::geometry::Intrinsics;
use monorefine::refine::{hierarchical_refine, RefineConfig};
use monorefine::synthdata::{pair_suite, MotionRange};

fn main() -> monorefine::Result<()> {
    let k = Intrinsics::kitti_like(128, 48)?;
    let pairs = pair_suite(1, 3, &k, &MotionRange::default())?;
    for (i, p) in pairs.iter().enumerate() {
        let r = hierarchical_refine(&p.image_t, &p.image_t1, &p.depth_t, &p.depth_t1, &k, &RefineConfig::with_levels(3))?;
        println!("pair {i}: true |t| {:.3} m, {:.2} deg", p.t_gt.translation.norm(), p.t_gt.rotation_angle().to_degrees());
        for (m, (pose, loss)) in r.poses.iter().zip(&r.level_losses).enumerate() {
            let e = pose.inverse().compose(&p.t_gt);
            println!(
                "  level {}: error {:.4} m, {:.3} deg, photometric {:.5}",
                m + 1,
                e.translation.norm(),
                e.rotation_angle().to_degrees(),
                loss
            );
        }
    }
    Ok(())
}
