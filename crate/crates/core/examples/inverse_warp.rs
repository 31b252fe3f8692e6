//! Inverse warping a fronto-parallel wall: a sideways camera move of t_x
//! shifts the image by fx·t_x/d pixels.

use monorefine::geometry::{Intrinsics, Pose};
use monorefine::imagebuf::{bilinear_sample, DepthMap};
use monorefine::synthdata::{make_pair, Scene};
use monorefine::warp::inverse_warp;
use nalgebra::Vector3;

fn main() -> monorefine::Result<()> {
    let k = Intrinsics::kitti_like(128, 48)?;
    let d = 6.0;
    let frame = make_pair(&Scene::plane(d, 3, &k), &Pose::identity(), &k)?.image_t;

    for tx in [0.0, 0.1, 0.25] {
        let pose = Pose::from_translation(Vector3::new(tx, 0.0, 0.0));
        let w = inverse_warp(&frame, &DepthMap::filled(k.height, k.width, d), &pose, &k)?;
        let shift = k.fx * tx / d;
        let mut worst: f64 = 0.0;
        for r in 0..k.height {
            for c in 0..k.width {
                if w.valid.at(r, c) > 0.0 {
                    let (expected, _) = bilinear_sample(&frame, c as f64 + shift, r as f64);
                    for ch in 0..3 {
                        worst = worst.max((w.warped_image.get(r, c, ch) - expected[ch]).abs());
                    }
                }
            }
        }
        println!(
            "t_x = {tx:.2} m: shift {shift:.3} px, {} valid pixels, max deviation {worst:.2e}",
            w.valid.count_ones()
        );
    }
    Ok(())
}
