//! Renders a frame pair from a random scene and checks that warping frame t
//! with the true pose reproduces frame t+1.

use monorefine::geometry::{Intrinsics, Pose};
use monorefine::imagebuf::io::write_grid;
use monorefine::synthdata::{make_pair, texture_coverage, Scene};
use monorefine::warp::inverse_warp;
use nalgebra::Vector3;

fn main() -> monorefine::Result<()> {
    let k = Intrinsics::kitti_like(256, 96)?;
    let scene = Scene::random(7, &k);
    let motion = Pose::from_euler_xyz(0.0, 0.03, 0.0, Vector3::new(0.1, 0.0, 0.8));
    let pair = make_pair(&scene, &motion, &k)?;

    let warp = inverse_warp(&pair.image_t, &pair.depth_t1, &pair.t_gt, &k)?;
    let (mut err, mut n) = (0.0, 0);
    for i in 0..warp.valid.len() {
        if warp.valid.data()[i] > 0.0 {
            for c in 0..3 {
                err += (warp.warped_image.data()[i * 3 + c] - pair.image_t1.data()[i * 3 + c]).abs();
            }
            n += 3;
        }
    }
    println!("textured fraction of frame t: {:.3}", texture_coverage(&pair.image_t, 0.01));
    println!("mean |warp - frame t+1| over {} valid values: {:.4}", n, err / n as f64);

    let out = std::env::temp_dir().join("monorefine_synth_pair");
    std::fs::create_dir_all(&out)?;
    write_grid(out.join("frame_t.ppm"), &pair.image_t)?;
    write_grid(out.join("frame_t1.ppm"), &pair.image_t1)?;
    write_grid(out.join("depth_t.pfm"), &pair.depth_t)?;
    println!("images written to {}", out.display());
    Ok(())
}
