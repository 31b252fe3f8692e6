use nalgebra::Vector3;
use rayon::prelude::*;

use super::check_size;
use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Pose, EPS_Z};
use crate::imagebuf::{DepthMap, Grid, Image, Mask};

/// Output of [`forward_warp`] before hole filling.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardWarpResult {
    /// Splatted image; holes are zero.
    pub image: Image,
    /// Depth of the winning splat in the new view; zero at holes.
    pub splat_depth: DepthMap,
    /// One where some source pixel landed, zero at holes.
    pub hole_mask: Mask,
}

/// Where one source pixel lands.
#[derive(Clone, Copy)]
struct Splat {
    target: usize,
    new_depth: f64,
}

/// Splats every source pixel into the view reached by `pose` (source frame
/// to new frame), rounding to the nearest pixel. When several pixels land on
/// the same cell the one with the smallest *source* depth wins, ties going to
/// the lowest row-major source index.
pub fn forward_warp(
    source: &Image,
    source_depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<ForwardWarpResult> {
    check_size("source image", source, k)?;
    check_size("source depth", source_depth, k)?;
    if !source_depth.is_positive() {
        return Err(invalid("source depth must be positive"));
    }
    let splats = project_all(source_depth, pose, k);
    Ok(resolve(source, source_depth, &splats, 0..splats.len()))
}

fn project_all(depth: &DepthMap, pose: &Pose, k: &Intrinsics) -> Vec<Option<Splat>> {
    let (h, w) = (k.height, k.width);
    (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / w, i % w);
            let d = depth.get(r, c, 0);
            let ray = Vector3::new((c as f64 - k.cx) / k.fx, (r as f64 - k.cy) / k.fy, 1.0);
            let p = pose.transform_point(&(ray * d));
            if p.z <= EPS_Z {
                return None;
            }
            let u = (k.fx * p.x / p.z + k.cx).round();
            let v = (k.fy * p.y / p.z + k.cy).round();
            if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
                return None;
            }
            Some(Splat { target: v as usize * w + u as usize, new_depth: p.z })
        })
        .collect()
}

/// Applies the z-buffer in the given visiting order; the result does not depend on it.
fn resolve(
    source: &Image,
    depth: &DepthMap,
    splats: &[Option<Splat>],
    order: impl Iterator<Item = usize>,
) -> ForwardWarpResult {
    let (h, w, c) = source.shape();
    let mut winner: Vec<Option<usize>> = vec![None; h * w];
    for i in order {
        let Some(s) = splats[i] else { continue };
        let slot = &mut winner[s.target];
        let better = match *slot {
            None => true,
            Some(j) => {
                let (di, dj) = (depth.data()[i], depth.data()[j]);
                di < dj || (di == dj && i < j)
            }
        };
        if better {
            *slot = Some(i);
        }
    }
    let mut image = Grid::zeros(h, w, c);
    let mut splat_depth = Grid::zeros(h, w, 1);
    let mut mask = Grid::zeros(h, w, 1);
    for (t, win) in winner.iter().enumerate() {
        let Some(i) = *win else { continue };
        image.data_mut()[t * c..(t + 1) * c].copy_from_slice(&source.data()[i * c..(i + 1) * c]);
        splat_depth.data_mut()[t] = splats[i].unwrap().new_depth;
        mask.data_mut()[t] = 1.0;
    }
    ForwardWarpResult {
        image: Image::new(image).expect("finite"),
        splat_depth: DepthMap::new(splat_depth).expect("positive"),
        hole_mask: Mask::new(mask).expect("binary"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |r, c, ch| 0.5 + 0.4 * ((0.9 * c as f64 + ch as f64).sin() * (0.6 * r as f64).cos()))
            .unwrap()
    }

    #[test]
    fn identity_is_lossless() {
        let k = Intrinsics::centered(9, 7, 6.0).unwrap();
        let img = textured(7, 9);
        let depth = DepthMap::from_fn(7, 9, |r, c| 1.0 + 0.1 * (r * c) as f64).unwrap();
        let out = forward_warp(&img, &depth, &Pose::identity(), &k).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.hole_mask.count_ones(), 63);
        assert!(out.splat_depth.max_abs_diff(&depth) < 1e-12);
    }

    #[test]
    fn nearer_source_pixel_wins_collision() {
        // Two pixels of one row: depth 1 at column 1, depth 3 at column 3. A
        // sideways move chosen so both land on the same target cell.
        let (w, f) = (5, 2.0);
        let k = Intrinsics::new(f, f, 2.0, 0.5, w, 1).unwrap();
        let img = Image::from_fn(1, w, 1, |_, c, _| 0.1 * c as f64).unwrap();
        let depth = DepthMap::from_fn(1, w, |_, c| match c {
            1 => 1.0,
            3 => 3.0,
            _ => 100.0,
        })
        .unwrap();
        // Column c at depth d moves to c + f·tx/d, so tx = 1.5 sends columns 1 and 3 (and 4) to column 4.
        let tx = 1.5;
        let pose = Pose::from_translation(Vector3::new(tx, 0.0, 0.0));
        let out = forward_warp(&img, &depth, &pose, &k).unwrap();
        assert_eq!(out.image.get(0, 4, 0), 0.1);
        assert_eq!(out.splat_depth.get(0, 4, 0), 1.0);
    }

    #[test]
    fn equal_depth_tie_goes_to_lowest_index() {
        let img = Image::from_fn(1, 4, 1, |_, c, _| 0.2 * c as f64).unwrap();
        let depth = DepthMap::filled(1, 4, 2.0);
        let splats = vec![
            Some(Splat { target: 0, new_depth: 2.0 }),
            Some(Splat { target: 0, new_depth: 2.0 }),
            None,
            Some(Splat { target: 3, new_depth: 2.0 }),
        ];
        let a = resolve(&img, &depth, &splats, 0..4);
        let b = resolve(&img, &depth, &splats, (0..4).rev());
        assert_eq!(a, b);
        assert_eq!(a.image.get(0, 0, 0), 0.0);
        assert_eq!(a.hole_mask.count_ones(), 2);
    }

    #[test]
    fn splat_order_does_not_matter() {
        let k = Intrinsics::centered(24, 16, 18.0).unwrap();
        let img = textured(16, 24);
        let depth = DepthMap::from_fn(16, 24, |r, c| 2.0 + ((r * 7 + c * 3) % 5) as f64).unwrap();
        let pose = Pose::from_euler_xyz(0.02, -0.05, 0.03, Vector3::new(0.3, -0.1, 0.4));
        let splats = project_all(&depth, &pose, &k);
        let base = resolve(&img, &depth, &splats, 0..splats.len());
        let mut order: Vec<usize> = (0..splats.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            order.shuffle(&mut rng);
            assert_eq!(resolve(&img, &depth, &splats, order.iter().copied()), base);
        }
    }

    #[test]
    fn lateral_move_opens_border_holes() {
        let (w, h, f, d, tx) = (40, 8, 20.0, 5.0, 1.0);
        let k = Intrinsics::centered(w, h, f).unwrap();
        let img = textured(h, w);
        let depth = DepthMap::filled(h, w, d);
        // Points move by -tx in the new frame, so content shifts left and the right border opens.
        let pose = Pose::from_translation(Vector3::new(-tx, 0.0, 0.0));
        let out = forward_warp(&img, &depth, &pose, &k).unwrap();
        let shift = (f * tx / d).round() as usize;
        for r in 0..h {
            for c in 0..w {
                let expect = if c < w - shift { 1.0 } else { 0.0 };
                assert_eq!(out.hole_mask.at(r, c), expect, "({r},{c})");
            }
        }
    }
}
