//! Deterministic synthetic scenes rendered by analytic ray casting, giving
//! images and depth maps with exact ground truth.
//!
//! World coordinates coincide with the camera at the identity pose: `x`
//! right, `y` down, `z` forward. Depth is the camera-frame `z` of the hit.

mod texture;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use texture::{value_noise, Texture};

use crate::error::Result;
use crate::geometry::{Intrinsics, Pose};
use crate::imagebuf::{grad_x, grad_y, DepthMap, Grid, Image};

/// Height of the ground plane below the reference camera (metres, `y` down).
pub const GROUND_Y: f64 = 1.5;
/// Nominal projected size of one texture cell, in pixels.
pub const FEATURE_PIXELS: f64 = 6.0;

/// Rectangle facing the camera at constant `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub z: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub texture: Texture,
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct AaBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub texture: Texture,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub seed: u64,
    /// Background wall at this `z`, covering every forward ray.
    pub background_z: f64,
    pub background: Texture,
    pub ground: Option<Texture>,
    pub rects: Vec<Rect>,
    pub boxes: Vec<AaBox>,
    /// Angular size of a texture cell (radians); scales texture coordinates with distance.
    pub feature_angle: f64,
}

fn random_texture(rng: &mut ChaCha8Rng) -> Texture {
    Texture {
        seed: rng.gen(),
        base: [rng.gen(), rng.gen(), rng.gen()],
        stripe_freq: rng.gen_range(0.15..0.4),
        stripe_angle: rng.gen_range(0.0..std::f64::consts::PI),
    }
}

impl Scene {
    /// A single textured wall at depth `z`.
    pub fn plane(z: f64, seed: u64, k: &Intrinsics) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Scene {
            seed,
            background_z: z,
            background: random_texture(&mut rng),
            ground: None,
            rects: Vec::new(),
            boxes: Vec::new(),
            feature_angle: FEATURE_PIXELS / k.fx,
        }
    }

    /// Background wall, ground plane, a few floating rectangles and boxes
    /// standing on the ground, all at least 4 m ahead and within the view of `k`.
    pub fn random(seed: u64, k: &Intrinsics) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half_x = 0.5 * k.width as f64 / k.fx;
        let half_y = 0.5 * k.height as f64 / k.fy;
        let mut scene = Scene {
            seed,
            background_z: rng.gen_range(45.0..55.0),
            background: random_texture(&mut rng),
            ground: Some(random_texture(&mut rng)),
            rects: Vec::new(),
            boxes: Vec::new(),
            feature_angle: FEATURE_PIXELS / k.fx,
        };
        for _ in 0..rng.gen_range(3..6) {
            let z = rng.gen_range(6.0..30.0);
            let cx = rng.gen_range(-0.8..0.8) * half_x * z;
            let cy = rng.gen_range(-0.9..0.3) * half_y * z;
            let w = rng.gen_range(0.15..0.45) * half_x * z;
            let h = rng.gen_range(0.3..0.8) * half_y * z;
            scene.rects.push(Rect {
                z,
                x: (cx - w, cx + w),
                y: (cy - h, cy + h),
                texture: random_texture(&mut rng),
            });
        }
        for _ in 0..rng.gen_range(1..3) {
            let z0 = rng.gen_range(5.0..20.0);
            let depth = rng.gen_range(1.0..3.0);
            let cx = rng.gen_range(-0.7..0.7) * half_x * z0;
            let w = rng.gen_range(0.6..1.6);
            let h = rng.gen_range(0.8..2.5);
            scene.boxes.push(AaBox {
                min: Vector3::new(cx - w, GROUND_Y - h, z0),
                max: Vector3::new(cx + w, GROUND_Y, z0 + depth),
                texture: random_texture(&mut rng),
            });
        }
        scene
    }

    /// Nearest hit along `origin + s·dir`: ray parameter and colour.
    fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, [f64; 3])> {
        let fa = self.feature_angle;
        let mut best: Option<(f64, [f64; 3])> = None;
        let mut consider = |s: f64, colour: &dyn Fn() -> [f64; 3]| {
            if s > 1e-9 && best.as_ref().is_none_or(|b| s < b.0) {
                best = Some((s, colour()));
            }
        };
        if dir.z > 0.0 {
            let s = (self.background_z - origin.z) / dir.z;
            let p = origin + dir * s;
            let cell = fa * self.background_z;
            consider(s, &|| self.background.eval(p.x / cell, p.y / cell));
        }
        if let Some(tex) = &self.ground {
            if dir.y > 0.0 {
                let s = (GROUND_Y - origin.y) / dir.y;
                let p = origin + dir * s;
                if p.z > 0.5 {
                    // Perspective-scaled coordinates keep cells a similar size on screen.
                    consider(s, &|| tex.eval(p.x / (fa * p.z), GROUND_Y / (fa * p.z)));
                }
            }
        }
        for r in &self.rects {
            if dir.z.abs() < 1e-12 {
                continue;
            }
            let s = (r.z - origin.z) / dir.z;
            let p = origin + dir * s;
            if p.x >= r.x.0 && p.x <= r.x.1 && p.y >= r.y.0 && p.y <= r.y.1 {
                let cell = fa * r.z;
                consider(s, &|| r.texture.eval(p.x / cell, p.y / cell));
            }
        }
        for b in &self.boxes {
            if let Some((s, axis)) = slab(origin, dir, &b.min, &b.max) {
                let p = origin + dir * s;
                let cell = fa * 0.5 * (b.min.z + b.max.z);
                let (u, v) = match axis {
                    0 => (p.z, p.y),
                    1 => (p.x, p.z),
                    _ => (p.x, p.y),
                };
                consider(s, &|| b.texture.eval(u / cell + axis as f64 * 31.0, v / cell));
            }
        }
        best
    }

    /// Renders the view of a camera whose camera-to-world pose is `pose`.
    pub fn render(&self, pose: &Pose, k: &Intrinsics) -> Result<(Image, DepthMap)> {
        let (h, w) = (k.height, k.width);
        let mut buf = vec![0.0; h * w * 4];
        buf.par_chunks_mut(w * 4).enumerate().for_each(|(r, row)| {
            for (c, px) in row.chunks_exact_mut(4).enumerate() {
                let local = Vector3::new((c as f64 - k.cx) / k.fx, (r as f64 - k.cy) / k.fy, 1.0);
                let dir = pose.rotation * local;
                // The camera-frame z component of `dir` is one, so the ray parameter is the depth.
                if let Some((s, col)) = self.trace(&pose.translation, &dir) {
                    px[..3].copy_from_slice(&col);
                    px[3] = s;
                }
            }
        });
        let img = Grid::from_fn(h, w, 3, |r, c, ch| buf[(r * w + c) * 4 + ch]);
        let depth = Grid::from_fn(h, w, 1, |r, c, _| buf[(r * w + c) * 4 + 3]);
        Ok((Image::new(img)?, DepthMap::new(depth)?))
    }
}

/// Entry parameter and entry axis of a ray into a box, if it starts outside and hits.
fn slab(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<(f64, usize)> {
    let (mut t0, mut t1, mut axis) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        if a > t0 {
            t0 = a;
            axis = i;
        }
        t1 = t1.min(b);
    }
    (t0 <= t1 && t0 > 0.0).then_some((t0, axis))
}

/// Two rendered views with their relative pose.
#[derive(Clone, Debug)]
pub struct FramePair {
    pub image_t: Image,
    pub image_t1: Image,
    pub depth_t: DepthMap,
    pub depth_t1: DepthMap,
    /// Maps frame `t+1` coordinates into frame `t` (the camera-to-world pose
    /// of view `t+1` when view `t` sits at the origin).
    pub t_gt: Pose,
    pub k: Intrinsics,
}

/// Renders view `t` at the origin and view `t+1` at `t_gt`.
pub fn make_pair(scene: &Scene, t_gt: &Pose, k: &Intrinsics) -> Result<FramePair> {
    let (image_t, depth_t) = scene.render(&Pose::identity(), k)?;
    let (image_t1, depth_t1) = scene.render(t_gt, k)?;
    Ok(FramePair { image_t, image_t1, depth_t, depth_t1, t_gt: *t_gt, k: *k })
}

/// One rendered frame of a trajectory.
#[derive(Clone, Debug)]
pub struct Frame {
    pub image: Image,
    pub depth: DepthMap,
    /// Camera-to-world pose.
    pub pose: Pose,
}

/// Renders every camera-to-world pose of a trajectory.
pub fn make_trajectory(scene: &Scene, poses: &[Pose], k: &Intrinsics) -> Result<Vec<Frame>> {
    poses
        .iter()
        .map(|p| {
            let (image, depth) = scene.render(p, k)?;
            Ok(Frame { image, depth, pose: *p })
        })
        .collect()
}

/// Bounds for sampled relative motions, per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionRange {
    /// Forward translation range (m).
    pub forward: (f64, f64),
    pub lateral: f64,
    pub vertical: f64,
    /// Yaw bound (rad); pitch and roll use `tilt`.
    pub yaw: f64,
    pub tilt: f64,
}

impl Default for MotionRange {
    /// Driving-like motion within 10° and 1 m.
    fn default() -> Self {
        Self {
            forward: (0.3, 0.9),
            lateral: 0.3,
            vertical: 0.1,
            yaw: 9f64.to_radians(),
            tilt: 2f64.to_radians(),
        }
    }
}

impl MotionRange {
    pub fn sample(&self, rng: &mut impl Rng) -> Pose {
        let uni = |rng: &mut dyn rand::RngCore, a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        let t = Vector3::new(
            uni(rng, self.lateral),
            uni(rng, self.vertical),
            if self.forward.1 > self.forward.0 { rng.gen_range(self.forward.0..=self.forward.1) } else { self.forward.0 },
        );
        let (rx, ry, rz) = (uni(rng, self.tilt), uni(rng, self.yaw), uni(rng, self.tilt));
        Pose::from_euler_xyz(rx, ry, rz, t)
    }
}

/// `count` pairs, each from its own random scene and motion, all derived from `seed`.
pub fn pair_suite(seed: u64, count: usize, k: &Intrinsics, range: &MotionRange) -> Result<Vec<FramePair>> {
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5EED);
            let motion = range.sample(&mut rng);
            make_pair(&Scene::random(s, k), &motion, k)
        })
        .collect()
}

/// Fraction of pixels whose channel-mean gradient magnitude exceeds `floor`.
pub fn texture_coverage(img: &Image, floor: f64) -> f64 {
    let g = img.channel_mean();
    let (gx, gy) = (grad_x(&g), grad_y(&g));
    let n = gx.len();
    let hits = gx.data().iter().zip(gy.data()).filter(|(a, b)| a.hypot(**b) > floor).count();
    hits as f64 / n as f64
}
