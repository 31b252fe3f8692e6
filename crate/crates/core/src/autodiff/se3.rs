//! Rigid-motion operations on taped values.
//!
//! A pose is a `1 × 12` value holding the row-major rotation followed by the
//! translation, the same layout as [`exp_twist_generic`]. A twist is a
//! `1 × 6` value `[ρ, φ]`.

use nalgebra::{Matrix3, Vector3};

use super::{Dual, Tape, Var};
use crate::geometry::{exp_twist_generic, Intrinsics, Pose, EPS_Z};
use crate::imagebuf::Grid;

/// Coordinate assigned to points behind the camera so sampling treats them as out of view.
const BEHIND: f64 = -1.0e9;

fn split(v: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    (Matrix3::from_row_slice(&v[..9]), Vector3::new(v[9], v[10], v[11]))
}

fn join(r: &Matrix3<f64>, t: &Vector3<f64>) -> Grid {
    let mut v = Vec::with_capacity(12);
    for i in 0..3 {
        for j in 0..3 {
            v.push(r[(i, j)]);
        }
    }
    v.extend_from_slice(t.as_slice());
    Grid::from_vec(v)
}

pub fn pose_grid(pose: &Pose) -> Grid {
    join(&pose.rotation, &pose.translation)
}

pub fn constant_pose<'t>(tape: &'t Tape, pose: &Pose) -> Var<'t> {
    tape.constant(pose_grid(pose))
}

/// Reads a taped pose back as a [`Pose`] (without re-orthonormalising).
pub fn to_pose(v: Var<'_>) -> Pose {
    let (r, t) = split(v.value().data());
    Pose::from_parts_unchecked(r, t)
}

/// SE(3) exponential of a `1 × 6` twist.
pub fn exp<'t>(twist: Var<'t>) -> Var<'t> {
    let xv = twist.value();
    assert_eq!(xv.len(), 6, "twist must have six elements");
    let x: [Dual; 6] = std::array::from_fn(|i| Dual::variable(xv.data()[i], i));
    let m = exp_twist_generic(&x);
    let out = Grid::from_vec(m.iter().map(|d| d.value).collect());
    let jac: Vec<[f64; 6]> = m.iter().map(|d| d.grad).collect();
    let shape = xv.shape();
    twist.tape.op(out, &[twist], move |g| {
        let mut gx = Grid::zeros(shape.0, shape.1, shape.2);
        for (row, gi) in jac.iter().zip(g.data()) {
            for (k, j) in row.iter().enumerate() {
                gx.data_mut()[k] += gi * j;
            }
        }
        vec![gx]
    })
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn compose<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    let (ra, ta) = split(a.value().data());
    let (rb, tb) = split(b.value().data());
    let out = join(&(ra * rb), &(ra * tb + ta));
    a.tape.op(out, &[a, b], move |g| {
        let (gr, gt) = split(g.data());
        let gra = gr * rb.transpose() + gt * tb.transpose();
        let grb = ra.transpose() * gr;
        let gtb = ra.transpose() * gt;
        vec![join(&gra, &gt), join(&grb, &gtb)]
    })
}

pub fn inverse<'t>(a: Var<'t>) -> Var<'t> {
    let (r, t) = split(a.value().data());
    let rt = r.transpose();
    let out = join(&rt, &(-(rt * t)));
    a.tape.op(out, &[a], move |g| {
        let (gr, gt) = split(g.data());
        let grad_r = gr.transpose() - t * gt.transpose();
        let grad_t = -(r * gt);
        vec![join(&grad_r, &grad_t)]
    })
}

/// Applies a pose to every point of an `h × w × 3` grid.
pub fn transform_points<'t>(pose: Var<'t>, points: Var<'t>) -> Var<'t> {
    let (r, t) = split(pose.value().data());
    let pv = points.value();
    let (h, w, c) = pv.shape();
    assert_eq!(c, 3, "points need three channels");
    let mut out = Grid::zeros(h, w, 3);
    for (o, p) in out.data_mut().chunks_exact_mut(3).zip(pv.data().chunks_exact(3)) {
        let q = r * Vector3::new(p[0], p[1], p[2]) + t;
        o.copy_from_slice(q.as_slice());
    }
    pose.tape.op(out, &[pose, points], move |g| {
        let mut gr = Matrix3::zeros();
        let mut gt = Vector3::zeros();
        let mut gp = Grid::zeros(h, w, 3);
        let rt = r.transpose();
        for ((gq, p), gpo) in g
            .data()
            .chunks_exact(3)
            .zip(pv.data().chunks_exact(3))
            .zip(gp.data_mut().chunks_exact_mut(3))
        {
            let gq = Vector3::new(gq[0], gq[1], gq[2]);
            gr += gq * Vector3::new(p[0], p[1], p[2]).transpose();
            gt += gq;
            gpo.copy_from_slice((rt * gq).as_slice());
        }
        vec![join(&gr, &gt), gp]
    })
}

/// Unit-depth rays `K⁻¹ (u, v, 1)` for every pixel, as an `h × w × 3` grid.
pub fn ray_grid(k: &Intrinsics) -> Grid {
    Grid::from_fn(k.height, k.width, 3, |r, c, ch| match ch {
        0 => (c as f64 - k.cx) / k.fx,
        1 => (r as f64 - k.cy) / k.fy,
        _ => 1.0,
    })
}

/// Back-projects an `h × w × 1` depth map to camera-frame points.
pub fn backproject<'t>(depth: Var<'t>, k: &Intrinsics) -> Var<'t> {
    let rays = depth.tape.constant(ray_grid(k));
    rays * depth
}

/// Projects `h × w × 3` points to pixel coordinates (`h × w × 2`).
///
/// Points at or behind `EPS_Z` get a far out-of-view coordinate with zero
/// gradient. The returned grid flags points in front of the camera.
pub fn project<'t>(points: Var<'t>, k: &Intrinsics) -> (Var<'t>, Grid) {
    let pv = points.value();
    let (h, w, _) = pv.shape();
    let mut out = Grid::zeros(h, w, 2);
    let mut front = Grid::zeros(h, w, 1);
    let (fx, fy, cx, cy) = (k.fx, k.fy, k.cx, k.cy);
    for (i, p) in pv.data().chunks_exact(3).enumerate() {
        if p[2] > EPS_Z {
            out.data_mut()[2 * i] = fx * p[0] / p[2] + cx;
            out.data_mut()[2 * i + 1] = fy * p[1] / p[2] + cy;
            front.data_mut()[i] = 1.0;
        } else {
            out.data_mut()[2 * i] = BEHIND;
            out.data_mut()[2 * i + 1] = BEHIND;
        }
    }
    let mut word = 0u64;
    for (i, f) in front.data().iter().enumerate() {
        if *f == 0.0 {
            word = word.wrapping_mul(31).wrapping_add(i as u64 + 1);
        }
    }
    points.tape.note(word);
    let var = points.tape.op(out, &[points], move |g| {
        let mut gp = Grid::zeros(h, w, 3);
        for (i, p) in pv.data().chunks_exact(3).enumerate() {
            if p[2] <= EPS_Z {
                continue;
            }
            let (gu, gv) = (g.data()[2 * i], g.data()[2 * i + 1]);
            let iz = 1.0 / p[2];
            let o = &mut gp.data_mut()[3 * i..3 * i + 3];
            o[0] = gu * fx * iz;
            o[1] = gv * fy * iz;
            o[2] = -(gu * fx * p[0] + gv * fy * p[1]) * iz * iz;
        }
        vec![gp]
    });
    (var, front)
}
