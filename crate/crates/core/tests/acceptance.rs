//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::time::Instant;

use monorefine::augment::{make_augmented_pair, score_pose, PoseSampler};
use monorefine::autodiff::{se3, Tape};
use monorefine::eval::{
    depth_metrics, format_kitti_poses, odom_metrics, parse_kitti_poses, OdomConfig, Scaling, Trajectory,
};
use monorefine::geometry::{Intrinsics, Pose, Quaternion, Twist};
use monorefine::gradcheck::{gradcheck, random_problem, GradcheckConfig};
use monorefine::imagebuf::{bilinear_sample, grad_x, DepthMap, Grid, Image, Mask};
use monorefine::losses::{
    aug_pose_loss, pair_loss, total_loss, AssociationMode, AugLossParams, LossConfig, PairInputs, SmoothNorm,
};
use monorefine::refine::{
    estimate, hierarchical_refine, joint_refine_step, DepthPyramid, EstimatorConfig, JointConfig, JointState,
    Problem, RefineConfig,
};
use monorefine::synthdata::{make_pair, pair_suite, value_noise, MotionRange, Scene};
use monorefine::warp::{fill_holes, forward_warp, inverse_warp, ForwardWarpResult, HoleFillConfig};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = monorefine::Result<(bool, String)>;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pose_errors(est: &Pose, truth: &Pose) -> (f64, f64) {
    let e = est.inverse().compose(truth);
    (e.translation.norm(), e.rotation_angle())
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let loss = LossConfig::with_mode(AssociationMode::AllDepthAllPose);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for seed in 0..10u64 {
        let size = 8 + 2 * (seed as usize % 5);
        let p = random_problem(seed, size, size, loss)?;
        for r in gradcheck(&p, &GradcheckConfig::default())? {
            worst = worst.max(r.max_rel_err);
            checked += r.checked;
            skipped += r.skipped;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-3 && secs < 120.0,
        format!("max rel err {worst:.2e} over {checked} components ({skipped} skipped), {secs:.1} s"),
    ))
}

fn warp_identities() -> Outcome {
    let k = Intrinsics::kitti_like(128, 48)?;
    let frame = make_pair(&Scene::random(5, &k), &Pose::identity(), &k)?;
    let id = inverse_warp(&frame.image_t, &frame.depth_t, &Pose::identity(), &k)?;
    let mut identity_err: f64 = 0.0;
    for i in 0..id.valid.len() {
        if id.valid.data()[i] > 0.0 {
            for c in 0..3 {
                identity_err = identity_err.max((id.warped_image.data()[3 * i + c] - frame.image_t.data()[3 * i + c]).abs());
            }
        }
    }

    let d = 6.0;
    let wall = make_pair(&Scene::plane(d, 3, &k), &Pose::identity(), &k)?.image_t;
    let slope = grad_x(wall.grid()).data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut shift_err: f64 = 0.0;
    for tx in [0.05, 0.1, 0.3] {
        let w = inverse_warp(&wall, &DepthMap::filled(k.height, k.width, d), &Pose::from_translation(Vector3::new(tx, 0.0, 0.0)), &k)?;
        let shift = k.fx * tx / d;
        for r in 0..k.height {
            for c in 0..k.width {
                if w.valid.at(r, c) > 0.0 {
                    let (v, _) = bilinear_sample(&wall, c as f64 + shift, r as f64);
                    for ch in 0..3 {
                        shift_err = shift_err.max((w.warped_image.get(r, c, ch) - v[ch]).abs());
                    }
                }
            }
        }
    }

    let mut sampler = PoseSampler::with_seed(21);
    let mut round_trip = Vec::new();
    for seed in 0..5 {
        let p = make_pair(&Scene::random(200 + seed, &k), &Pose::identity(), &k)?;
        let t = monorefine::augment::sample_pose(&mut sampler);
        let fw = forward_warp(&p.image_t, &p.depth_t, &t, &k)?;
        let back = inverse_warp(&fw.image, &p.depth_t, &t, &k)?;
        let coverage = inverse_warp(&Image::new(fw.hole_mask.grid().clone())?, &p.depth_t, &t, &k)?;
        let (mut sum, mut n) = (0.0, 0);
        for i in 0..back.valid.len() {
            if back.valid.data()[i] > 0.0 && coverage.warped_image.data()[i] >= 1.0 - 1e-9 {
                for c in 0..3 {
                    sum += (back.warped_image.data()[3 * i + c] - p.image_t.data()[3 * i + c]).abs();
                }
                n += 3;
            }
        }
        round_trip.push(sum / n as f64);
    }
    let rt = round_trip.iter().fold(0.0f64, |a, b| a.max(*b));
    Ok((
        identity_err < 1e-6 && shift_err <= 0.01 * slope && rt < 0.02,
        format!(
            "identity {identity_err:.1e}, plane shift {shift_err:.1e} (0.01 px = {:.1e}), round trip worst mean {rt:.4}",
            0.01 * slope
        ),
    ))
}

fn stop_gradient_policy() -> Outcome {
    let k = Intrinsics::kitti_like(32, 16)?;
    let truth = Pose::from_euler_xyz(0.0, 0.02, 0.0, Vector3::new(0.1, 0.0, 0.5));
    let p = make_pair(&Scene::random(12, &k), &truth, &k)?;
    let dt = DepthPyramid::from_full(&p.depth_t.scaled(1.1), 3)?;
    let dt1 = DepthPyramid::from_full(&p.depth_t1.scaled(0.9), 3)?;
    let poses = [
        Twist::from_array([0.05, 0.0, -0.05, 0.0, 0.01, 0.0]).exp().compose(&truth),
        Twist::from_array([0.02, 0.01, 0.0, 0.0, 0.0, 0.004]).exp().compose(&truth),
        Twist::from_array([0.005, 0.0, 0.01, 0.001, 0.0, 0.0]).exp().compose(&truth),
    ];
    let m = poses.len();
    // Gradients of the full objective and of its finest-level partial sum.
    let run = |mode: AssociationMode, finest_only: bool| -> monorefine::Result<(Vec<Grid>, Vec<Grid>)> {
        let tape = Tape::new();
        let cfg = LossConfig::with_mode(mode);
        let leaves = |ps: &DepthPyramid| ps.levels().iter().map(|d| tape.leaf(d.grid().clone())).collect::<Vec<_>>();
        let (lt, lt1) = (leaves(&dt), leaves(&dt1));
        let incs: Vec<_> = poses.iter().map(|_| tape.leaf(Grid::from_vec(vec![0.0; 6]))).collect();
        let inputs = PairInputs {
            image_t: tape.constant(p.image_t.grid().clone()),
            image_t1: tape.constant(p.image_t1.grid().clone()),
            depth_t: lt.clone(),
            depth_t1: lt1.clone(),
            poses: incs.iter().zip(&poses).map(|(i, q)| se3::compose(se3::exp(*i), se3::constant_pose(&tape, q))).collect(),
        };
        let pair = pair_loss(&inputs, &k, &cfg);
        let loss = if finest_only {
            let rec = pair.recon_terms[m - 1].iter().fold(tape.scalar(0.0), |a, b| a + *b);
            let gc = pair.gc_terms[m - 1].iter().fold(tape.scalar(0.0), |a, b| a + *b);
            rec.scale(cfg.alpha[0]) + gc.scale(cfg.alpha[1]) + pair.smooth.scale(cfg.alpha[2])
        } else {
            total_loss(&pair, None, &cfg)
        };
        let g = tape.backward(loss)?;
        Ok((lt.iter().chain(&lt1).map(|v| g.wrt(*v)).collect(), incs.iter().map(|v| g.wrt(*v)).collect()))
    };
    let (stop_depth, stop_pose) = run(AssociationMode::StopDepthForCoarsePose, false)?;
    let (partial_depth, _) = run(AssociationMode::AllDepthAllPose, true)?;
    let (all_depth, _) = run(AssociationMode::AllDepthAllPose, false)?;
    let depth_gap = stop_depth.iter().zip(&partial_depth).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    let modes_differ = stop_depth.iter().zip(&all_depth).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    let pose_norms: Vec<f64> = stop_pose.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    Ok((
        depth_gap == 0.0 && modes_differ > 0.0 && pose_norms.iter().all(|n| *n > 0.0),
        format!(
            "depth grad vs finest partial sum: max diff {depth_gap:.1e}; vs all-mode {modes_differ:.1e}; pose grad norms {:?}",
            pose_norms.iter().map(|n| format!("{n:.2e}")).collect::<Vec<_>>()
        ),
    ))
}

fn refinement_trend() -> Outcome {
    let start = Instant::now();
    let k = Intrinsics::kitti_like(128, 48)?;
    let suite = pair_suite(1, 20, &k, &MotionRange::default())?;
    let levels = 4;
    let mut t_err = vec![Vec::new(); levels];
    let mut r_err = vec![Vec::new(); levels];
    for p in &suite {
        let r = hierarchical_refine(&p.image_t, &p.image_t1, &p.depth_t, &p.depth_t1, &k, &RefineConfig::with_levels(levels))?;
        for (m, pose) in r.poses.iter().enumerate() {
            let (t, a) = pose_errors(pose, &p.t_gt);
            t_err[m].push(t);
            r_err[m].push(a.to_degrees());
        }
    }
    let t_med: Vec<f64> = t_err.into_iter().map(median).collect();
    let r_med: Vec<f64> = r_err.into_iter().map(median).collect();
    let monotone = t_med.windows(2).all(|w| w[1] <= w[0]) && r_med.windows(2).all(|w| w[1] <= w[0]);
    let gain = 1.0 - t_med[1] / t_med[0];
    let secs = start.elapsed().as_secs_f64();
    Ok((
        monotone && gain >= 0.2 && secs < 600.0,
        format!(
            "median translation {:?} m, rotation {:?} deg, M=2 gain {:.0}%, {secs:.0} s",
            t_med.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            r_med.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            100.0 * gain
        ),
    ))
}

fn perturbed_depth(d: &DepthMap, seed: u64) -> monorefine::Result<DepthMap> {
    DepthMap::from_fn(d.height(), d.width(), |r, c| {
        d.get(r, c, 0) * (1.0 + 0.4 * (value_noise(seed, c as f64 / 6.0, r as f64 / 6.0) - 0.5))
    })
}

fn random_twist(rng: &mut ChaCha8Rng, trans: f64, rot: f64) -> Twist {
    let mut unit = || {
        let v: Vector3<f64> = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        v / v.norm().max(1e-12)
    };
    let (rho, phi) = (unit() * trans, unit() * rot);
    Twist::new(rho, phi)
}

fn association_trend() -> Outcome {
    let k = Intrinsics::kitti_like(64, 24)?;
    let suite = pair_suite(7, 10, &k, &MotionRange::default())?;
    let full = Mask::ones(k.height, k.width);
    let mut results = [Vec::new(), Vec::new()];
    for (i, p) in suite.iter().enumerate() {
        let dt = DepthPyramid::from_full(&perturbed_depth(&p.depth_t, i as u64)?, 4)?;
        let dt1 = DepthPyramid::from_full(&perturbed_depth(&p.depth_t1, 100 + i as u64)?, 4)?;
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let t1 = random_twist(&mut rng, 0.2, 0.04).exp().compose(&p.t_gt);
        let t2 = random_twist(&mut rng, 0.02, 0.004).exp().compose(&p.t_gt);
        for (slot, mode) in [AssociationMode::AllDepthAllPose, AssociationMode::StopDepthForCoarsePose].into_iter().enumerate() {
            let loss = LossConfig { smooth_norm: SmoothNorm::Mean, ..LossConfig::with_mode(mode) };
            let cfg = JointConfig { loss, ..JointConfig::default() };
            let mut state = JointState::new(&dt, &dt1, &[t1, t2])?;
            for _ in 0..200 {
                joint_refine_step(&p.image_t, &p.image_t1, &mut state, &k, &cfg)?;
            }
            let m = depth_metrics(state.depth_t1().finest(), &p.depth_t1, &full, Scaling::Median, 80.0)?;
            results[slot].push(m.abs_rel);
        }
    }
    let wins = results[1].iter().zip(&results[0]).filter(|(s, a)| s <= a).count();
    let (all, stop) = (median(results[0].clone()), median(results[1].clone()));
    Ok((stop <= all, format!("median AbsRel all {all:.4}, stop {stop:.4}; stop at least as good on {wins}/10 scenes")))
}

fn augmentation_correctness() -> Outcome {
    let k = Intrinsics::kitti_like(256, 96)?;
    let mut sampler = PoseSampler::with_seed(11);
    let (mut worst_rot, mut worst_rel) = (0.0f64, 0.0f64);
    let mut ring_ok = true;
    for i in 0..20 {
        let frame = make_pair(&Scene::random(100 + i, &k), &Pose::identity(), &k)?;
        let s = make_augmented_pair(&frame.image_t, &frame.depth_t, &k, &mut sampler, HoleFillConfig::default())?;
        ring_ok &= (0..s.h2.len()).all(|j| s.h3.data()[j] == s.h2.data()[j] - s.h_prime.data()[j]);
        let problem = Problem { target_mask: Some(&s.h2), ..Problem::new(&s.original, &s.augmented, &s.depth, &k) };
        let est = estimate(&problem, &Pose::identity(), &EstimatorConfig::coarse())?.pose.inverse();
        let (t, a) = pose_errors(&est, &s.label);
        worst_rot = worst_rot.max(a.to_degrees());
        worst_rel = worst_rel.max(t / s.label.translation.norm());
    }

    let n = 30;
    let inside = |r: usize, c: usize| (5..25).contains(&r) && (5..25).contains(&c);
    let fw = ForwardWarpResult {
        image: Image::from_fn(n, n, 3, |r, c, _| if inside(r, c) { 0.0 } else { 0.6 })?,
        splat_depth: DepthMap::from_fn(n, n, |r, c| if inside(r, c) { 0.0 } else { 4.0 })?,
        hole_mask: Mask::from_fn(n, n, |r, c| !inside(r, c)),
    };
    let filled = fill_holes(&fw, HoleFillConfig::default())?;
    let interior_zero = (7..23).all(|r| (7..23).all(|c| (0..3).all(|ch| filled.image.get(r, c, ch) == 0.0)));
    ring_ok &= (0..filled.h2.len()).all(|j| filled.h3.data()[j] == filled.h2.data()[j] - filled.h_prime.data()[j]);
    Ok((
        worst_rot < 0.5 && worst_rel < 0.05 && ring_ok && interior_zero,
        format!(
            "worst rotation {worst_rot:.3} deg, worst translation {:.2}%, H3 = H2 - H' {ring_ok}, hole interior zero {interior_zero}",
            100.0 * worst_rel
        ),
    ))
}

fn aug_loss_properties() -> Outcome {
    let label = Pose::from_euler_xyz(0.03, -0.02, 0.05, Vector3::new(0.2, -0.1, 0.25));
    let exact = score_pose(&label, &label, AugLossParams::default()).loss;

    let (t_m, q_m) = (Vector3::new(0.0, 0.0, 0.0), Quaternion::identity());
    let (t_a, q_a) = label.to_tq();
    let e_t = (t_m - t_a).norm();
    let w_t = e_t.ln();
    let h = 1e-5;
    let at = |w: f64| aug_pose_loss(&t_m, &q_m, &t_a, &q_a, AugLossParams { w_t: w, w_q: 0.0 });
    let stationarity = (at(w_t + h) - at(w_t - h)) / (2.0 * h);
    let taped = score_pose(&Pose::identity(), &label, AugLossParams { w_t, w_q: 0.0 }).d_w_t;

    let half = 60f64.to_radians();
    let q_unit = Quaternion { w: half.cos(), x: 0.0, y: 0.0, z: half.sin() };
    let unit = aug_pose_loss(&Vector3::new(1.0, 0.0, 0.0), &q_unit, &Vector3::zeros(), &Quaternion::identity(), AugLossParams::default());
    Ok((
        exact.abs() < 1e-12 && stationarity.abs() < 1e-6 && taped.abs() < 1e-6 && (unit - 2.0).abs() < 1e-12,
        format!("exact {exact:.1e}, dL/dw_t at ln(e_t): numeric {stationarity:.1e} taped {taped:.1e}, unit errors {unit:.12}"),
    ))
}

fn metric_oracles() -> Outcome {
    let gt = DepthMap::from_fn(20, 30, |r, c| 2.0 + 0.3 * r as f64 + 0.1 * c as f64)?;
    let m = depth_metrics(&gt.scaled(2.0), &gt, &Mask::ones(20, 30), Scaling::None, 80.0)?;
    let depth_ok = (m.abs_rel - 1.0).abs() < 1e-4 && (m.rmse_log - 2f64.ln()).abs() < 1e-4;

    let line = |step: f64| Trajectory::new((0..=200).map(|i| Pose::from_translation(Vector3::new(0.0, 0.0, step * i as f64))).collect());
    let o = odom_metrics(&line(1.01), &line(1.0), &OdomConfig::default())?;
    let t_rel = o.t_rel.unwrap_or(f64::NAN);
    let odom_ok = (t_rel - 1.0).abs() < 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let poses: Vec<Pose> = (0..100)
        .map(|_| {
            let t = Vector3::new(rng.gen_range(-300.0..300.0), rng.gen_range(-10.0..10.0), rng.gen_range(0.0..900.0));
            Pose::from_euler_xyz(rng.gen_range(-3.1..3.1), rng.gen_range(-1.5..1.5), rng.gen_range(-3.1..3.1), t)
        })
        .collect();
    let back = parse_kitti_poses(&format_kitti_poses(&poses))?;
    let rt = poses.iter().zip(&back).map(|(a, b)| (a.to_matrix() - b.to_matrix()).abs().max()).fold(0.0, f64::max);
    Ok((
        depth_ok && odom_ok && rt < 1e-9 && back.len() == poses.len(),
        format!("AbsRel {:.6}, RMSElog {:.6}, t_rel {t_rel:.6}%, KITTI round trip {rt:.1e}", m.abs_rel, m.rmse_log),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("warp identities", warp_identities),
        ("stop-gradient policy", stop_gradient_policy),
        ("hierarchical refinement trend", refinement_trend),
        ("association-mode trend", association_trend),
        ("augmentation correctness", augmentation_correctness),
        ("augmentation loss properties", aug_loss_properties),
        ("metric oracles", metric_oracles),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!("criterion {} ({name}): {} | {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
