//! Command-line front end. CSV goes to standard output (or `--out`), a short
//! human summary to standard error.
//!
//! Frame directories written by `synth` and read by `refine` hold
//! `image_NNNNNN.ppm`, `depth_NNNNNN.pfm`, `poses.txt` (camera-to-world, one
//! KITTI line per frame) and `calib.txt` (`fx fy cx cy width height`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{make_augmented_pair, PoseSampler};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    depth_metrics, odom_metrics, read_kitti_poses, write_kitti_poses, DepthMetrics, OdomConfig, ScaleCorrection,
    Scaling, Trajectory,
};
use crate::geometry::{Intrinsics, Pose};
use crate::gradcheck::{gradcheck, random_problem, GradcheckConfig, LeafReport};
use crate::imagebuf::io::{read_grid, write_grid};
use crate::imagebuf::{DepthMap, Image, Mask};
use crate::losses::{pair_loss_values, AssociationMode, LossConfig};
use crate::refine::{hierarchical_refine, joint_refine_step, DepthPyramid, JointConfig, JointState, RefineConfig};
use crate::synthdata::{make_trajectory, MotionRange, Scene};
use crate::warp::HoleFillConfig;

#[derive(Parser, Debug)]
#[command(name = "monorefine", version, about = "Synthetic view synthesis, pose refinement and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic driving sequence.
    Synth {
        #[arg(long)]
        scene_seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "832x256", value_parser = parse_size)]
        size: (usize, usize),
    },
    /// Hierarchically refine the pose between frames 0 and 1 of a directory.
    Refine {
        #[arg(long)]
        pair: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=16))]
        levels: u64,
        #[arg(long, value_enum, default_value_t = Mode::Stop)]
        mode: Mode,
        /// Joint depth and pose steps run after the hierarchical estimate.
        #[arg(long, default_value_t = 0)]
        steps: u64,
        /// Depth scales used by the joint steps.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..=8))]
        scales: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write pose-augmented copies of one frame.
    Augment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Camera file; defaults to KITTI-like intrinsics for the image size.
        #[arg(long)]
        calib: Option<PathBuf>,
    },
    /// Compare predicted depth maps with ground truth, matched by file name.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = ScalingArg::Median)]
        scaling: ScalingArg,
        #[arg(long, default_value_t = 80.0)]
        cap: f64,
    },
    /// Drift and ATE of a predicted trajectory.
    EvalOdom {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = ScaleArg::None)]
        scale: ScaleArg,
    },
    /// Finite-difference check of the loss gradients on a random pair.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "12x12", value_parser = parse_size)]
        size: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    All,
    Stop,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScalingArg {
    Median,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    None,
    Path,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w < 4 || h < 4 {
        return Err("sizes below 4x4 are not supported".into());
    }
    Ok((w, h))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { scene_seed, frames, out, size } => synth(scene_seed, frames as usize, &out, size),
        Command::Refine { pair, levels, mode, steps, scales, out } => {
            refine(&pair, levels as usize, mode, steps as usize, scales as usize, out.as_deref())
        }
        Command::Augment { image, depth, seed, count, out, calib } => {
            augment(&image, &depth, seed, count as usize, &out, calib.as_deref())
        }
        Command::EvalDepth { pred, gt, scaling, cap } => eval_depth(&pred, &gt, scaling, cap),
        Command::EvalOdom { pred, gt, scale } => eval_odom(&pred, &gt, scale),
        Command::Gradcheck { seed, size } => run_gradcheck(seed, size),
    }
}

fn emit(csv: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, csv)?),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn image_name(i: usize) -> String {
    format!("image_{i:06}.ppm")
}

fn depth_name(i: usize) -> String {
    format!("depth_{i:06}.pfm")
}

pub fn write_calib(path: &Path, k: &Intrinsics) -> Result<()> {
    Ok(fs::write(path, format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height))?)
}

pub fn read_calib(path: &Path) -> Result<Intrinsics> {
    let text = fs::read_to_string(path)?;
    let v: Vec<&str> = text.split_whitespace().collect();
    let err = |m: &str| Error::ParseLine { line: 1, message: m.into() };
    if v.len() != 6 {
        return Err(err("expected fx fy cx cy width height"));
    }
    let f = |i: usize| v[i].parse::<f64>().map_err(|_| err("bad number"));
    let n = |i: usize| v[i].parse::<usize>().map_err(|_| err("bad image size"));
    Intrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, n(4)?, n(5)?)
}

fn read_image(path: &Path) -> Result<Image> {
    Image::new(read_grid(path)?)
}

fn read_depth(path: &Path) -> Result<DepthMap> {
    DepthMap::new(read_grid(path)?)
}

fn synth(seed: u64, frames: usize, out: &Path, (w, h): (usize, usize)) -> Result<()> {
    let k = Intrinsics::kitti_like(w, h)?;
    let scene = Scene::random(seed, &k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A1);
    let range = MotionRange::default();
    let mut poses = vec![Pose::identity()];
    while poses.len() < frames {
        let step = range.sample(&mut rng);
        poses.push(poses.last().unwrap().compose(&step));
    }
    let rendered = make_trajectory(&scene, &poses, &k)?;
    fs::create_dir_all(out)?;
    let mut csv = String::from("frame,image,depth\n");
    for (i, f) in rendered.iter().enumerate() {
        write_grid(out.join(image_name(i)), &f.image)?;
        write_grid(out.join(depth_name(i)), &f.depth)?;
        let _ = writeln!(csv, "{i},{},{}", image_name(i), depth_name(i));
    }
    write_kitti_poses(out.join("poses.txt"), &poses)?;
    write_calib(&out.join("calib.txt"), &k)?;
    print!("{csv}");
    eprintln!("wrote {frames} frames of {w}x{h} to {}", out.display());
    Ok(())
}

fn pose_row(level: usize, p: &Pose, loss: f64) -> String {
    let (t, q) = p.to_tq();
    format!("{level},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}", t.x, t.y, t.z, q.w, q.x, q.y, q.z, loss)
}

fn refine(dir: &Path, levels: usize, mode: Mode, steps: usize, scales: usize, out: Option<&Path>) -> Result<()> {
    let k = read_calib(&dir.join("calib.txt"))?;
    let (x0, x1) = (read_image(&dir.join(image_name(0)))?, read_image(&dir.join(image_name(1)))?);
    let (d0, d1) = (read_depth(&dir.join(depth_name(0)))?, read_depth(&dir.join(depth_name(1)))?);
    let result = hierarchical_refine(&x0, &x1, &d0, &d1, &k, &RefineConfig::with_levels(levels))?;
    let loss = LossConfig::with_mode(match mode {
        Mode::All => AssociationMode::AllDepthAllPose,
        Mode::Stop => AssociationMode::StopDepthForCoarsePose,
    });
    let mut poses = result.poses.clone();
    let mut losses = result.level_losses.clone();
    if steps > 0 {
        let (p0, p1) = (DepthPyramid::from_full(&d0, scales)?, DepthPyramid::from_full(&d1, scales)?);
        let mut state = JointState::new(&p0, &p1, &poses)?;
        let cfg = JointConfig { loss, ..JointConfig::default() };
        for _ in 0..steps {
            joint_refine_step(&x0, &x1, &mut state, &k, &cfg)?;
        }
        poses = state.poses();
        let b = pair_loss_values(&x0, &x1, state.depth_t().levels(), state.depth_t1().levels(), &poses, &k, &loss)?;
        losses = b.recon.iter().map(|row| row.iter().sum()).collect();
    }
    let mut csv = String::from("level,tx,ty,tz,qw,qx,qy,qz,loss\n");
    for (m, (p, l)) in poses.iter().zip(&losses).enumerate() {
        csv.push_str(&pose_row(m + 1, p, *l));
        csv.push('\n');
    }
    emit(&csv, out)?;
    if let Ok(gt) = read_kitti_poses(dir.join("poses.txt")) {
        if gt.len() >= 2 {
            let truth = gt[0].inverse().compose(&gt[1]);
            let e = poses.last().unwrap().inverse().compose(&truth);
            eprintln!(
                "finest level: translation error {:.4} m, rotation error {:.4} deg",
                e.translation.norm(),
                e.rotation_angle().to_degrees()
            );
        }
    }
    Ok(())
}

fn augment(image: &Path, depth: &Path, seed: u64, count: usize, out: &Path, calib: Option<&Path>) -> Result<()> {
    let img = read_image(image)?;
    let d = read_depth(depth)?;
    let k = match calib {
        Some(p) => read_calib(p)?,
        None => Intrinsics::kitti_like(img.width(), img.height())?,
    };
    if !d.is_positive() {
        return Err(invalid("augmentation needs a strictly positive depth map"));
    }
    fs::create_dir_all(out)?;
    let mut sampler = PoseSampler::with_seed(seed);
    let mut labels = Vec::with_capacity(count);
    let mut csv = String::from("index,image,mask,tx,ty,tz,qw,qx,qy,qz,hole_fraction\n");
    for i in 0..count {
        let s = make_augmented_pair(&img, &d, &k, &mut sampler, HoleFillConfig::default())?;
        let (name, mask) = (format!("aug_{i:06}.ppm"), format!("mask_{i:06}.pgm"));
        write_grid(out.join(&name), &s.augmented)?;
        write_grid(out.join(&mask), &s.h2)?;
        let (t, q) = s.label.to_tq();
        let holes = 1.0 - s.h_prime.count_ones() as f64 / s.h_prime.len() as f64;
        let _ = writeln!(
            csv,
            "{i},{name},{mask},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{holes:.6}",
            t.x, t.y, t.z, q.w, q.x, q.y, q.z
        );
        labels.push(s.label);
    }
    write_kitti_poses(out.join("labels.txt"), &labels)?;
    print!("{csv}");
    eprintln!("wrote {count} augmented frames to {}", out.display());
    Ok(())
}

fn depth_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| [".pfm", ".pgm", ".csv"].iter().any(|x| n.to_ascii_lowercase().ends_with(x)))
        .collect();
    names.sort();
    Ok(names)
}

fn eval_depth(pred: &Path, gt: &Path, scaling: ScalingArg, cap: f64) -> Result<()> {
    let scaling = match scaling {
        ScalingArg::Median => Scaling::Median,
        ScalingArg::None => Scaling::None,
    };
    let names: Vec<String> = depth_files(gt)?.into_iter().filter(|n| pred.join(n).is_file()).collect();
    if names.is_empty() {
        return Err(invalid("no depth files with matching names in both directories"));
    }
    let mut csv = format!("file,{}\n", DepthMetrics::CSV_HEADER);
    let mut all = Vec::new();
    for n in &names {
        let g = read_depth(&gt.join(n))?;
        let p = read_depth(&pred.join(n))?;
        let valid = Mask::from_fn(g.height(), g.width(), |r, c| g.get(r, c, 0) > 0.0);
        let m = depth_metrics(&p, &g, &valid, scaling, cap)?;
        let _ = writeln!(csv, "{n},{}", m.to_csv_row());
        all.push(m);
    }
    let mean = DepthMetrics::mean(&all).expect("non-empty");
    let _ = writeln!(csv, "mean,{}", mean.to_csv_row());
    print!("{csv}");
    eprintln!("{} files: AbsRel {:.4}, RMSE {:.4}, d<1.25 {:.4}", names.len(), mean.abs_rel, mean.rmse, mean.a1);
    Ok(())
}

fn eval_odom(pred: &Path, gt: &Path, scale: ScaleArg) -> Result<()> {
    let p = Trajectory::new(read_kitti_poses(pred)?);
    let g = Trajectory::new(read_kitti_poses(gt)?);
    let cfg = OdomConfig {
        scale: match scale {
            ScaleArg::None => ScaleCorrection::None,
            ScaleArg::Path => ScaleCorrection::PathLength,
        },
    };
    let m = odom_metrics(&p, &g, &cfg)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
    print!("t_rel,r_rel,ate,segments\n{},{},{:.6},{}\n", opt(m.t_rel), opt(m.r_rel), m.ate, m.segments);
    if m.length_insufficient() {
        eprintln!("ground truth shorter than 100 m: only ATE is reported ({:.4} m)", m.ate);
    } else {
        eprintln!("t_rel {} %, r_rel {} deg/100 m, ATE {:.4} m", opt(m.t_rel), opt(m.r_rel), m.ate);
    }
    Ok(())
}

/// Largest relative error accepted by the `gradcheck` command.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

fn run_gradcheck(seed: u64, (w, h): (usize, usize)) -> Result<()> {
    let problem = random_problem(seed, w, h, LossConfig::with_mode(AssociationMode::AllDepthAllPose))?;
    let reports = gradcheck(&problem, &GradcheckConfig::default())?;
    let mut csv = format!("{}\n", LeafReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    print!("{csv}");
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let skipped: usize = reports.iter().map(|r| r.skipped).sum();
    eprintln!("max relative error {worst:.3e} ({skipped} components skipped)");
    if worst >= GRADCHECK_TOLERANCE {
        return Err(invalid(format!("gradient mismatch: {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}
