//! Central finite-difference check of the pair loss gradients with respect
//! to every depth pixel and every pose twist component.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{se3, Tape};
use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Pose, Twist};
use crate::imagebuf::{DepthMap, Grid, Image};
use crate::losses::{pair_loss, total_loss, LossConfig, PairInputs};
use crate::refine::DepthPyramid;
use crate::synthdata::{make_pair, value_noise, Scene};

/// Inputs of one pair loss evaluation.
#[derive(Clone, Debug)]
pub struct GradcheckProblem {
    pub image_t: Image,
    pub image_t1: Image,
    /// Coarsest first.
    pub depth_t: Vec<DepthMap>,
    pub depth_t1: Vec<DepthMap>,
    pub poses: Vec<Pose>,
    pub k: Intrinsics,
    pub loss: LossConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Gradients smaller than this are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { h: 1e-4, abs_floor: 1e-6 }
    }
}

/// Agreement statistics for one leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafReport {
    pub name: String,
    pub checked: usize,
    /// Components where every tried step changed a discrete decision of the loss.
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl LeafReport {
    pub const CSV_HEADER: &'static str = "leaf,checked,skipped,max_rel_err";

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{:.3e}", self.name, self.checked, self.skipped, self.max_rel_err)
    }
}

struct Leaves {
    depth: Vec<Grid>,
    twists: Vec<Grid>,
}

impl GradcheckProblem {
    fn leaves(&self) -> Leaves {
        Leaves {
            depth: self.depth_t.iter().chain(&self.depth_t1).map(|d| d.grid().clone()).collect(),
            twists: self.poses.iter().map(|_| Grid::from_vec(vec![0.0; 6])).collect(),
        }
    }

    /// Loss, fingerprint and (optionally) gradients at the given leaf values.
    fn eval(&self, x: &Leaves, grads: bool) -> Result<(f64, u64, Option<Leaves>)> {
        let tape = Tape::new();
        let n = self.depth_t.len();
        let depth: Vec<_> = x.depth.iter().map(|g| tape.leaf(g.clone())).collect();
        let twists: Vec<_> = x.twists.iter().map(|g| tape.leaf(g.clone())).collect();
        let poses = twists
            .iter()
            .zip(&self.poses)
            .map(|(t, p)| se3::compose(se3::exp(*t), se3::constant_pose(&tape, p)))
            .collect();
        let inputs = PairInputs {
            image_t: tape.constant(self.image_t.grid().clone()),
            image_t1: tape.constant(self.image_t1.grid().clone()),
            depth_t: depth[..n].to_vec(),
            depth_t1: depth[n..].to_vec(),
            poses,
        };
        let pair = pair_loss(&inputs, &self.k, &self.loss);
        let loss = total_loss(&pair, None, &self.loss);
        let value = loss.item();
        let fp = tape.fingerprint();
        if !grads {
            return Ok((value, fp, None));
        }
        let g = tape.backward(loss)?;
        let out = Leaves {
            depth: depth.iter().map(|v| g.wrt(*v)).collect(),
            twists: twists.iter().map(|v| g.wrt(*v)).collect(),
        };
        Ok((value, fp, Some(out)))
    }
}

/// Step reductions by 10× tried before a component is skipped.
const SHRINKS: i32 = 4;

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares autodiff gradients against central differences for every depth
/// pixel of every scale and every twist component of every pose. Components
/// whose `±h` perturbation flips a discrete decision (mask bit, sign,
/// sample cell, arg-min) are retried with smaller steps and skipped when
/// even `h/1000` flips one.
///
/// Under [`AssociationMode::StopDepthForCoarsePose`] the taped depth gradient
/// omits the coarse terms on purpose, so only the pose leaves are expected to
/// agree there.
///
/// [`AssociationMode::StopDepthForCoarsePose`]: crate::losses::AssociationMode
pub fn gradcheck(problem: &GradcheckProblem, cfg: &GradcheckConfig) -> Result<Vec<LeafReport>> {
    if !(cfg.h > 0.0 && cfg.abs_floor > 0.0) {
        return Err(invalid("step and floor must be positive"));
    }
    let x0 = problem.leaves();
    let (_, fp0, g) = problem.eval(&x0, true)?;
    let g = g.expect("gradients requested");
    let n = problem.depth_t.len();
    let mut reports = Vec::new();
    let mut check = |name: String, which: &dyn Fn(&mut Leaves) -> &mut Grid, grad: &Grid| -> Result<()> {
        let mut rep = LeafReport { name, checked: 0, skipped: 0, max_rel_err: 0.0 };
        let mut x = problem.leaves();
        for i in 0..grad.len() {
            let orig = which(&mut x).data()[i];
            let mut numeric = None;
            for shrink in 0..SHRINKS {
                let h = cfg.h * 0.1f64.powi(shrink);
                which(&mut x).data_mut()[i] = orig + h;
                let (fp, fp_ok) = problem.eval(&x, false).map(|(v, f, _)| (v, f == fp0))?;
                which(&mut x).data_mut()[i] = orig - h;
                let (fm, fm_ok) = problem.eval(&x, false).map(|(v, f, _)| (v, f == fp0))?;
                which(&mut x).data_mut()[i] = orig;
                if fp_ok && fm_ok {
                    numeric = Some((fp - fm) / (2.0 * h));
                    break;
                }
            }
            match numeric {
                Some(n) => {
                    rep.max_rel_err = rep.max_rel_err.max(rel_err(grad.data()[i], n, cfg.abs_floor));
                    rep.checked += 1;
                }
                None => rep.skipped += 1,
            }
        }
        reports.push(rep);
        Ok(())
    };
    for s in 0..2 * n {
        let name = if s < n { format!("depth_t.{}", s + 1) } else { format!("depth_t1.{}", s - n + 1) };
        check(name, &|x: &mut Leaves| &mut x.depth[s], &g.depth[s])?;
    }
    for u in 0..problem.poses.len() {
        check(format!("pose.{}", u + 1), &|x: &mut Leaves| &mut x.twists[u], &g.twists[u])?;
    }
    Ok(reports)
}

/// A random textured pair at `width × height` with perturbed two-scale
/// depths and two perturbed pose levels, all determined by `seed`.
pub fn random_problem(seed: u64, width: usize, height: usize, loss: LossConfig) -> Result<GradcheckProblem> {
    if width < 4 || height < 4 {
        return Err(invalid("gradient check needs at least 4x4 pixels"));
    }
    let k = Intrinsics::centered(width, height, 0.9 * width as f64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut small = |a: f64| rng.gen_range(-a..=a);
    let truth = Pose::from_euler_xyz(
        small(0.02),
        small(0.03),
        small(0.01),
        Vector3::new(small(0.2), small(0.05), 0.3 + small(0.2)),
    );
    let pair = make_pair(&Scene::random(seed, &k), &truth, &k)?;
    let perturb = |d: &DepthMap, salt: u64| {
        DepthMap::from_fn(d.height(), d.width(), |r, c| {
            d.get(r, c, 0) * (0.8 + 0.4 * value_noise(seed ^ salt, c as f64 / 3.0, r as f64 / 3.0))
        })
    };
    let scales = if width % 2 == 0 && height % 2 == 0 { 2 } else { 1 };
    let dt = DepthPyramid::from_full(&perturb(&pair.depth_t, 0x11)?, scales)?;
    let dt1 = DepthPyramid::from_full(&perturb(&pair.depth_t1, 0x22)?, scales)?;
    let mut jitter = || Twist::from_array([small(0.02), small(0.02), small(0.05), small(0.005), small(0.005), small(0.005)]).exp();
    let t1 = jitter().compose(&truth);
    let t2 = jitter().compose(&truth);
    Ok(GradcheckProblem {
        image_t: pair.image_t,
        image_t1: pair.image_t1,
        depth_t: dt.levels().to_vec(),
        depth_t1: dt1.levels().to_vec(),
        poses: vec![t1, t2],
        k,
        loss,
    })
}
