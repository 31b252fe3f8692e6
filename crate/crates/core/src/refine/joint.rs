use super::pyramid::DepthPyramid;
use crate::autodiff::{se3, Tape};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Intrinsics, Pose, Twist};
use crate::imagebuf::{DepthMap, Grid, Image};
use crate::losses::{pair_loss, total_loss, LossConfig, PairInputs, PairLossBundle};
use crate::warp::check_size;

/// Adam settings of [`joint_refine_step`]. Depths are optimised as
/// log-depth, poses as left increments in the tangent space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointConfig {
    pub loss: LossConfig,
    pub depth_rate: f64,
    pub pose_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self { loss: LossConfig::default(), depth_rate: 2e-3, pose_rate: 1e-4, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.depth_rate >= 0.0 && self.pose_rate >= 0.0) {
            return Err(invalid("learning rates must be non-negative"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(invalid("Adam needs betas in [0, 1) and a positive epsilon"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Adam update of `x` with gradient `g` at (1-based) step `t`.
    fn update(&mut self, x: &mut [f64], g: &[f64], rate: f64, t: i32, cfg: &JointConfig) {
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for i in 0..x.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            x[i] -= rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Free variables of joint refinement on one pair: log-depth pyramids of
/// both frames and one pose per level, each updated by its own left increment.
#[derive(Clone, Debug)]
pub struct JointState {
    log_depth_t: Vec<Grid>,
    log_depth_t1: Vec<Grid>,
    poses: Vec<Pose>,
    depth_moments: Vec<Moments>,
    pose_moments: Vec<Moments>,
    steps: i32,
}

impl JointState {
    /// `poses` are `T_1 … T_M`, coarsest level first.
    pub fn new(depth_t: &DepthPyramid, depth_t1: &DepthPyramid, poses: &[Pose]) -> Result<Self> {
        if poses.is_empty() {
            return Err(invalid("joint refinement needs at least one pose level"));
        }
        if depth_t.len() != depth_t1.len() {
            return Err(invalid("depth pyramids of the two frames differ in length"));
        }
        let logs = |p: &DepthPyramid| p.levels().iter().map(|d| d.map(f64::ln)).collect::<Vec<_>>();
        let (log_depth_t, log_depth_t1) = (logs(depth_t), logs(depth_t1));
        for (a, b) in log_depth_t.iter().zip(&log_depth_t1) {
            if a.shape() != b.shape() {
                return Err(Error::DimensionMismatch("depth pyramid levels disagree".into()));
            }
        }
        let poses = poses.to_vec();
        let depth_moments = log_depth_t.iter().chain(&log_depth_t1).map(|g| Moments::new(g.len())).collect();
        let pose_moments = poses.iter().map(|_| Moments::new(6)).collect();
        Ok(Self { log_depth_t, log_depth_t1, poses, depth_moments, pose_moments, steps: 0 })
    }

    pub fn depth_t(&self) -> DepthPyramid {
        Self::pyramid(&self.log_depth_t)
    }

    pub fn depth_t1(&self) -> DepthPyramid {
        Self::pyramid(&self.log_depth_t1)
    }

    fn pyramid(logs: &[Grid]) -> DepthPyramid {
        let levels = logs.iter().map(|g| DepthMap::new(g.map(f64::exp)).expect("exp is positive")).collect();
        DepthPyramid::new(levels).expect("shapes fixed at construction")
    }

    /// `T_1 … T_M`.
    pub fn poses(&self) -> Vec<Pose> {
        self.poses.clone()
    }

    pub fn steps(&self) -> usize {
        self.steps as usize
    }
}

/// One Adam step on the training objective (without the augmentation term)
/// over every depth scale of both frames and every pose level.
///
/// Returns the loss terms at the variables before the update.
pub fn joint_refine_step(
    image_t: &Image,
    image_t1: &Image,
    state: &mut JointState,
    k: &Intrinsics,
    cfg: &JointConfig,
) -> Result<PairLossBundle> {
    cfg.validate()?;
    check_size("image t", image_t, k)?;
    check_size("image t+1", image_t1, k)?;
    let tape = Tape::new();
    let depth_leaves = |logs: &[Grid]| logs.iter().map(|g| tape.leaf(g.clone())).collect::<Vec<_>>();
    let (lt, lt1) = (depth_leaves(&state.log_depth_t), depth_leaves(&state.log_depth_t1));
    let increments: Vec<_> = state.poses.iter().map(|_| tape.leaf(Grid::from_vec(vec![0.0; 6]))).collect();
    let pose_vars = state
        .poses
        .iter()
        .zip(&increments)
        .map(|(pose, inc)| se3::compose(se3::exp(*inc), se3::constant_pose(&tape, pose)))
        .collect();
    let inputs = PairInputs {
        image_t: tape.constant(image_t.grid().clone()),
        image_t1: tape.constant(image_t1.grid().clone()),
        depth_t: lt.iter().map(|l| l.exp()).collect(),
        depth_t1: lt1.iter().map(|l| l.exp()).collect(),
        poses: pose_vars,
    };
    let pair = pair_loss(&inputs, k, &cfg.loss);
    let loss = total_loss(&pair, None, &cfg.loss);
    let finest = || Box::new(*state.poses().last().unwrap());
    if !loss.item().is_finite() {
        return Err(Error::Diverged { level: state.poses.len(), last: finest() });
    }
    let grads = tape.backward(loss)?;
    let bundle = pair.bundle();

    let t = state.steps + 1;
    let depth_grads: Vec<Grid> = lt.iter().chain(&lt1).map(|l| grads.wrt(*l)).collect();
    if depth_grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged { level: state.poses.len(), last: finest() });
    }
    let n = state.log_depth_t.len();
    for (i, g) in depth_grads.iter().enumerate() {
        let x = if i < n { &mut state.log_depth_t[i] } else { &mut state.log_depth_t1[i - n] };
        state.depth_moments[i].update(x.data_mut(), g.data(), cfg.depth_rate, t, cfg);
    }
    for (u, inc) in increments.iter().enumerate() {
        let g = grads.wrt(*inc);
        let mut xi = [0.0; 6];
        state.pose_moments[u].update(&mut xi, g.data(), cfg.pose_rate, t, cfg);
        state.poses[u] = Twist::from_array(xi).exp().compose(&state.poses[u]);
    }
    state.steps = t;
    Ok(bundle)
}
