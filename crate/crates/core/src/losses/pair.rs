use std::fmt::Write as _;

use super::terms::{depth_diff_taped, gc_loss_taped, photometric_taped, recon_loss_taped, smooth_loss_taped, SmoothNorm};
use crate::autodiff::{se3, Tape, Var};
use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagebuf::{DepthMap, Grid, Image};
use crate::warp::inverse_warp_taped;

/// Which pose levels may send gradients into the depth maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssociationMode {
    /// Every (pose level, depth scale) term trains depth and pose.
    AllDepthAllPose,
    /// Only the finest pose level trains depth; coarser levels see detached depths.
    StopDepthForCoarsePose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weights of reconstruction, geometry consistency, smoothness and augmentation.
    pub alpha: [f64; 4],
    /// Share of the L1 term in the photometric error.
    pub lambda_rho: f64,
    pub ssim_radius: usize,
    pub eps: f64,
    pub mode: AssociationMode,
    pub smooth_norm: SmoothNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: [1.0, 0.1, 0.5, 2.0],
            lambda_rho: 0.15,
            ssim_radius: 1,
            eps: 1e-7,
            mode: AssociationMode::StopDepthForCoarsePose,
            smooth_norm: SmoothNorm::Min,
        }
    }
}

impl LossConfig {
    pub fn with_mode(mode: AssociationMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(invalid("loss weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.lambda_rho) {
            return Err(invalid("lambda_rho must lie in [0, 1]"));
        }
        if !(self.eps >= 0.0) {
            return Err(invalid("eps must be non-negative"));
        }
        Ok(())
    }
}

/// Taped inputs of one frame pair.
///
/// Depths are ordered from the coarsest scale to full resolution and are
/// upsampled to the camera size before use. Each pose maps frame `t+1`
/// coordinates into frame `t`; `poses[0]` is the coarsest level.
pub struct PairInputs<'t> {
    pub image_t: Var<'t>,
    pub image_t1: Var<'t>,
    pub depth_t: Vec<Var<'t>>,
    pub depth_t1: Vec<Var<'t>>,
    pub poses: Vec<Var<'t>>,
}

/// Masks of one warp, kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct TermMasks {
    pub level: usize,
    pub scale: usize,
    /// False for `t → t+1` reconstruction, true for the opposite direction.
    pub reverse: bool,
    pub weight: Grid,
    pub auto: Grid,
    pub valid: Grid,
}

/// Taped loss terms of one pair. `recon_terms[u][v]` sums both directions.
pub struct PairLoss<'t> {
    pub total: Var<'t>,
    pub recon: Var<'t>,
    pub gc: Var<'t>,
    pub smooth: Var<'t>,
    pub recon_terms: Vec<Vec<Var<'t>>>,
    pub gc_terms: Vec<Vec<Var<'t>>>,
    pub masks: Vec<TermMasks>,
}

/// Plain values of a [`PairLoss`].
#[derive(Clone, Debug, PartialEq)]
pub struct PairLossBundle {
    pub recon: Vec<Vec<f64>>,
    pub gc: Vec<Vec<f64>>,
    pub recon_total: f64,
    pub gc_total: f64,
    pub smooth: f64,
    pub total: f64,
    pub masks: Vec<TermMasks>,
}

/// One line of the loss breakdown; level and scale are 1-based, 0 when not applicable.
#[derive(Clone, Debug, PartialEq)]
pub struct TermRow {
    pub term: &'static str,
    pub level: usize,
    pub scale: usize,
    pub value: f64,
}

impl<'t> PairLoss<'t> {
    pub fn bundle(&self) -> PairLossBundle {
        let vals = |t: &Vec<Vec<Var<'t>>>| t.iter().map(|r| r.iter().map(|v| v.item()).collect()).collect();
        PairLossBundle {
            recon: vals(&self.recon_terms),
            gc: vals(&self.gc_terms),
            recon_total: self.recon.item(),
            gc_total: self.gc.item(),
            smooth: self.smooth.item(),
            total: self.total.item(),
            masks: self.masks.clone(),
        }
    }
}

impl PairLossBundle {
    pub fn rows(&self) -> Vec<TermRow> {
        let mut rows = Vec::new();
        for (name, table) in [("recon", &self.recon), ("gc", &self.gc)] {
            for (u, row) in table.iter().enumerate() {
                for (v, value) in row.iter().enumerate() {
                    rows.push(TermRow { term: name, level: u + 1, scale: v + 1, value: *value });
                }
            }
        }
        rows.push(TermRow { term: "recon_total", level: 0, scale: 0, value: self.recon_total });
        rows.push(TermRow { term: "gc_total", level: 0, scale: 0, value: self.gc_total });
        rows.push(TermRow { term: "smooth", level: 0, scale: 0, value: self.smooth });
        rows.push(TermRow { term: "total", level: 0, scale: 0, value: self.total });
        rows
    }

    /// `term,level,scale,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,level,scale,value\n");
        for r in self.rows() {
            let _ = writeln!(out, "{},{},{},{:.12e}", r.term, r.level, r.scale, r.value);
        }
        out
    }
}

struct Direction<'a, 't> {
    source: Var<'t>,
    target: Var<'t>,
    source_depth: &'a [Var<'t>],
    target_depth: &'a [Var<'t>],
    sigma_ident: Var<'t>,
    reverse: bool,
}

/// Builds the reconstruction, geometry-consistency and smoothness terms of
/// one pair (both temporal directions) and their weighted sum.
pub fn pair_loss<'t>(inputs: &PairInputs<'t>, k: &Intrinsics, cfg: &LossConfig) -> PairLoss<'t> {
    let tape = inputs.image_t.tape();
    let (h, w) = (k.height, k.width);
    let m = inputs.poses.len();
    let n = inputs.depth_t.len();
    assert!(m > 0 && n > 0 && inputs.depth_t1.len() == n, "need poses and matching depth scales");
    let full = |ds: &[Var<'t>]| ds.iter().map(|d| d.upsample(h, w)).collect::<Vec<_>>();
    let (dt, dt1) = (full(&inputs.depth_t), full(&inputs.depth_t1));
    let detached = |ds: &[Var<'t>]| ds.iter().map(|d| d.stop_gradient()).collect::<Vec<_>>();
    let (dt_stop, dt1_stop) = (detached(&dt), detached(&dt1));

    let sigma_ident = photometric_taped(inputs.image_t, inputs.image_t1, cfg.lambda_rho, cfg.ssim_radius);
    let mut recon_terms = Vec::with_capacity(m);
    let mut gc_terms = Vec::with_capacity(m);
    let mut masks = Vec::new();
    for (u, &pose) in inputs.poses.iter().enumerate() {
        let stop = cfg.mode == AssociationMode::StopDepthForCoarsePose && u + 1 < m;
        let (src_t, src_t1) = if stop { (&dt_stop, &dt1_stop) } else { (&dt, &dt1) };
        let inv = se3::inverse(pose);
        let dirs = [
            (
                Direction {
                    source: inputs.image_t,
                    target: inputs.image_t1,
                    source_depth: src_t,
                    target_depth: src_t1,
                    sigma_ident,
                    reverse: false,
                },
                pose,
            ),
            (
                Direction {
                    source: inputs.image_t1,
                    target: inputs.image_t,
                    source_depth: src_t1,
                    target_depth: src_t,
                    sigma_ident,
                    reverse: true,
                },
                inv,
            ),
        ];
        let mut rec_row = Vec::with_capacity(n);
        let mut gc_row = Vec::with_capacity(n);
        for v in 0..n {
            let mut rec = None;
            let mut gc = None;
            for (dir, p) in &dirs {
                let (r, g, mk) = direction_terms(dir, *p, v, k, cfg);
                masks.push(TermMasks { level: u + 1, scale: v + 1, ..mk });
                rec = Some(rec.map_or(r, |acc: Var<'t>| acc + r));
                gc = Some(gc.map_or(g, |acc: Var<'t>| acc + g));
            }
            rec_row.push(rec.unwrap());
            gc_row.push(gc.unwrap());
        }
        recon_terms.push(rec_row);
        gc_terms.push(gc_row);
    }
    let sum_all = |t: &Vec<Vec<Var<'t>>>| {
        let flat: Vec<Var<'t>> = t.iter().flatten().copied().collect();
        flat[1..].iter().fold(flat[0], |a, b| a + *b)
    };
    let recon = sum_all(&recon_terms);
    let gc = sum_all(&gc_terms);
    let mut smooth = tape.scalar(0.0);
    for v in 0..n {
        smooth = smooth
            + smooth_loss_taped(dt1[v], inputs.image_t1, cfg.eps, cfg.smooth_norm)
            + smooth_loss_taped(dt[v], inputs.image_t, cfg.eps, cfg.smooth_norm);
    }
    let total = recon.scale(cfg.alpha[0]) + gc.scale(cfg.alpha[1]) + smooth.scale(cfg.alpha[2]);
    PairLoss { total, recon, gc, smooth, recon_terms, gc_terms, masks }
}

fn direction_terms<'t>(
    dir: &Direction<'_, 't>,
    pose: Var<'t>,
    v: usize,
    k: &Intrinsics,
    cfg: &LossConfig,
) -> (Var<'t>, Var<'t>, TermMasks) {
    let warp = inverse_warp_taped(dir.source, Some(dir.source_depth[v]), dir.target_depth[v], pose, k);
    let sigma = photometric_taped(warp.warped_image, dir.target, cfg.lambda_rho, cfg.ssim_radius);
    let auto = sigma.lt(dir.sigma_ident);
    let diff = depth_diff_taped(warp.projected_depth, warp.sampled_depth.expect("source depth given"), cfg.eps);
    let weight = 1.0 - diff;
    let rec = recon_loss_taped(sigma, weight, &auto, &warp.valid);
    let gc = gc_loss_taped(diff, &auto, &warp.valid);
    let masks = TermMasks {
        level: 0,
        scale: 0,
        reverse: dir.reverse,
        weight: (*weight.value()).clone(),
        auto,
        valid: warp.valid,
    };
    (rec, gc, masks)
}

/// Adds the weighted augmentation term (when present) to a pair's loss.
pub fn total_loss<'t>(pair: &PairLoss<'t>, aug: Option<Var<'t>>, cfg: &LossConfig) -> Var<'t> {
    match aug {
        Some(a) => pair.total + a.scale(cfg.alpha[3]),
        None => pair.total,
    }
}

/// Evaluates [`pair_loss`] on plain data.
pub fn pair_loss_values(
    image_t: &Image,
    image_t1: &Image,
    depth_t: &[DepthMap],
    depth_t1: &[DepthMap],
    poses: &[Pose],
    k: &Intrinsics,
    cfg: &LossConfig,
) -> Result<PairLossBundle> {
    cfg.validate()?;
    if poses.is_empty() || depth_t.is_empty() || depth_t.len() != depth_t1.len() {
        return Err(invalid("need at least one pose and matching depth pyramids"));
    }
    check_inputs(image_t, image_t1, depth_t, depth_t1, k)?;
    let tape = Tape::new();
    let inputs = PairInputs {
        image_t: tape.constant(image_t.grid().clone()),
        image_t1: tape.constant(image_t1.grid().clone()),
        depth_t: depth_t.iter().map(|d| tape.constant(d.grid().clone())).collect(),
        depth_t1: depth_t1.iter().map(|d| tape.constant(d.grid().clone())).collect(),
        poses: poses.iter().map(|p| se3::constant_pose(&tape, p)).collect(),
    };
    Ok(pair_loss(&inputs, k, cfg).bundle())
}

fn check_inputs(
    image_t: &Image,
    image_t1: &Image,
    depth_t: &[DepthMap],
    depth_t1: &[DepthMap],
    k: &Intrinsics,
) -> Result<()> {
    use crate::warp::check_size;
    check_size("image t", image_t, k)?;
    check_size("image t+1", image_t1, k)?;
    for (a, b) in depth_t.iter().zip(depth_t1) {
        if a.shape() != b.shape() || a.height() > k.height || a.width() > k.width {
            return Err(crate::error::Error::DimensionMismatch("depth pyramid levels disagree".into()));
        }
        if !a.is_positive() || !b.is_positive() {
            return Err(invalid("depths must be positive"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;

    fn scene(h: usize, w: usize, phase: f64) -> (Image, DepthMap) {
        let img = Image::from_fn(h, w, 3, |r, c, ch| {
            0.5 + 0.35 * ((0.8 * c as f64 + phase + 0.4 * ch as f64).sin() * (0.7 * r as f64).cos())
        })
        .unwrap();
        let depth = DepthMap::from_fn(h, w, |r, c| 3.0 + 0.1 * r as f64 + 0.05 * c as f64).unwrap();
        (img, depth)
    }

    #[test]
    fn identical_frames_give_zero_photometric_terms() {
        let k = Intrinsics::centered(10, 8, 8.0).unwrap();
        let (img, d) = scene(8, 10, 0.0);
        let b = pair_loss_values(&img, &img, &[d.clone()], &[d.clone()], &[Pose::identity()], &k, &LossConfig::default())
            .unwrap();
        assert_eq!(b.recon_total, 0.0);
        assert_eq!(b.gc_total, 0.0);
        assert!(b.smooth > 0.0);
        assert!((b.total - 0.5 * b.smooth).abs() < 1e-15);
        for m in &b.masks {
            assert!(m.weight.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(m.auto.data().iter().all(|v| *v == 0.0 || *v == 1.0));
        }
    }

    #[test]
    fn modes_agree_on_values_and_rows_cover_all_terms() {
        let k = Intrinsics::centered(12, 8, 9.0).unwrap();
        let (a, da) = scene(8, 12, 0.0);
        let (b, db) = scene(8, 12, 0.6);
        let poses = [
            Twist::from_array([0.05, 0.0, 0.02, 0.0, 0.01, 0.0]).exp(),
            Twist::from_array([0.08, 0.0, 0.01, 0.0, 0.02, 0.0]).exp(),
        ];
        let half = |d: &DepthMap| DepthMap::new(crate::imagebuf::downsample2(d).unwrap()).unwrap();
        let pyr_a = [half(&da), da.clone()];
        let pyr_b = [half(&db), db.clone()];
        let x = pair_loss_values(&a, &b, &pyr_a, &pyr_b, &poses, &k, &LossConfig::with_mode(AssociationMode::AllDepthAllPose)).unwrap();
        let y = pair_loss_values(&a, &b, &pyr_a, &pyr_b, &poses, &k, &LossConfig::default()).unwrap();
        assert_eq!(x, y);
        assert!(x.recon_total > 0.0);
        let rows = x.rows();
        assert_eq!(rows.len(), 2 * 2 * 2 + 4);
        let csv = x.to_csv();
        assert!(csv.starts_with("term,level,scale,value\nrecon,1,1,"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn total_adds_weighted_augmentation() {
        let k = Intrinsics::centered(6, 6, 5.0).unwrap();
        let (img, d) = scene(6, 6, 0.0);
        let tape = Tape::new();
        let inputs = PairInputs {
            image_t: tape.constant(img.grid().clone()),
            image_t1: tape.constant(img.grid().clone()),
            depth_t: vec![tape.constant(d.grid().clone())],
            depth_t1: vec![tape.constant(d.grid().clone())],
            poses: vec![se3::constant_pose(&tape, &Pose::identity())],
        };
        let cfg = LossConfig::default();
        let pair = pair_loss(&inputs, &k, &cfg);
        let t = total_loss(&pair, Some(tape.scalar(1.5)), &cfg);
        assert!((t.item() - pair.total.item() - 3.0).abs() < 1e-15);
        assert_eq!(total_loss(&pair, None, &cfg).item(), pair.total.item());
    }
}
