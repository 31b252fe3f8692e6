use std::collections::VecDeque;

use super::ForwardWarpResult;
use crate::error::{invalid, Result};
use crate::imagebuf::{dilate, DepthMap, Grid, Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HoleFillConfig {
    pub radius: usize,
    pub iterations: usize,
}

impl Default for HoleFillConfig {
    fn default() -> Self {
        Self { radius: 1, iterations: 2 }
    }
}

/// A hole-filled view together with the masks that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FilledView {
    pub image: Image,
    /// Splat coverage (one where a source pixel landed).
    pub h_prime: Mask,
    /// Coverage after dilation.
    pub h2: Mask,
    /// The ring `h2 − h_prime` that gets inpainted.
    pub h3: Mask,
}

/// Inpaints thin holes and zeroes wide ones.
///
/// The covered region is dilated; pixels gained by the dilation are filled
/// by repeated 4-neighbour averaging over already-known pixels, one wavefront
/// at a time. Everything outside the dilated region is set to zero.
pub fn fill_holes(fw: &ForwardWarpResult, cfg: HoleFillConfig) -> Result<FilledView> {
    if cfg.radius == 0 || cfg.iterations == 0 {
        return Err(invalid("hole filling needs radius and iterations of at least one"));
    }
    let h_prime = fw.hole_mask.clone();
    let h2 = dilate(&h_prime, cfg.radius, cfg.iterations);
    let h3 = Mask::new(h2.zip_map(&h_prime, |a, b| a - b)?)?;
    let (h, w, c) = fw.image.shape();
    let mut img = fw.image.grid().clone();
    let mut known: Vec<bool> = h_prime.data().iter().map(|v| *v == 1.0).collect();
    let mut pending: Vec<usize> = (0..h * w).filter(|&i| h3.data()[i] == 1.0).collect();
    let mut acc = vec![0.0; c];
    while !pending.is_empty() {
        let mut filled = Vec::new();
        let mut rest = Vec::new();
        for &i in &pending {
            let (r, col) = (i / w, i % w);
            let mut n = 0;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let neighbours = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (col > 0).then(|| i - 1),
                (col + 1 < w).then(|| i + 1),
            ];
            for j in neighbours.into_iter().flatten() {
                if known[j] {
                    n += 1;
                    for ch in 0..c {
                        acc[ch] += img.data()[j * c + ch];
                    }
                }
            }
            if n > 0 {
                filled.push((i, acc.iter().map(|a| a / n as f64).collect::<Vec<_>>()));
            } else {
                rest.push(i);
            }
        }
        if filled.is_empty() {
            break;
        }
        for (i, vals) in filled {
            img.data_mut()[i * c..(i + 1) * c].copy_from_slice(&vals);
            known[i] = true;
        }
        pending = rest;
    }
    for i in 0..h * w {
        if !known[i] {
            img.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(FilledView { image: Image::new(img)?, h_prime, h2, h3 })
}

/// Replaces entries where `mask` is zero with the value of the nearest
/// masked-in entry (4-connected breadth-first order, ties to the first
/// reached). Returns `None` when the mask is empty.
pub fn fill_depth_nearest(depth: &DepthMap, mask: &Mask) -> Option<DepthMap> {
    let (h, w, _) = depth.shape();
    let mut out: Grid = depth.grid().clone();
    let mut seen: Vec<bool> = mask.data().iter().map(|v| *v > 0.0).collect();
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&i| seen[i]).collect();
    if queue.is_empty() {
        return None;
    }
    while let Some(i) = queue.pop_front() {
        let (r, col) = (i / w, i % w);
        let neighbours = [
            (r > 0).then(|| i - w),
            (col > 0).then(|| i - 1),
            (col + 1 < w).then(|| i + 1),
            (r + 1 < h).then(|| i + w),
        ];
        for j in neighbours.into_iter().flatten() {
            if !seen[j] {
                seen[j] = true;
                out.data_mut()[j] = out.data()[i];
                queue.push_back(j);
            }
        }
    }
    DepthMap::new(out).ok()
}
