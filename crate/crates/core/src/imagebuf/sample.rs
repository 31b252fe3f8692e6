use super::Grid;
use crate::error::{invalid, Result};

/// The four-neighbour stencil of a bilinear lookup.
///
/// `value = (1-wx)(1-wy)·I(y0,x0) + wx(1-wy)·I(y0,x1) + (1-wx)wy·I(y1,x0) + wx·wy·I(y1,x1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTap {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub wx: f64,
    pub wy: f64,
}

impl BilinearTap {
    /// Weights of `(y0,x0), (y0,x1), (y1,x0), (y1,x1)`; nonnegative, summing to one.
    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (wx, wy) = (self.wx, self.wy);
        [(1.0 - wx) * (1.0 - wy), wx * (1.0 - wy), (1.0 - wx) * wy, wx * wy]
    }
}

/// Coordinates this close outside the grid are snapped onto its border so
/// round-off from projection does not invalidate edge pixels.
const EDGE_SLACK: f64 = 1e-9;

#[inline]
fn axis(coord: f64, size: usize) -> Option<(usize, usize, f64)> {
    let max = (size - 1) as f64;
    if !(coord >= -EDGE_SLACK && coord <= max + EDGE_SLACK) {
        return None;
    }
    let coord = coord.clamp(0.0, max);
    if size == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (coord.floor() as usize).min(size - 2);
    Some((i0, i0 + 1, coord - i0 as f64))
}

/// Stencil for sampling a `width × height` grid at `(u, v)`, or `None` when any
/// neighbour would fall outside the grid.
#[inline]
pub fn bilinear_tap(width: usize, height: usize, u: f64, v: f64) -> Option<BilinearTap> {
    let (x0, x1, wx) = axis(u, width)?;
    let (y0, y1, wy) = axis(v, height)?;
    Some(BilinearTap { x0, x1, y0, y1, wx, wy })
}

/// Bilinear lookup of every channel at `(u, v)`. Out-of-bounds lookups give zeros and `false`.
pub fn bilinear_sample(img: &Grid, u: f64, v: f64) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; img.channels()];
    let ok = sample_into(img, u, v, &mut out);
    (out, ok)
}

#[inline]
pub(crate) fn sample_into(img: &Grid, u: f64, v: f64, out: &mut [f64]) -> bool {
    match bilinear_tap(img.width(), img.height(), u, v) {
        Some(tap) => {
            apply_tap(img, &tap, out);
            true
        }
        None => {
            out.iter_mut().for_each(|o| *o = 0.0);
            false
        }
    }
}

#[inline]
pub(crate) fn apply_tap(img: &Grid, tap: &BilinearTap, out: &mut [f64]) {
    let w = tap.weights();
    let c = img.channels();
    let d = img.data();
    let i00 = img.index(tap.y0, tap.x0, 0);
    let i01 = img.index(tap.y0, tap.x1, 0);
    let i10 = img.index(tap.y1, tap.x0, 0);
    let i11 = img.index(tap.y1, tap.x1, 0);
    for ch in 0..c {
        out[ch] = w[0] * d[i00 + ch] + w[1] * d[i01 + ch] + w[2] * d[i10 + ch] + w[3] * d[i11 + ch];
    }
}

fn corner_map(target: usize, source: usize) -> f64 {
    if target <= 1 {
        0.0
    } else {
        (source - 1) as f64 / (target - 1) as f64
    }
}

/// Bilinear upsampling with corner pixels aligned, so affine ramps stay affine.
pub fn upsample(src: &Grid, height: usize, width: usize) -> Result<Grid> {
    if height < src.height() || width < src.width() {
        return Err(invalid(format!(
            "upsample target {height}x{width} smaller than source {}x{}",
            src.height(),
            src.width()
        )));
    }
    if height == src.height() && width == src.width() {
        return Ok(src.clone());
    }
    let (sy, sx) = (corner_map(height, src.height()), corner_map(width, src.width()));
    let c = src.channels();
    let mut out = Grid::zeros(height, width, c);
    let mut px = vec![0.0; c];
    for r in 0..height {
        for col in 0..width {
            let tap = bilinear_tap(src.width(), src.height(), col as f64 * sx, r as f64 * sy)
                .expect("corner-aligned coordinates stay in range");
            apply_tap(src, &tap, &mut px);
            let i = out.index(r, col, 0);
            out.data_mut()[i..i + c].copy_from_slice(&px);
        }
    }
    Ok(out)
}

/// Transpose of [`upsample`]: scatters an upsampled gradient back onto the source grid.
pub fn upsample_adjoint(grad: &Grid, src_height: usize, src_width: usize) -> Grid {
    let (height, width, c) = grad.shape();
    if height == src_height && width == src_width {
        return grad.clone();
    }
    let (sy, sx) = (corner_map(height, src_height), corner_map(width, src_width));
    let mut out = Grid::zeros(src_height, src_width, c);
    for r in 0..height {
        for col in 0..width {
            let tap = bilinear_tap(src_width, src_height, col as f64 * sx, r as f64 * sy)
                .expect("corner-aligned coordinates stay in range");
            let w = tap.weights();
            let idx = [
                out.index(tap.y0, tap.x0, 0),
                out.index(tap.y0, tap.x1, 0),
                out.index(tap.y1, tap.x0, 0),
                out.index(tap.y1, tap.x1, 0),
            ];
            let gi = grad.index(r, col, 0);
            for ch in 0..c {
                let g = grad.data()[gi + ch];
                for k in 0..4 {
                    out.data_mut()[idx[k] + ch] += w[k] * g;
                }
            }
        }
    }
    out
}

/// Halves the resolution by averaging 2×2 blocks; an odd trailing row or column is dropped.
pub fn downsample2(src: &Grid) -> Result<Grid> {
    let (h, w, c) = src.shape();
    if h < 2 || w < 2 {
        return Err(invalid(format!("cannot downsample a {h}x{w} grid")));
    }
    let (nh, nw) = (h / 2, w / 2);
    Ok(Grid::from_fn(nh, nw, c, |r, col, ch| {
        0.25 * (src.get(2 * r, 2 * col, ch)
            + src.get(2 * r, 2 * col + 1, ch)
            + src.get(2 * r + 1, 2 * col, ch)
            + src.get(2 * r + 1, 2 * col + 1, ch))
    }))
}
