use super::{Grid, Mask};

/// Forward difference along columns; the last column is zero.
pub fn grad_x(img: &Grid) -> Grid {
    let (h, w, c) = img.shape();
    Grid::from_fn(h, w, c, |r, col, ch| {
        if col + 1 < w {
            img.get(r, col + 1, ch) - img.get(r, col, ch)
        } else {
            0.0
        }
    })
}

/// Forward difference along rows; the last row is zero.
pub fn grad_y(img: &Grid) -> Grid {
    let (h, w, c) = img.shape();
    Grid::from_fn(h, w, c, |r, col, ch| {
        if r + 1 < h {
            img.get(r + 1, col, ch) - img.get(r, col, ch)
        } else {
            0.0
        }
    })
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Local `(2r+1)²` mean per channel with edge-replicated borders.
pub fn box_mean(img: &Grid, radius: usize) -> Grid {
    if radius == 0 {
        return img.clone();
    }
    let (h, w, c) = img.shape();
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f64;
    // Horizontal pass then vertical pass.
    let mut tmp = Grid::zeros(h, w, c);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for k in -r..=r {
                    s += img.get(row, clamp_idx(col as isize + k, w), ch);
                }
                tmp.set(row, col, ch, s * norm);
            }
        }
    }
    let mut out = Grid::zeros(h, w, c);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for k in -r..=r {
                    s += tmp.get(clamp_idx(row as isize + k, h), col, ch);
                }
                out.set(row, col, ch, s * norm);
            }
        }
    }
    out
}

/// Transpose of [`box_mean`].
pub fn box_mean_adjoint(grad: &Grid, radius: usize) -> Grid {
    if radius == 0 {
        return grad.clone();
    }
    let (h, w, c) = grad.shape();
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f64;
    let mut tmp = Grid::zeros(h, w, c);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let g = grad.get(row, col, ch) * norm;
                for k in -r..=r {
                    let rr = clamp_idx(row as isize + k, h);
                    let i = tmp.index(rr, col, ch);
                    tmp.data_mut()[i] += g;
                }
            }
        }
    }
    let mut out = Grid::zeros(h, w, c);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let g = tmp.get(row, col, ch) * norm;
                for k in -r..=r {
                    let cc = clamp_idx(col as isize + k, w);
                    let i = out.index(row, cc, ch);
                    out.data_mut()[i] += g;
                }
            }
        }
    }
    out
}

/// Grey-scale dilation (window maximum) with a `(2r+1)²` square, applied `iterations` times.
pub fn dilate(mask: &Mask, radius: usize, iterations: usize) -> Mask {
    let (h, w, _) = mask.shape();
    let r = radius as isize;
    let mut cur = mask.grid().clone();
    for _ in 0..iterations {
        let mut horiz = Grid::zeros(h, w, 1);
        for row in 0..h {
            for col in 0..w {
                let mut m = 0.0f64;
                for k in -r..=r {
                    let c = col as isize + k;
                    if c >= 0 && (c as usize) < w {
                        m = m.max(cur.get(row, c as usize, 0));
                    }
                }
                horiz.set(row, col, 0, m);
            }
        }
        let mut next = Grid::zeros(h, w, 1);
        for row in 0..h {
            for col in 0..w {
                let mut m = 0.0f64;
                for k in -r..=r {
                    let rr = row as isize + k;
                    if rr >= 0 && (rr as usize) < h {
                        m = m.max(horiz.get(rr as usize, col, 0));
                    }
                }
                next.set(row, col, 0, m);
            }
        }
        cur = next;
    }
    Mask::new(cur).expect("dilation keeps values in [0, 1]")
}
