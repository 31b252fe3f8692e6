//! Primitive operations recorded on a [`Tape`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{Tape, Var, DIV_GUARD};
use crate::imagebuf::{self, bilinear_tap, BilinearTap, Grid};

/// How an operand's elements line up with a broadcast output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bc {
    Same,
    Scalar,
    /// Single-channel operand repeated across the output's channels.
    Channel,
}

fn broadcast(a: (usize, usize, usize), b: (usize, usize, usize)) -> ((usize, usize, usize), Bc, Bc) {
    let numel = |s: (usize, usize, usize)| s.0 * s.1 * s.2;
    if a == b {
        (a, Bc::Same, Bc::Same)
    } else if numel(b) == 1 {
        (a, Bc::Same, Bc::Scalar)
    } else if numel(a) == 1 {
        (b, Bc::Scalar, Bc::Same)
    } else if a.0 == b.0 && a.1 == b.1 && b.2 == 1 {
        (a, Bc::Same, Bc::Channel)
    } else if a.0 == b.0 && a.1 == b.1 && a.2 == 1 {
        (b, Bc::Channel, Bc::Same)
    } else {
        panic!("cannot broadcast shapes {a:?} and {b:?}");
    }
}

#[inline]
fn bidx(bc: Bc, i: usize, channels: usize) -> usize {
    match bc {
        Bc::Same => i,
        Bc::Scalar => 0,
        Bc::Channel => i / channels,
    }
}

fn binary<'t>(
    a: Var<'t>,
    b: Var<'t>,
    f: impl Fn(f64, f64) -> f64,
    da: impl Fn(f64, f64) -> f64 + 'static,
    db: impl Fn(f64, f64) -> f64 + 'static,
) -> Var<'t> {
    let tape = a.tape;
    let (av, bv) = (a.value(), b.value());
    let (shape, ba, bb) = broadcast(av.shape(), bv.shape());
    let (h, w, c) = shape;
    let n = h * w * c;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(f(av.data()[bidx(ba, i, c)], bv.data()[bidx(bb, i, c)]));
    }
    let out = Grid::new(h, w, c, out).expect("broadcast shape");
    let (a_shape, b_shape) = (av.shape(), bv.shape());
    tape.op(out, &[a, b], move |g| {
        let mut ga = Grid::zeros(a_shape.0, a_shape.1, a_shape.2);
        let mut gb = Grid::zeros(b_shape.0, b_shape.1, b_shape.2);
        for (i, &gi) in g.data().iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            let (ia, ib) = (bidx(ba, i, c), bidx(bb, i, c));
            let (x, y) = (av.data()[ia], bv.data()[ib]);
            ga.data_mut()[ia] += gi * da(x, y);
            gb.data_mut()[ib] += gi * db(x, y);
        }
        vec![ga, gb]
    })
}

fn unary<'t>(x: Var<'t>, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64 + 'static) -> Var<'t> {
    let xv = x.value();
    let out = xv.map(&f);
    x.tape.op(out, &[x], move |g| {
        let mut gx = g.clone();
        for (gi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
            *gi *= df(xi);
        }
        vec![gx]
    })
}

#[inline]
fn guard(d: f64) -> f64 {
    if d.abs() < DIV_GUARD {
        if d < 0.0 {
            -DIV_GUARD
        } else {
            DIV_GUARD
        }
    } else {
        d
    }
}

fn bits_hash(tape: &Tape, bits: impl Iterator<Item = bool>) {
    let mut word = 0u64;
    let mut n = 0;
    for b in bits {
        word = (word << 1) | b as u64;
        n += 1;
        if n == 64 {
            tape.note(word);
            word = 0;
            n = 0;
        }
    }
    tape.note(word ^ ((n as u64) << 56));
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Var<'t> {
        binary(self, other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        binary(self, other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        binary(self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    /// Division with the denominator pushed away from zero by [`DIV_GUARD`].
    pub fn div(self, other: Var<'t>) -> Var<'t> {
        let ov = other.value();
        bits_hash(self.tape, ov.data().iter().map(|d| d.abs() < DIV_GUARD));
        binary(
            self,
            other,
            |a, b| a / guard(b),
            |_, b| 1.0 / guard(b),
            |a, b| if b.abs() < DIV_GUARD { 0.0 } else { -a / (b * b) },
        )
    }

    pub fn neg(self) -> Var<'t> {
        unary(self, |x| -x, |_| -1.0)
    }

    /// Multiply by a constant.
    pub fn scale(self, k: f64) -> Var<'t> {
        unary(self, move |x| x * k, move |_| k)
    }

    /// Add a constant.
    pub fn offset(self, k: f64) -> Var<'t> {
        unary(self, move |x| x + k, |_| 1.0)
    }

    /// `|x|` with subgradient 0 at 0.
    pub fn abs(self) -> Var<'t> {
        bits_hash(self.tape, self.value().data().iter().map(|x| *x >= 0.0));
        unary(self, f64::abs, |x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn exp(self) -> Var<'t> {
        unary(self, f64::exp, f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        unary(self, f64::ln, |x| 1.0 / x)
    }

    /// `√x` with derivative 0 at 0.
    pub fn sqrt(self) -> Var<'t> {
        bits_hash(self.tape, self.value().data().iter().map(|x| *x > 0.0));
        unary(self, f64::sqrt, |x| if x > 0.0 { 0.5 / x.sqrt() } else { 0.0 })
    }

    pub fn square(self) -> Var<'t> {
        unary(self, |x| x * x, |x| 2.0 * x)
    }

    /// Clamp to `[lo, hi]`; the derivative is zero where clamping is active.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        bits_hash(self.tape, self.value().data().iter().map(|x| *x < lo || *x > hi));
        unary(self, move |x| x.clamp(lo, hi), move |x| if x < lo || x > hi { 0.0 } else { 1.0 })
    }

    pub fn sum(self) -> Var<'t> {
        let xv = self.value();
        let s: f64 = xv.data().iter().sum();
        let shape = xv.shape();
        self.tape.op(Grid::scalar(s), &[self], move |g| {
            vec![Grid::filled(shape.0, shape.1, shape.2, g.as_scalar())]
        })
    }

    pub fn mean(self) -> Var<'t> {
        let xv = self.value();
        let n = xv.len() as f64;
        let s: f64 = xv.data().iter().sum::<f64>() / n;
        let shape = xv.shape();
        self.tape.op(Grid::scalar(s), &[self], move |g| {
            vec![Grid::filled(shape.0, shape.1, shape.2, g.as_scalar() / n)]
        })
    }

    /// Minimum element; the gradient goes to the first minimiser.
    pub fn min_reduce(self) -> Var<'t> {
        let xv = self.value();
        let (mut arg, mut best) = (0, f64::INFINITY);
        for (i, &v) in xv.data().iter().enumerate() {
            if v < best {
                best = v;
                arg = i;
            }
        }
        self.tape.note(arg as u64);
        let shape = xv.shape();
        self.tape.op(Grid::scalar(best), &[self], move |g| {
            let mut out = Grid::zeros(shape.0, shape.1, shape.2);
            out.data_mut()[arg] = g.as_scalar();
            vec![out]
        })
    }

    pub fn channel_mean(self) -> Var<'t> {
        let xv = self.value();
        let c = xv.channels();
        if c == 1 {
            return self;
        }
        let out = xv.channel_mean();
        self.tape.op(out, &[self], move |g| {
            let inv = 1.0 / c as f64;
            let data = g.data().iter().flat_map(|&gi| std::iter::repeat(gi * inv).take(c)).collect();
            vec![Grid::new(g.height(), g.width(), c, data).unwrap()]
        })
    }

    pub fn select_channel(self, ch: usize) -> Var<'t> {
        let xv = self.value();
        let (h, w, c) = xv.shape();
        assert!(ch < c, "channel {ch} out of range");
        self.tape.op(xv.channel(ch), &[self], move |g| {
            let mut out = Grid::zeros(h, w, c);
            for (i, &gi) in g.data().iter().enumerate() {
                out.data_mut()[i * c + ch] = gi;
            }
            vec![out]
        })
    }

    /// Element `i` of the flattened value, as a scalar.
    pub fn elem(self, i: usize) -> Var<'t> {
        let xv = self.value();
        let shape = xv.shape();
        self.tape.op(Grid::scalar(xv.data()[i]), &[self], move |g| {
            let mut out = Grid::zeros(shape.0, shape.1, shape.2);
            out.data_mut()[i] = g.as_scalar();
            vec![out]
        })
    }

    pub fn box_mean(self, radius: usize) -> Var<'t> {
        let out = imagebuf::box_mean(&self.value(), radius);
        self.tape.op(out, &[self], move |g| vec![imagebuf::box_mean_adjoint(g, radius)])
    }

    pub fn grad_x(self) -> Var<'t> {
        let out = imagebuf::grad_x(&self.value());
        self.tape.op(out, &[self], |g| {
            let (h, w, c) = g.shape();
            let mut out = Grid::zeros(h, w, c);
            for r in 0..h {
                for col in 0..w.saturating_sub(1) {
                    for ch in 0..c {
                        let gi = g.get(r, col, ch);
                        let i1 = out.index(r, col + 1, ch);
                        let i0 = out.index(r, col, ch);
                        out.data_mut()[i1] += gi;
                        out.data_mut()[i0] -= gi;
                    }
                }
            }
            vec![out]
        })
    }

    pub fn grad_y(self) -> Var<'t> {
        let out = imagebuf::grad_y(&self.value());
        self.tape.op(out, &[self], |g| {
            let (h, w, c) = g.shape();
            let mut out = Grid::zeros(h, w, c);
            for r in 0..h.saturating_sub(1) {
                for col in 0..w {
                    for ch in 0..c {
                        let gi = g.get(r, col, ch);
                        let i1 = out.index(r + 1, col, ch);
                        let i0 = out.index(r, col, ch);
                        out.data_mut()[i1] += gi;
                        out.data_mut()[i0] -= gi;
                    }
                }
            }
            vec![out]
        })
    }

    /// Corner-aligned bilinear upsampling (see [`imagebuf::upsample`]).
    pub fn upsample(self, height: usize, width: usize) -> Var<'t> {
        let xv = self.value();
        let (sh, sw) = (xv.height(), xv.width());
        if sh == height && sw == width {
            return self;
        }
        let out = imagebuf::upsample(&xv, height, width).expect("upsample target not smaller");
        self.tape.op(out, &[self], move |g| vec![imagebuf::upsample_adjoint(g, sh, sw)])
    }

    /// Elementwise `self < other` as a constant 0/1 grid (no gradient).
    pub fn lt(self, other: Var<'t>) -> Grid {
        let (a, b) = (self.value(), other.value());
        let m = a.zip_map(&b, |x, y| if x < y { 1.0 } else { 0.0 }).expect("same shape");
        bits_hash(self.tape, m.data().iter().map(|v| *v == 1.0));
        m
    }

    /// Samples `self` (an `H × W × C` image) at per-pixel coordinates `coords`
    /// (`h × w × 2`, channels `u, v`). Returns the `h × w × C` samples and the
    /// in-bounds flags; out-of-bounds samples are zero with zero gradient.
    pub fn bilinear_sample(self, coords: Var<'t>) -> (Var<'t>, Grid) {
        let img = self.value();
        let cv = coords.value();
        let (h, w, two) = cv.shape();
        assert_eq!(two, 2, "coordinates need two channels");
        let c = img.channels();
        let mut taps: Vec<Option<BilinearTap>> = Vec::with_capacity(h * w);
        let mut out = Grid::zeros(h, w, c);
        let mut valid = Grid::zeros(h, w, 1);
        for p in 0..h * w {
            let (u, v) = (cv.data()[2 * p], cv.data()[2 * p + 1]);
            let tap = bilinear_tap(img.width(), img.height(), u, v);
            match &tap {
                Some(t) => {
                    imagebuf::sample::apply_tap(&img, t, &mut out.data_mut()[p * c..(p + 1) * c]);
                    valid.data_mut()[p] = 1.0;
                    self.tape.note(((t.x0 as u64) << 32) | t.y0 as u64);
                }
                None => self.tape.note(u64::MAX),
            }
            taps.push(tap);
        }
        let img_shape = img.shape();
        let var = self.tape.op(out, &[self, coords], move |g| {
            let mut gi = Grid::zeros(img_shape.0, img_shape.1, img_shape.2);
            let mut gc = Grid::zeros(h, w, 2);
            for (p, tap) in taps.iter().enumerate() {
                let Some(t) = tap else { continue };
                let wts = t.weights();
                let idx = [
                    img.index(t.y0, t.x0, 0),
                    img.index(t.y0, t.x1, 0),
                    img.index(t.y1, t.x0, 0),
                    img.index(t.y1, t.x1, 0),
                ];
                let (mut du, mut dv) = (0.0, 0.0);
                for ch in 0..c {
                    let go = g.data()[p * c + ch];
                    if go == 0.0 {
                        continue;
                    }
                    let d = img.data();
                    let (i00, i01, i10, i11) =
                        (d[idx[0] + ch], d[idx[1] + ch], d[idx[2] + ch], d[idx[3] + ch]);
                    for k in 0..4 {
                        gi.data_mut()[idx[k] + ch] += wts[k] * go;
                    }
                    du += go * ((1.0 - t.wy) * (i01 - i00) + t.wy * (i11 - i10));
                    dv += go * ((1.0 - t.wx) * (i10 - i00) + t.wx * (i11 - i01));
                }
                gc.data_mut()[2 * p] = du;
                gc.data_mut()[2 * p + 1] = dv;
            }
            vec![gi, gc]
        });
        (var, valid)
    }
}

impl Tape {
    /// Concatenates scalars into a `1 × n` vector.
    pub fn stack<'t>(&'t self, items: &[Var<'t>]) -> Var<'t> {
        let vals: Vec<f64> = items.iter().map(|v| v.item()).collect();
        let n = vals.len();
        self.op(Grid::from_vec(vals), items, move |g| {
            (0..n).map(|i| Grid::scalar(g.data()[i])).collect()
        })
    }

    /// Stacks equally shaped single-channel grids along the channel axis.
    pub fn stack_channels<'t>(&'t self, items: &[Var<'t>]) -> Var<'t> {
        let vals: Vec<_> = items.iter().map(|v| v.value()).collect();
        let (h, w, c1) = vals[0].shape();
        assert!(c1 == 1 && vals.iter().all(|v| v.shape() == (h, w, 1)));
        let k = items.len();
        let out = Grid::from_fn(h, w, k, |r, c, ch| vals[ch].get(r, c, 0));
        self.op(out, items, move |g| (0..k).map(|ch| g.channel(ch)).collect())
    }
}

macro_rules! var_binop {
    ($tr:ident, $method:ident) => {
        impl<'t> $tr for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                Var::$method(self, rhs)
            }
        }
        impl<'t> $tr<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                let k = self.tape.scalar(rhs);
                Var::$method(self, k)
            }
        }
        impl<'t> $tr<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                let k = rhs.tape.scalar(self);
                Var::$method(k, rhs)
            }
        }
    };
}

var_binop!(Add, add);
var_binop!(Sub, sub);
var_binop!(Mul, mul);
var_binop!(Div, div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        Var::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagebuf::{bilinear_sample, box_mean, grad_x, upsample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Grid {
        Grid::from_fn(h, w, c, |_, _, _| rng.gen_range(0.1..1.0))
    }

    /// Central differences of a scalar function of one grid.
    fn numeric_grad(x: &Grid, f: impl Fn(&Grid) -> f64) -> Grid {
        let h = 1e-6;
        let mut out = Grid::zeros(x.height(), x.width(), x.channels());
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn check(x: &Grid, build: impl for<'t> Fn(Var<'t>) -> Var<'t>) {
        let f = |g: &Grid| {
            let t = Tape::new();
            build(t.constant(g.clone())).item()
        };
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let loss = build(v);
        let grads = tape.backward(loss).unwrap();
        let a = grads.wrt(v);
        let n = numeric_grad(x, f);
        for (p, q) in a.data().iter().zip(n.data()) {
            assert!((p - q).abs() < 1e-6 * (1.0 + q.abs()), "autodiff {p} vs numeric {q}");
        }
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.leaf(Grid::scalar(1.7));
        let y = tape.leaf(Grid::scalar(-0.4));
        let z = x * y;
        let g = tape.backward(z).unwrap();
        assert_eq!(g.wrt(x).as_scalar(), -0.4);
        assert_eq!(g.wrt(y).as_scalar(), 1.7);
    }

    #[test]
    fn stop_gradient_semantics() {
        let tape = Tape::new();
        let x = tape.leaf(Grid::scalar(3.0));
        let y = x.stop_gradient() * x;
        assert_eq!(y.item(), 9.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).as_scalar(), 3.0);

        // A sibling path that does not pass through the stop is unaffected.
        let tape = Tape::new();
        let x = tape.leaf(Grid::scalar(2.0));
        let y = x.stop_gradient() * 5.0 + x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).as_scalar(), 4.0);
    }

    #[test]
    fn unreachable_leaf_gets_zero_and_non_scalar_loss_fails() {
        let tape = Tape::new();
        let x = tape.leaf(Grid::filled(2, 2, 1, 1.0));
        let y = tape.leaf(Grid::scalar(1.0));
        let g = tape.backward(y * 2.0).unwrap();
        assert_eq!(g.wrt(x), Grid::zeros(2, 2, 1));
        assert!(!g.is_reachable(x));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_grid(&mut rng, 3, 4, 2);
        check(&x, |v| (v * v).exp().mean());
        check(&x, |v| v.ln().sum());
        check(&x, |v| (v.scale(2.0).offset(-1.0)).abs().mean());
        check(&x, |v| (1.0 / v).sqrt().sum());
        check(&x, |v| v.clamp(0.2, 0.8).square().sum());
        check(&x, |v| v.min_reduce() * v.mean());
        check(&x, |v| v.channel_mean().square().sum());
        check(&x, |v| v.box_mean(1).square().sum());
        check(&x, |v| (v.grad_x().square() + v.grad_y().square()).sum());
        check(&x, |v| v.select_channel(1).square().sum());
        check(&x, |v| v.upsample(7, 9).square().sum());
        check(&x, |v| (v.elem(3) * v.elem(5) - v.elem(0)).square());
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_grid(&mut rng, 3, 3, 1);
        let img = random_grid(&mut rng, 3, 3, 3);
        check(&x, |v| {
            let k = v.tape().constant(img.clone());
            (k * v).square().sum()
        });
        check(&x, |v| {
            let s = v.mean();
            let k = v.tape().constant(img.clone());
            (k / s).sum()
        });
    }

    #[test]
    fn bilinear_sampling_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_grid(&mut rng, 6, 7, 3);
        let coords = Grid::from_fn(2, 3, 2, |_, _, ch| {
            if ch == 0 {
                rng.gen_range(0.1..5.9)
            } else {
                rng.gen_range(0.1..4.9)
            }
        });
        let ic = img.clone();
        check(&coords, move |c| {
            let i = c.tape().constant(ic.clone());
            i.bilinear_sample(c).0.square().sum()
        });
        let cc = coords.clone();
        check(&img, move |i| {
            let c = i.tape().constant(cc.clone());
            i.bilinear_sample(c).0.square().sum()
        });
    }

    #[test]
    fn taped_forward_equals_untaped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_grid(&mut rng, 5, 6, 3);
        let tape = Tape::new();
        let v = tape.leaf(img.clone());
        assert_eq!(*v.box_mean(1).value(), box_mean(&img, 1));
        assert_eq!(*v.grad_x().value(), grad_x(&img));
        assert_eq!(*v.upsample(9, 11).value(), upsample(&img, 9, 11).unwrap());
        assert_eq!(v.mean().item(), img.mean());
        let coords = Grid::from_fn(1, 2, 2, |_, c, ch| [[1.25, 2.5], [4.75, 0.5]][c][ch]);
        let (s, valid) = v.bilinear_sample(tape.constant(coords.clone()));
        for p in 0..2 {
            let (plain, ok) = bilinear_sample(&img, coords.data()[2 * p], coords.data()[2 * p + 1]);
            assert!(ok);
            assert_eq!(valid.data()[p], 1.0);
            assert_eq!(&s.value().data()[3 * p..3 * p + 3], plain.as_slice());
        }
    }

    #[test]
    fn comparisons_are_constant_and_fingerprinted() {
        let tape = Tape::new();
        let a = tape.leaf(Grid::from_vec(vec![1.0, 2.0, 3.0]));
        let b = tape.constant(Grid::from_vec(vec![2.0, 2.0, 2.0]));
        let before = tape.fingerprint();
        let m = a.lt(b);
        assert_eq!(m.data(), &[1.0, 0.0, 0.0]);
        assert_ne!(tape.fingerprint(), before);
        let loss = (tape.constant(m) * a).sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn guarded_division() {
        let tape = Tape::new();
        let x = tape.leaf(Grid::scalar(1.0));
        let z = tape.leaf(Grid::scalar(0.0));
        let q = x / z;
        assert!(q.item().is_finite());
        let g = tape.backward(q).unwrap();
        assert!(g.wrt(x).as_scalar().is_finite());
        assert_eq!(g.wrt(z).as_scalar(), 0.0);
    }
}
