/// Procedural colour texture: two octaves of value noise plus oriented stripes.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub seed: u64,
    pub base: [f64; 3],
    pub stripe_freq: f64,
    pub stripe_angle: f64,
}

fn hash(seed: u64, x: i64, y: i64) -> f64 {
    let mut z = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smooth lattice noise in `[0, 1]` with unit cell size.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (ix, iy) = (xf as i64, yf as i64);
    let (tx, ty) = (fade(x - xf), fade(y - yf));
    let a = hash(seed, ix, iy);
    let b = hash(seed, ix + 1, iy);
    let c = hash(seed, ix, iy + 1);
    let d = hash(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

impl Texture {
    /// Colour at texture coordinates `(s, t)`, where one unit is one noise cell.
    pub fn eval(&self, s: f64, t: f64) -> [f64; 3] {
        let n1 = value_noise(self.seed, s, t);
        let n2 = value_noise(self.seed ^ 0xA5A5, 2.0 * s + 0.37, 2.0 * t + 0.61);
        let (sa, ca) = self.stripe_angle.sin_cos();
        let stripe = 0.5 + 0.5 * (std::f64::consts::TAU * self.stripe_freq * (s * ca + t * sa)).sin();
        let v = 0.5 * n1 + 0.25 * n2 + 0.25 * stripe;
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let tint = value_noise(self.seed.wrapping_add(17 * (ch as u64 + 1)), 0.5 * s, 0.5 * t);
            *o = (0.3 * self.base[ch] + 0.55 * v + 0.15 * tint).clamp(0.05, 0.95);
        }
        out
    }
}
