use std::ops::Deref;

use crate::error::{invalid, Error, Result};

/// Row-major `height × width × channels` array of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid(format!("empty grid {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width}x{channels} grid",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty grid");
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self { height: 1, width: 1, channels: 1, data: vec![value] }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n > 0, "empty vector");
        Self { height: 1, width: n, channels: 1, data: values }
    }

    /// Builds a grid from `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data).expect("non-empty grid")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }
    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.index(row, col, ch);
        self.data[i] = value;
    }

    /// The only element of a 1×1×1 grid.
    pub fn as_scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar grid");
        self.data[0]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn channel(&self, ch: usize) -> Grid {
        let data = self.data.iter().skip(ch).step_by(self.channels).copied().collect();
        Grid { height: self.height, width: self.width, channels: 1, data }
    }

    /// Per-pixel mean over channels.
    pub fn channel_mean(&self) -> Grid {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f64;
        let data = self.data.chunks_exact(self.channels).map(|px| px.iter().sum::<f64>() * inv).collect();
        Grid { height: self.height, width: self.width, channels: 1, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

macro_rules! grid_wrapper {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Grid);

        impl Deref for $name {
            type Target = Grid;
            fn deref(&self) -> &Grid {
                &self.0
            }
        }

        impl $name {
            pub fn grid(&self) -> &Grid {
                &self.0
            }
            pub fn into_grid(self) -> Grid {
                self.0
            }
            pub fn data_mut(&mut self) -> &mut [f64] {
                self.0.data_mut()
            }
            pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
                self.0.set(row, col, ch, value)
            }
        }
    };
}

grid_wrapper!(
    /// Photometric image with 1 or 3 channels. Values are finite; loaders keep them in `[0, 1]`.
    Image
);
grid_wrapper!(
    /// Single-channel metric depth. Entries flagged invalid by an accompanying mask may be zero.
    DepthMap
);
grid_wrapper!(
    /// Single-channel weights in `[0, 1]`; binary masks use `{0, 1}`.
    Mask
);

impl Image {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != 1 && grid.channels() != 3 {
            return Err(invalid(format!("images have 1 or 3 channels, got {}", grid.channels())));
        }
        if !grid.is_finite() {
            return Err(invalid("image contains non-finite values"));
        }
        Ok(Self(grid))
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(Grid::from_fn(height, width, channels, f))
    }
}

impl DepthMap {
    /// Accepts any finite, non-negative depths (zero marks an invalid entry).
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(invalid("depth maps are single-channel"));
        }
        if !grid.data().iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(invalid("depth values must be finite and non-negative"));
        }
        Ok(Self(grid))
    }

    /// Like [`DepthMap::new`] but every entry must be strictly positive.
    pub fn positive(grid: Grid) -> Result<Self> {
        let d = Self::new(grid)?;
        if d.data().iter().any(|v| *v <= 0.0) {
            return Err(invalid("depth values must be positive"));
        }
        Ok(d)
    }

    pub fn filled(height: usize, width: usize, depth: f64) -> Self {
        Self(Grid::filled(height, width, 1, depth))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Grid::from_fn(height, width, 1, |r, c, _| f(r, c)))
    }

    pub fn is_positive(&self) -> bool {
        self.data().iter().all(|v| *v > 0.0)
    }

    pub fn scaled(&self, s: f64) -> DepthMap {
        DepthMap(self.0.map(|v| v * s))
    }
}

impl Mask {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(invalid("masks are single-channel"));
        }
        if !grid.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(invalid("mask values must lie in [0, 1]"));
        }
        Ok(Self(grid))
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self(Grid::filled(height, width, 1, 1.0))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Grid::zeros(height, width, 1))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self(Grid::from_fn(height, width, 1, |r, c, _| if f(r, c) { 1.0 } else { 0.0 }))
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col, 0)
    }

    /// Number of entries equal to one.
    pub fn count_ones(&self) -> usize {
        self.data().iter().filter(|v| **v == 1.0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data().iter().all(|v| *v == 0.0 || *v == 1.0)
    }

    /// Pointwise product.
    pub fn and(&self, other: &Mask) -> Mask {
        Mask(self.0.zip_map(&other.0, |a, b| a * b).expect("mask shapes agree"))
    }
}
