use crate::error::{invalid, Error, Result};
use crate::imagebuf::{downsample2, DepthMap, Grid, Mask};

/// Depth maps at successive scales, coarsest first; each level is half the
/// size of the next (rounding down).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthPyramid {
    levels: Vec<DepthMap>,
}

impl DepthPyramid {
    pub fn new(levels: Vec<DepthMap>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("empty depth pyramid"));
        }
        for pair in levels.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if lo.height() != hi.height() / 2 || lo.width() != hi.width() / 2 {
                return Err(Error::DimensionMismatch(format!(
                    "pyramid level {}x{} is not half of {}x{}",
                    lo.width(),
                    lo.height(),
                    hi.width(),
                    hi.height()
                )));
            }
        }
        if levels.iter().any(|d| !d.is_positive()) {
            return Err(invalid("pyramid depths must be positive"));
        }
        Ok(Self { levels })
    }

    /// Averages `depth` down into `n` scales.
    pub fn from_full(depth: &DepthMap, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("a pyramid needs at least one level"));
        }
        let mut levels = vec![depth.clone()];
        for _ in 1..n {
            let next = DepthMap::new(downsample2(levels.last().unwrap())?)?;
            levels.push(next);
        }
        levels.reverse();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[DepthMap] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &DepthMap {
        self.levels.last().unwrap()
    }
}

/// Halves a mask, keeping only cells whose four children are all set.
pub(crate) fn half_mask(m: &Mask) -> Result<Mask> {
    let g: Grid = downsample2(m)?;
    Mask::new(g.map(|v| if v >= 1.0 { 1.0 } else { 0.0 }))
}
