use crate::error::{invalid, Error, Result};
use crate::imagebuf::{DepthMap, Mask};

/// Lower clamp applied to every depth before evaluation.
pub const MIN_DEPTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scaling {
    /// Rescale the prediction so its median matches the ground truth.
    #[default]
    Median,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl DepthMetrics {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3";

    pub fn to_csv_row(&self) -> String {
        let v = [self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.a1, self.a2, self.a3];
        v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",")
    }

    /// Element-wise mean of several results.
    pub fn mean(all: &[DepthMetrics]) -> Option<DepthMetrics> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let s = |f: fn(&DepthMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Some(DepthMetrics {
            abs_rel: s(|m| m.abs_rel),
            sq_rel: s(|m| m.sq_rel),
            rmse: s(|m| m.rmse),
            rmse_log: s(|m| m.rmse_log),
            a1: s(|m| m.a1),
            a2: s(|m| m.a2),
            a3: s(|m| m.a3),
        })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard monocular depth errors over pixels where `valid` is one and the
/// ground truth lies in `[1e-3, cap]`. The prediction is optionally median
/// scaled, then clamped to `[1e-3, cap]`.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, valid: &Mask, scaling: Scaling, cap: f64) -> Result<DepthMetrics> {
    if !pred.same_shape(gt) || pred.height() != valid.height() || pred.width() != valid.width() {
        return Err(Error::DimensionMismatch("prediction, ground truth and mask must share a shape".into()));
    }
    if !(cap > MIN_DEPTH) {
        return Err(invalid("depth cap must exceed the minimum depth"));
    }
    let pairs: Vec<(f64, f64)> = (0..gt.len())
        .filter(|&i| valid.data()[i] > 0.0 && gt.data()[i] >= MIN_DEPTH && gt.data()[i] <= cap)
        .map(|i| (pred.data()[i], gt.data()[i]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    let ratio = match scaling {
        Scaling::Median => {
            let mp = median(pairs.iter().map(|p| p.0).collect());
            if !(mp > 0.0) {
                return Err(invalid("median of the prediction must be positive"));
            }
            median(pairs.iter().map(|p| p.1).collect()) / mp
        }
        Scaling::None => 1.0,
    };
    let n = pairs.len() as f64;
    let mut m = DepthMetrics::default();
    for (p, g) in pairs {
        let p = (p * ratio).clamp(MIN_DEPTH, cap);
        let d = p - g;
        m.abs_rel += d.abs() / g;
        m.sq_rel += d * d / g;
        m.rmse += d * d;
        m.rmse_log += (p.ln() - g.ln()).powi(2);
        let r = (p / g).max(g / p);
        m.a1 += f64::from(u8::from(r < 1.25));
        m.a2 += f64::from(u8::from(r < 1.25f64.powi(2)));
        m.a3 += f64::from(u8::from(r < 1.25f64.powi(3)));
    }
    Ok(DepthMetrics {
        abs_rel: m.abs_rel / n,
        sq_rel: m.sq_rel / n,
        rmse: (m.rmse / n).sqrt(),
        rmse_log: (m.rmse_log / n).sqrt(),
        a1: m.a1 / n,
        a2: m.a2 / n,
        a3: m.a3 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> DepthMap {
        DepthMap::from_fn(6, 7, |r, c| 1.0 + 0.5 * r as f64 + 0.3 * c as f64).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = ramp();
        let m = depth_metrics(&g, &g, &Mask::ones(6, 7), Scaling::None, 80.0).unwrap();
        assert_eq!((m.abs_rel, m.sq_rel, m.rmse, m.rmse_log), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((m.a1, m.a2, m.a3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn doubled_prediction() {
        let g = ramp();
        let p = g.scaled(2.0);
        let m = depth_metrics(&p, &g, &Mask::ones(6, 7), Scaling::None, 80.0).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-12);
        assert!((m.rmse_log - 2f64.ln()).abs() < 1e-12);
        assert_eq!(m.a1, 0.0);
        assert_eq!(m.a2, 0.0);
        let m = depth_metrics(&p, &g, &Mask::ones(6, 7), Scaling::Median, 80.0).unwrap();
        assert!(m.abs_rel < 1e-12 && m.rmse < 1e-12);
        assert_eq!(m.a1, 1.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = ramp();
        assert!(matches!(
            depth_metrics(&g, &g, &Mask::zeros(6, 7), Scaling::Median, 80.0),
            Err(Error::EmptyValidSet)
        ));
    }

    #[test]
    fn prediction_is_clamped_to_the_cap() {
        let g = DepthMap::filled(2, 2, 10.0);
        let p = DepthMap::filled(2, 2, 1000.0);
        let m = depth_metrics(&p, &g, &Mask::ones(2, 2), Scaling::None, 20.0).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn median_scaling_ignores_global_scale(s in 0.1f64..10.0, seed in 0u64..1000) {
            let g = DepthMap::from_fn(5, 5, |r, c| 2.0 + ((seed as usize + r * 5 + c) % 7) as f64).unwrap();
            let p = DepthMap::from_fn(5, 5, |r, c| g.get(r, c, 0) * (1.0 + 0.05 * ((r + c) % 3) as f64)).unwrap();
            let a = depth_metrics(&p, &g, &Mask::ones(5, 5), Scaling::Median, 80.0).unwrap();
            let b = depth_metrics(&p.scaled(s), &g, &Mask::ones(5, 5), Scaling::Median, 80.0).unwrap();
            prop_assert!((a.abs_rel - b.abs_rel).abs() < 1e-9);
            prop_assert!(a.a1 >= 0.0 && a.a1 <= a.a2 && a.a2 <= a.a3 && a.a3 <= 1.0);
        }
    }
}
