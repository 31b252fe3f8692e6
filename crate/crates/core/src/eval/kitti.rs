use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// One line per pose: the row-major top 3×4 of the camera-to-world matrix.
pub fn format_kitti_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let row: Vec<String> = p.to_rows12().iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the format written by [`format_kitti_poses`]. Blank lines are skipped.
pub fn parse_kitti_poses(text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::ParseLine { line: i + 1, message };
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a number: {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let row: [f64; 12] = vals.try_into().map_err(|v: Vec<f64>| err(format!("expected 12 values, found {}", v.len())))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        poses.push(Pose::from_rows12(&row));
    }
    Ok(poses)
}

pub fn read_kitti_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    parse_kitti_poses(&std::fs::read_to_string(path)?)
}

pub fn write_kitti_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    Ok(std::fs::write(path, format_kitti_poses(poses))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_line() {
        assert_eq!(format_kitti_poses(&[Pose::identity()]), "1 0 0 0 0 1 0 0 0 0 1 0\n");
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let poses: Vec<Pose> = (0..50)
            .map(|_| {
                let t = Vector3::new(rng.gen_range(-100.0..100.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..500.0));
                Pose::from_euler_xyz(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), t)
            })
            .collect();
        let back = parse_kitti_poses(&format_kitti_poses(&poses)).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.to_matrix() - b.to_matrix()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn short_line_reports_its_number() {
        let text = "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
        match parse_kitti_poses(text) {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_kitti_poses("1 0 0 x 0 1 0 0 0 0 1 0"), Err(Error::ParseLine { line: 1, .. })));
    }
}
