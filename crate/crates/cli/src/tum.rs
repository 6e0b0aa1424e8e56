//! TUM trajectory files: `index tx ty tz qx qy qz qw`, camera-to-world.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gpo_core::{Pose, Rotation};
use nalgebra::Vector3;

const SIGNIFICANT_DIGITS: usize = 9;

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed,
/// exponent form outside `[1e-5, 1e9)`.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn format_trajectory(poses: &[Pose]) -> String {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        // camera-to-world rotation, sign fixed so that qw >= 0
        let mut q = pose.rotation.inverse().quaternion().into_inner();
        if q.w < 0.0 {
            q = -q;
        }
        let values = [pose.position.x, pose.position.y, pose.position.z, q.i, q.j, q.k, q.w];
        write!(out, "{i}").expect("string write");
        for v in values {
            write!(out, " {}", format_significant(v, SIGNIFICANT_DIGITS)).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(poses: &[Pose], path: &Path) -> Result<()> {
    if poses.is_empty() {
        bail!("no poses to write to {}", path.display());
    }
    std::fs::write(path, format_trajectory(poses)).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_trajectory(text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("line {}: bad number", n + 1))?;
        let [_, tx, ty, tz, qx, qy, qz, qw] = values[..] else {
            bail!("line {}: expected 8 fields, got {}", n + 1, values.len());
        };
        let r_wc = Rotation::from_wxyz(qw, qx, qy, qz).with_context(|| format!("line {}", n + 1))?;
        poses.push(Pose::new(r_wc.inverse(), Vector3::new(tx, ty, tz)));
    }
    Ok(poses)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trajectory(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pose_line() {
        assert_eq!(format_trajectory(&[Pose::identity()]), "0 0 0 0 0 0 0 1\n");
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(1.0, 9), "1");
        assert_eq!(format_significant(-0.5, 9), "-0.5");
        assert_eq!(format_significant(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_significant(123456.789012, 9), "123456.789");
        assert_eq!(format_significant(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_significant(2.5e12, 9), "2.5e+12");
        assert_eq!(format_significant(-0.0, 9), "0");
    }

    #[test]
    fn round_trip_recovers_poses() {
        let poses: Vec<Pose> = (0..6)
            .map(|i| {
                let f = i as f64;
                Pose::new(
                    Rotation::from_scaled_axis(Vector3::new(0.3 * f, -0.2, 0.1 * f - 0.25)),
                    Vector3::new(f * 0.123456789, -1.0 / (f + 1.0), 1e-6 * f),
                )
            })
            .collect();
        let text = format_trajectory(&poses);
        assert_eq!(text.lines().count(), poses.len());
        let back = parse_trajectory(&text).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.position - b.position).norm() < 1e-8);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-8);
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_trajectory("0 1 2 3").is_err());
        assert!(parse_trajectory("0 a 0 0 0 0 0 1").is_err());
        assert!(write_trajectory(&[], Path::new("/nonexistent/x.tum")).is_err());
    }
}
