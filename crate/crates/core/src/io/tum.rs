//! TUM RGB-D trajectory text: `timestamp tx ty tz qx qy qz qw` per line,
//! camera-to-world, `#` comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geom::{RigidPose, Vec3};

/// Quaternions this close to unit norm are renormalized; farther is an error.
pub const QUATERNION_NORM_TOL: f64 = 1e-3;

/// Deviation from unit norm above which renormalization is logged.
const QUATERNION_WARN_TOL: f64 = 1e-6;

/// Significant digits written for pose components.
pub const POSE_DIGITS: usize = 9;

/// One parsed line. `line` is only used for error messages.
pub fn parse_line(text: &str, path: &Path, line: usize) -> Result<Option<(f64, RigidPose)>> {
    let text = text.trim();
    if text.is_empty() || text.starts_with('#') {
        return Ok(None);
    }
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(err(format!("expected 8 fields, found {}", fields.len())));
    }
    let mut v = [0.0f64; 8];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse().map_err(|_| err(format!("not a number: {f:?}")))?;
        if !slot.is_finite() {
            return Err(err(format!("non-finite value {f:?}")));
        }
    }
    let q = Quaternion::new(v[7], v[4], v[5], v[6]);
    let norm = q.norm();
    if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
        return Err(err(format!("quaternion norm {norm} is not unit")));
    }
    // Printed poses are rounded to POSE_DIGITS, so only warn well above that.
    if (norm - 1.0).abs() > QUATERNION_WARN_TOL {
        log::warn!(
            "{}:{line}: quaternion norm {norm:.6} renormalized",
            path.display()
        );
    }
    let pose = RigidPose::from_quaternion_center(
        &UnitQuaternion::new_normalize(q),
        Vec3::new(v[1], v[2], v[3]),
    );
    Ok(Some((v[0], pose)))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut traj = Trajectory::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some((t, pose)) = parse_line(&line, path, i + 1)? {
            traj.push(t, pose).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
    }
    Ok(traj)
}

/// `v` with `digits` significant digits, fixed notation where reasonable.
pub(crate) fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{:.*e}", digits - 1, v);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Formats one trajectory line. Timestamps keep full precision; pose
/// components get [`POSE_DIGITS`] significant digits.
pub fn format_line(stamp: f64, pose: &RigidPose) -> String {
    let c = pose.camera_center();
    let q = pose.orientation_quaternion();
    let q = q.as_ref().coords;
    let mut out = format!("{stamp}");
    for v in [c.x, c.y, c.z, q.x, q.y, q.z, q.w] {
        out.push(' ');
        out.push_str(&format_significant(v, POSE_DIGITS));
    }
    out
}

/// Line-at-a-time trajectory writer for streaming runs.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl TrajectoryWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "# timestamp tx ty tz qx qy qz qw")?;
        Ok(TrajectoryWriter { out })
    }

    pub fn write(&mut self, stamp: f64, pose: &RigidPose) -> std::io::Result<()> {
        writeln!(self.out, "{}", format_line(stamp, pose))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    let mut w = TrajectoryWriter::create(path)?;
    for (t, pose) in traj.iter() {
        w.write(t, pose).map_err(|e| Error::io(path, e))?;
    }
    w.finish().map_err(|e| Error::io(path, e))?;
    Ok(())
}
