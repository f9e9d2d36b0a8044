//! Trajectory text files: one `index tx ty tz qx qy qz qw` line per pose,
//! `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use photoloss::eval::Trajectory;
use photoloss::Pose;

use super::{read_to_string, write_atomic};
use crate::error::{CliError, Result};

pub fn encode(traj: &Trajectory) -> String {
    let mut out = String::from("# index tx ty tz qx qy qz qw\n");
    for (index, pose) in traj.entries() {
        let mut q = UnitQuaternion::from_scaled_axis(pose.rotation).into_inner();
        if q.w < 0.0 {
            q = -q;
        }
        let t = &pose.translation;
        let _ = writeln!(out, "{index} {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w);
    }
    out
}

/// Parses a trajectory. Errors carry the 1-based line number.
pub fn decode(text: &str) -> std::result::Result<Trajectory, (usize, String)> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err((line_no, format!("expected 8 fields (index tx ty tz qx qy qz qw), found {}", fields.len())));
        }
        let index: u64 = fields[0]
            .parse()
            .map_err(|_| (line_no, format!("index {:?} is not a non-negative integer", fields[0])))?;
        let mut v = [0.0f64; 7];
        for (slot, s) in v.iter_mut().zip(&fields[1..]) {
            *slot = s.parse().map_err(|_| (line_no, format!("{s:?} is not a number")))?;
            if !slot.is_finite() {
                return Err((line_no, format!("{s:?} is not finite")));
            }
        }
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err((line_no, format!("quaternion norm {norm} is not 1")));
        }
        let rotation = UnitQuaternion::from_quaternion(q).scaled_axis();
        let pose = Pose::new(rotation, Vector3::new(v[0], v[1], v[2])).map_err(|e| (line_no, e.to_string()))?;
        if let Some((prev, _)) = entries.last() {
            if index <= *prev {
                return Err((line_no, format!("index {index} does not increase after {prev}")));
            }
        }
        entries.push((index, pose));
    }
    Trajectory::new(entries).map_err(|e| (0, e.to_string()))
}

pub fn write(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, encode(traj).as_bytes())
}

pub fn read(path: &Path) -> Result<Trajectory> {
    decode(&read_to_string(path)?).map_err(|(line, message)| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}
