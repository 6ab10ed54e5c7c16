//! Trajectory CSV files, dataset manifests, and content hashing.
//!
//! Trajectories are plain CSV with header `t, y_1..y_p, u_1..u_m` and every
//! number printed as 15-significant-digit decimal text, so files are
//! byte-reproducible across runs with the same seed.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Trajectory, TrajectoryKind};
use crate::error::{Error, Result};

/// 15 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.14e}")
}

/// Writes a trajectory as CSV.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let p = traj.raw_dim();
    let m = traj.controls().map(|u| u.nrows()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=p {
        header.push_str(&format!(",y_{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",u_{i}"));
    }
    let mut out = String::with_capacity(traj.len() * (p + m + 1) * 24);
    out.push_str(&header);
    out.push('\n');
    for k in 0..traj.len() {
        out.push_str(&format_float(traj.timestamps()[k]));
        for i in 0..p {
            out.push(',');
            out.push_str(&format_float(traj.observations()[(i, k)]));
        }
        if let Some(u) = traj.controls() {
            for i in 0..m {
                out.push(',');
                out.push_str(&format_float(u[(i, k)]));
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a trajectory CSV written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path, kind: TrajectoryKind) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedFile {
        path: path.display().to_string(),
        reason: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"t") {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "missing time column".into(),
        });
    }
    let p = columns.iter().filter(|c| c.starts_with("y_")).count();
    let m = columns.iter().filter(|c| c.starts_with("u_")).count();
    if 1 + p + m != columns.len() || p == 0 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("unexpected header layout: {header}"),
        });
    }
    let mut timestamps = Vec::new();
    let mut obs_data: Vec<f64> = Vec::new();
    let mut control_data: Vec<f64> = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row {} has {} fields", line_no + 2, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("bad number '{s}' on row {}", line_no + 2),
            })
        };
        timestamps.push(parse(fields[0])?);
        for f in &fields[1..=p] {
            obs_data.push(parse(f)?);
        }
        for f in &fields[p + 1..] {
            control_data.push(parse(f)?);
        }
    }
    let samples = timestamps.len();
    let observations = DMatrix::from_fn(p, samples, |i, k| obs_data[k * p + i]);
    let controls = (m > 0).then(|| DMatrix::from_fn(m, samples, |i, k| control_data[k * m + i]));
    Trajectory::new(timestamps, observations, controls, kind)
}

/// One dataset file entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub kind: TrajectoryKind,
    pub samples: usize,
}

/// Dataset manifest: what was generated, how it was sampled, and which
/// preprocessing the fitting stage must apply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_period: f64,
    pub controlled_sample_period: f64,
    pub seed: u64,
    pub truncate_samples: usize,
    pub delays: usize,
    pub stride: usize,
    /// Fraction of decay trajectories held out for validation (from the end
    /// of the list).
    pub holdout_fraction: f64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn files_of_kind(&self, dir: &Path, kind: TrajectoryKind) -> Vec<PathBuf> {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| dir.join(&e.file))
            .collect()
    }
}

/// FNV-1a hash of a file's bytes, as fixed-width hex. Used for provenance
/// stamps and determinism checks.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(bytes_hash(&fs::read(path)?))
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_round_trip() {
        let timestamps: Vec<f64> = (0..5).map(|k| k as f64 * 1e-3).collect();
        let observations = DMatrix::from_fn(3, 5, |i, k| (i as f64 + 1.0) * 0.1 + k as f64);
        let controls = DMatrix::from_fn(2, 5, |i, k| i as f64 - k as f64 * 0.25);
        let traj = Trajectory::new(
            timestamps,
            observations,
            Some(controls),
            TrajectoryKind::Controlled,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("ssmr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path, TrajectoryKind::Controlled).unwrap();
        assert_eq!(back.len(), traj.len());
        assert!((back.observations() - traj.observations()).amax() < 1e-14);
        assert!((back.controls().unwrap() - traj.controls().unwrap()).amax() < 1e-14);

        // Byte-identical on rewrite.
        let path2 = dir.join("traj2.csv");
        write_trajectory_csv(&path2, &back).unwrap();
        assert_eq!(file_hash(&path).unwrap(), file_hash(&path2).unwrap());
    }

    #[test]
    fn fifteen_significant_digits() {
        let v = std::f64::consts::PI;
        let s = format_float(v);
        let back: f64 = s.parse().unwrap();
        assert!((back - v).abs() < 1e-14);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = std::env::temp_dir().join("ssmr_io_test_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "t,y_1\n0.0,1.0\n0.001,nope\n").unwrap();
        assert!(matches!(
            read_trajectory_csv(&path, TrajectoryKind::Decay),
            Err(Error::MalformedFile { .. })
        ));
    }
}
