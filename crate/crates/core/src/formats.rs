//! JSON-lines record formats shared by the pipeline stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{feature_from_landmarks, JointConfig, Landmark, SkeletonFeature};
use crate::sampling::PairedTuple;

/// Parses every non-blank line of `path`, keeping 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Record {
            context: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: impl IntoIterator<Item = T>) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::parse("serialize", e))?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn read_tuples(path: &Path) -> Result<Vec<(usize, PairedTuple)>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub q: JointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonRecord {
    pub x: SkeletonFeature,
}

pub fn read_configs(path: &Path) -> Result<Vec<JointConfig>> {
    Ok(read_jsonl::<ConfigRecord>(path)?
        .into_iter()
        .map(|(_, r)| r.q)
        .collect())
}

pub fn read_skeletons(path: &Path) -> Result<Vec<SkeletonFeature>> {
    Ok(read_jsonl::<SkeletonRecord>(path)?
        .into_iter()
        .map(|(_, r)| r.x)
        .collect())
}

/// One frame of a skeleton sequence: landmark positions by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFrame {
    pub t: f64,
    pub joints: BTreeMap<String, [f64; 3]>,
}

impl SkeletonFrame {
    pub fn from_points(t: f64, points: &[Vector3<f64>; 8]) -> Self {
        SkeletonFrame {
            t,
            joints: Landmark::ALL
                .iter()
                .map(|lm| (lm.name().to_string(), points[lm.index()].into()))
                .collect(),
        }
    }

    pub fn points(&self) -> std::result::Result<[Vector3<f64>; 8], Landmark> {
        let mut out = [Vector3::zeros(); 8];
        for lm in Landmark::ALL {
            out[lm.index()] = Vector3::from(*self.joints.get(lm.name()).ok_or(lm)?);
        }
        Ok(out)
    }
}

/// A skeleton sequence reduced to features.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub times: Vec<f64>,
    pub features: Vec<SkeletonFeature>,
}

/// Reads a skeleton-sequence file. A missing landmark is a schema error
/// naming the 0-based frame index.
pub fn read_skeleton_sequence(path: &Path) -> Result<SkeletonSequence> {
    let frames: Vec<(usize, SkeletonFrame)> = read_jsonl(path)?;
    let mut seq = SkeletonSequence {
        times: Vec::with_capacity(frames.len()),
        features: Vec::with_capacity(frames.len()),
    };
    for (index, (line, frame)) in frames.into_iter().enumerate() {
        let points = frame.points().map_err(|lm| Error::Record {
            context: path.display().to_string(),
            line,
            message: format!("frame {index}: missing landmark {lm}"),
        })?;
        let x = feature_from_landmarks(&points).map_err(|e| Error::Record {
            context: path.display().to_string(),
            line,
            message: format!("frame {index}: {e}"),
        })?;
        seq.times.push(frame.t);
        seq.features.push(x);
    }
    Ok(seq)
}

/// One retargeted frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub q: JointConfig,
    #[serde(default)]
    pub latent_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine_distance: Option<f64>,
}

/// Reference configuration for one frame, as written for ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedConfig {
    pub t: f64,
    pub q: JointConfig,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}
