//! Nearest-neighbour retargeting in the shared latent space.
//!
//! Feasible robot configurations are encoded once into a [`PoseDatabase`];
//! a skeleton query is encoded and answered with the stored configuration
//! whose latent is closest. Outputs are therefore feasible whatever the
//! networks learned.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::NetworkSet;
use crate::robot::{
    is_feasible, self_collision_free, skeleton_of, within_joint_limits, JointConfig, RobotModel,
    SkeletonFeature, BONE_NAMES,
};

/// Latent distance used for the lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is treated as orthogonal to everything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
                if na > 0.0 && nb > 0.0 {
                    1.0 - a.dot(&b) / (na * nb)
                } else {
                    1.0
                }
            }
        }
    }

    fn tag(self) -> u8 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Metric::Euclidean),
            1 => Some(Metric::Cosine),
            _ => None,
        }
    }
}

/// Index and distance of the closest row of `latents` to `z`. Ties go to the
/// lowest index; rows at NaN distance never win. `None` only for an empty
/// table.
pub fn nearest(latents: ArrayView2<f64>, z: ArrayView1<f64>, metric: Metric) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in latents.outer_iter().enumerate() {
        let d = metric.distance(row, z);
        let better = match best {
            None => true,
            Some((_, b)) => d < b || (b.is_nan() && !d.is_nan()),
        };
        if better {
            best = Some((i, d));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDatabase {
    configs: Vec<JointConfig>,
    latents: Array2<f64>,
    pub metric: Metric,
    pub checkpoint_id: String,
}

/// Inputs dropped while building a database.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub accepted: usize,
    /// Input positions of configurations that were not feasible.
    pub rejected: Vec<usize>,
}

const DB_MAGIC: &[u8; 8] = b"RTPOSEDB";
const DB_VERSION: u32 = 1;

impl PoseDatabase {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn config(&self, i: usize) -> &JointConfig {
        &self.configs[i]
    }

    pub fn latent(&self, i: usize) -> ArrayView1<'_, f64> {
        self.latents.row(i)
    }

    pub fn latents(&self) -> ArrayView2<'_, f64> {
        self.latents.view()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&JointConfig, ArrayView1<'_, f64>)> {
        self.configs.iter().zip(self.latents.outer_iter())
    }

    /// Closest entry to latent `z`.
    pub fn lookup(&self, z: ArrayView1<f64>) -> (usize, f64) {
        nearest(self.latents.view(), z, self.metric).expect("database is never empty")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dof = self.configs.first().map_or(0, |q| q.len());
        let mut out = Vec::new();
        out.extend_from_slice(DB_MAGIC);
        out.extend_from_slice(&DB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.checkpoint_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.checkpoint_id.as_bytes());
        out.push(self.metric.tag());
        out.extend_from_slice(&(dof as u32).to_le_bytes());
        out.extend_from_slice(&(self.latents.ncols() as u32).to_le_bytes());
        out.extend_from_slice(&(self.configs.len() as u64).to_le_bytes());
        for (q, z) in self.entries() {
            for v in q.as_slice().iter().chain(z.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a database and re-checks every entry's feasibility on `model`.
    pub fn from_bytes(bytes: &[u8], model: &RobotModel) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            context: "pose database".into(),
            message: m.to_string(),
        };
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated"))? != DB_MAGIC {
            return Err(bad("not a pose database file"));
        }
        let version = r.u32().ok_or_else(|| bad("truncated"))?;
        if version != DB_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let id_len = r.u32().ok_or_else(|| bad("truncated"))? as usize;
        let id = r.take(id_len).ok_or_else(|| bad("truncated"))?;
        let checkpoint_id =
            String::from_utf8(id.to_vec()).map_err(|_| bad("checkpoint id is not UTF-8"))?;
        let metric = r
            .take(1)
            .and_then(|t| Metric::from_tag(t[0]))
            .ok_or_else(|| bad("unknown metric"))?;
        let dof = r.u32().ok_or_else(|| bad("truncated"))? as usize;
        let d_z = r.u32().ok_or_else(|| bad("truncated"))? as usize;
        let n = r.u64().ok_or_else(|| bad("truncated"))? as usize;
        if n == 0 {
            return Err(Error::Empty("pose database has no entries".into()));
        }
        if dof != model.dof() {
            return Err(Error::DimensionMismatch {
                expected: model.dof(),
                got: dof,
            });
        }
        let expected = n
            .checked_mul(dof + d_z)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| bad("entry count overflows"))?;
        if bytes.len() - r.pos != expected {
            return Err(bad("entry block has the wrong length"));
        }
        let mut configs = Vec::with_capacity(n);
        let mut latents = Array2::zeros((n, d_z));
        for i in 0..n {
            let q = JointConfig((0..dof).map(|_| r.f64().expect("length checked")).collect());
            if !is_feasible(model, &q)? {
                return Err(bad(&format!("entry {i} is not feasible for this model")));
            }
            configs.push(q);
            for k in 0..d_z {
                latents[[i, k]] = r.f64().expect("length checked");
            }
        }
        Ok(PoseDatabase {
            configs,
            latents,
            metric,
            checkpoint_id,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, model: &RobotModel) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, model)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Encodes the feasible members of `configs`; infeasible ones are skipped
/// and listed in the report.
pub fn build_database(
    nets: &NetworkSet,
    model: &RobotModel,
    configs: &[JointConfig],
    metric: Metric,
    checkpoint_id: &str,
) -> Result<(PoseDatabase, BuildReport)> {
    if nets.arch.q_dim != model.dof() {
        return Err(Error::DimensionMismatch {
            expected: model.dof(),
            got: nets.arch.q_dim,
        });
    }
    let mut report = BuildReport::default();
    let mut kept = Vec::with_capacity(configs.len());
    for (i, q) in configs.iter().enumerate() {
        if q.len() == model.dof() && is_feasible(model, q)? {
            kept.push(q.clone());
        } else {
            report.rejected.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty(format!(
            "no feasible configurations among {} inputs",
            configs.len()
        )));
    }
    report.accepted = kept.len();
    let latents = nets.encode_configs(&kept)?;
    Ok((
        PoseDatabase {
            configs: kept,
            latents,
            metric,
            checkpoint_id: checkpoint_id.to_string(),
        },
        report,
    ))
}

/// Changes made to a query before encoding it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRepair {
    /// Blocks whose norm was off by more than [`UNIT_TOLERANCE`].
    pub renormalized: usize,
    /// Zero or non-finite blocks, replaced by zero vectors.
    pub degenerate: usize,
}

impl QueryRepair {
    pub fn is_clean(&self) -> bool {
        self.renormalized == 0 && self.degenerate == 0
    }
}

pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Rescales every bone block to unit length. Blocks that cannot be
/// normalized become zero.
pub fn sanitize_query(x: &SkeletonFeature) -> (SkeletonFeature, QueryRepair) {
    let mut out = *x;
    let mut repair = QueryRepair::default();
    for i in 0..7 {
        let b = x.block(i);
        let n = b.norm();
        if !n.is_finite() || n < 1e-9 {
            out.set_block(i, &nalgebra::Vector3::zeros());
            repair.degenerate += 1;
        } else {
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                repair.renormalized += 1;
            }
            out.set_block(i, &(b / n));
        }
    }
    (out, repair)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retargeted {
    pub index: usize,
    pub q: JointConfig,
    pub latent_distance: f64,
    pub repair: QueryRepair,
}

/// Closest stored configuration to the skeleton query.
pub fn retarget_pose(nets: &NetworkSet, db: &PoseDatabase, x: &SkeletonFeature) -> Result<Retargeted> {
    let (clean, repair) = sanitize_query(x);
    let z = nets.encoder(crate::latent::Domain::X).forward_one(clean.as_slice())?;
    let (index, latent_distance) = db.lookup(ArrayView1::from(&z[..]));
    Ok(Retargeted {
        index,
        q: db.config(index).clone(),
        latent_distance,
        repair,
    })
}

/// Mean over the seven bones of `1 - a_i·b_i`.
pub fn cosine_distance_metric(a: &SkeletonFeature, b: &SkeletonFeature) -> f64 {
    per_bone_cosine_distance(a, b).iter().sum::<f64>() / 7.0
}

pub fn per_bone_cosine_distance(a: &SkeletonFeature, b: &SkeletonFeature) -> [f64; 7] {
    std::array::from_fn(|i| 1.0 - a.block(i).dot(&b.block(i)))
}

/// Fraction of configurations outside the joint limits or in self-collision.
/// Configurations of the wrong length count as violations.
pub fn collision_rate(model: &RobotModel, configs: &[JointConfig]) -> f64 {
    if configs.is_empty() {
        return 0.0;
    }
    let bad = configs
        .iter()
        .filter(|q| {
            !matches!(within_joint_limits(model, q), Ok(true))
                || !matches!(self_collision_free(model, q), Ok(true))
        })
        .count();
    bad as f64 / configs.len() as f64
}

/// Post-hoc exponential smoothing in joint space, off unless requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    /// Weight of the current frame, in `(0, 1]`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub index: usize,
    pub q: JointConfig,
    pub latent_distance: f64,
    /// Per-bone `1 - cos` between the query and the output's skeleton.
    pub bone_cosine_distance: [f64; 7],
    pub repair: QueryRepair,
    /// Smoothing was requested but rejected for this frame.
    pub smoothing_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetReport {
    pub frames: Vec<FrameReport>,
    pub mean_cosine_distance: f64,
    pub collision_rate: f64,
}

impl RetargetReport {
    pub fn configs(&self) -> Vec<JointConfig> {
        self.frames.iter().map(|f| f.q.clone()).collect()
    }

    pub fn repaired_frames(&self) -> usize {
        self.frames.iter().filter(|f| !f.repair.is_clean()).count()
    }

    pub fn csv_header() -> String {
        let mut h = String::from("frame");
        for b in BONE_NAMES {
            h.push(',');
            h.push_str(b);
        }
        h.push_str(",mean,latent_distance");
        h
    }

    /// One row per frame, then an aggregate row labelled `mean` whose last
    /// column holds the collision rate.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = self
            .frames
            .iter()
            .map(|f| {
                let mean = f.bone_cosine_distance.iter().sum::<f64>() / 7.0;
                let bones: Vec<String> =
                    f.bone_cosine_distance.iter().map(|d| d.to_string()).collect();
                format!("{},{},{},{}", f.index, bones.join(","), mean, f.latent_distance)
            })
            .collect();
        let n = self.frames.len().max(1) as f64;
        let bone_means: Vec<String> = (0..7)
            .map(|b| {
                (self.frames.iter().map(|f| f.bone_cosine_distance[b]).sum::<f64>() / n)
                    .to_string()
            })
            .collect();
        rows.push(format!(
            "mean,{},{},collision_rate={}",
            bone_means.join(","),
            self.mean_cosine_distance,
            self.collision_rate
        ));
        rows
    }
}

/// Retargets every frame independently (in parallel), then optionally
/// smooths the joint trajectory. A smoothed frame that is not feasible is
/// replaced by the unsmoothed lookup result.
pub fn retarget_sequence(
    nets: &NetworkSet,
    db: &PoseDatabase,
    model: &RobotModel,
    frames: &[SkeletonFeature],
    smoothing: Option<Smoothing>,
) -> Result<RetargetReport> {
    if frames.is_empty() {
        return Err(Error::Empty("skeleton sequence has no frames".into()));
    }
    if let Some(s) = smoothing {
        if !(s.alpha > 0.0 && s.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing weight must be in (0, 1], got {}",
                s.alpha
            )));
        }
    }
    let hits: Vec<Retargeted> = frames
        .par_iter()
        .map(|x| retarget_pose(nets, db, x))
        .collect::<Result<_>>()?;

    let mut outputs: Vec<(JointConfig, bool)> = Vec::with_capacity(hits.len());
    match smoothing {
        None => outputs.extend(hits.iter().map(|h| (h.q.clone(), false))),
        Some(Smoothing { alpha }) => {
            let mut prev: Option<JointConfig> = None;
            for h in &hits {
                let candidate = match &prev {
                    None => h.q.clone(),
                    Some(p) => JointConfig(
                        h.q.0
                            .iter()
                            .zip(&p.0)
                            .map(|(c, p)| alpha * c + (1.0 - alpha) * p)
                            .collect(),
                    ),
                };
                let (q, fallback) = if is_feasible(model, &candidate)? {
                    (candidate, false)
                } else {
                    (h.q.clone(), true)
                };
                prev = Some(q.clone());
                outputs.push((q, fallback));
            }
        }
    }

    let reports: Vec<FrameReport> = outputs
        .into_par_iter()
        .zip(hits.into_par_iter())
        .zip(frames.par_iter())
        .enumerate()
        .map(|(index, (((q, smoothing_fallback), hit), x))| {
            let (query, _) = sanitize_query(x);
            let out = skeleton_of(model, &q)?;
            Ok(FrameReport {
                index,
                bone_cosine_distance: per_bone_cosine_distance(&query, &out),
                q,
                latent_distance: hit.latent_distance,
                repair: hit.repair,
                smoothing_fallback,
            })
        })
        .collect::<Result<_>>()?;

    let mean_cosine_distance = reports
        .iter()
        .map(|f| f.bone_cosine_distance.iter().sum::<f64>() / 7.0)
        .sum::<f64>()
        / reports.len() as f64;
    let configs: Vec<JointConfig> = reports.iter().map(|f| f.q.clone()).collect();
    Ok(RetargetReport {
        collision_rate: collision_rate(model, &configs),
        frames: reports,
        mean_cosine_distance,
    })
}
