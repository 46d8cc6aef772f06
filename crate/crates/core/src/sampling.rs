//! Training data generation.
//!
//! Paired tuples come from the kinematic model alone: a configuration is
//! drawn from the α-relaxed joint ranges, projected onto the feasible set,
//! and both configurations are pushed through forward kinematics. Tuples
//! produced by an external retargeter can be ingested from JSON-lines.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;
use crate::projection::{project_skeleton, ProjectionConfig};
use crate::rng::{self, Rng};
use crate::robot::{is_feasible, skeleton_of, JointConfig, RobotModel, SkeletonFeature};

/// Tuples per independently seeded RNG stream in bulk generation.
pub const STREAM_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub paired_tuples: usize,
    pub robot_specific: usize,
    pub skeleton_specific: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub alpha: f64,
    pub seed: u64,
    pub counts: Counts,
    pub projection: ProjectionConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            alpha: 0.5,
            seed: 0,
            counts: Counts {
                paired_tuples: 100_000,
                robot_specific: 30_000,
                skeleton_specific: 100_000,
            },
            projection: ProjectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    KinematicSampled,
    MocapIngested,
    Mixup,
}

/// (relaxed skeleton, feasible skeleton, relaxed config, feasible config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTuple {
    pub x_relaxed: SkeletonFeature,
    pub x_feasible: SkeletonFeature,
    pub q_relaxed: JointConfig,
    pub q_feasible: JointConfig,
    pub source: Source,
}

impl PairedTuple {
    /// Checks the tuple against `model`; returns the reason on failure.
    pub fn check(&self, model: &RobotModel) -> std::result::Result<(), String> {
        if self.q_relaxed.len() != model.dof() || self.q_feasible.len() != model.dof() {
            return Err(format!(
                "configuration length {} / {} does not match {} joints",
                self.q_relaxed.len(),
                self.q_feasible.len(),
                model.dof()
            ));
        }
        for (name, x) in [("x_relaxed", &self.x_relaxed), ("x_feasible", &self.x_feasible)] {
            let err = x.max_norm_error();
            if !(err <= 1e-6) {
                return Err(format!("{name} has a non-unit block (error {err:e})"));
            }
        }
        if !is_feasible(model, &self.q_feasible).map_err(|e| e.to_string())? {
            return Err("q_feasible violates joint limits or self-collides".into());
        }
        let x = skeleton_of(model, &self.q_feasible).map_err(|e| e.to_string())?;
        let dev = x
            .as_slice()
            .iter()
            .zip(self.x_feasible.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(dev <= 1e-9) {
            return Err(format!(
                "x_feasible differs from features(FK(q_feasible)) by {dev:e}"
            ));
        }
        Ok(())
    }
}

/// All training data roles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub tuples: Vec<PairedTuple>,
    pub robot_only: Vec<JointConfig>,
    pub skeleton_only: Vec<SkeletonFeature>,
}

impl Dataset {
    /// Every feasible configuration in the dataset passes both predicates.
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        for (i, t) in self.tuples.iter().enumerate() {
            t.check(model).map_err(|message| Error::Record {
                context: "paired tuples".into(),
                line: i + 1,
                message,
            })?;
        }
        for (i, q) in self.robot_only.iter().enumerate() {
            if !is_feasible(model, q)? {
                return Err(Error::Record {
                    context: "robot-only configurations".into(),
                    line: i + 1,
                    message: "infeasible configuration".into(),
                });
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: Dataset) {
        self.tuples.extend(other.tuples);
        self.robot_only.extend(other.robot_only);
        self.skeleton_only.extend(other.skeleton_only);
    }
}

/// `[l - α/2 (u - l), u + α/2 (u - l)]` per joint.
pub fn relaxed_limits(model: &RobotModel, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "relaxation constant must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(model
        .joints()
        .iter()
        .map(|j| {
            let pad = 0.5 * alpha * (j.upper - j.lower);
            (j.lower - pad, j.upper + pad)
        })
        .collect())
}

fn sample_box(limits: &[(f64, f64)], rng: &mut Rng) -> JointConfig {
    JointConfig(
        limits
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect(),
    )
}

/// Uniform draw from the α-relaxed joint box.
pub fn sample_relaxed_config(model: &RobotModel, alpha: f64, rng: &mut Rng) -> Result<JointConfig> {
    Ok(sample_box(&relaxed_limits(model, alpha)?, rng))
}

/// `q̃ ~ U(relaxed box)`, `x̃ = FK(q̃)`, `q̄ = Proj(q̃)`, `x̄ = FK(q̄)`.
pub fn generate_tuple(
    model: &RobotModel,
    alpha: f64,
    cfg: &ProjectionConfig,
    rng: &mut Rng,
) -> Result<PairedTuple> {
    let q_relaxed = sample_relaxed_config(model, alpha, rng)?;
    tuple_from_relaxed(model, q_relaxed, cfg, Source::KinematicSampled)
}

pub fn tuple_from_relaxed(
    model: &RobotModel,
    q_relaxed: JointConfig,
    cfg: &ProjectionConfig,
    source: Source,
) -> Result<PairedTuple> {
    let (x_relaxed, x_feasible, q_feasible) = project_skeleton(model, &q_relaxed, cfg)?;
    Ok(PairedTuple {
        x_relaxed,
        x_feasible,
        q_relaxed,
        q_feasible,
        source,
    })
}

/// Runs `f` over `n` items split into blocks of [`STREAM_BLOCK`], block `b`
/// drawing from RNG stream `stream_base + b`. The output does not depend on
/// how blocks are scheduled.
fn blocked<T, F>(seed: u64, stream_base: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Rng) -> Result<T> + Sync,
{
    let blocks = n.div_ceil(STREAM_BLOCK);
    let chunks: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, stream_base + b as u64);
            let len = STREAM_BLOCK.min(n - b * STREAM_BLOCK);
            (0..len).map(|_| f(&mut rng)).collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

const TUPLE_STREAMS: u64 = 0;
const ROBOT_STREAMS: u64 = 1 << 32;
const SKELETON_STREAMS: u64 = 2 << 32;

pub fn generate_tuples(
    model: &RobotModel,
    alpha: f64,
    cfg: &ProjectionConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<PairedTuple>> {
    relaxed_limits(model, alpha)?;
    cfg.validate()?;
    blocked(seed, TUPLE_STREAMS, n, |rng| generate_tuple(model, alpha, cfg, rng))
}

/// Per-block renormalized `β·x̃ + (1-β)·x̄`. `None` if some block cancels out.
pub fn mixup_with_beta(
    x_relaxed: &SkeletonFeature,
    x_feasible: &SkeletonFeature,
    beta: f64,
) -> Option<SkeletonFeature> {
    let mut out = *x_relaxed;
    for i in 0..7 {
        let v: Vector3<f64> = x_relaxed.block(i) * beta + x_feasible.block(i) * (1.0 - beta);
        let n = v.norm();
        if !(n > 1e-9) {
            return None;
        }
        out.set_block(i, &(v / n));
    }
    Some(out)
}

/// Auxiliary relaxed skeleton tied to `t.q_feasible`, with `β ~ U[0, 1]`.
pub fn mixup_augment(t: &PairedTuple, rng: &mut Rng) -> SkeletonFeature {
    loop {
        let beta: f64 = rng.random();
        if let Some(x) = mixup_with_beta(&t.x_relaxed, &t.x_feasible, beta) {
            return x;
        }
    }
}

/// `n` feasible configurations: uniform within the exact limits, rejecting
/// self-collisions.
pub fn sample_robot_specific(model: &RobotModel, rng: &mut Rng, n: usize) -> Result<Vec<JointConfig>> {
    let limits = model.limits();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = sample_box(&limits, rng);
        if model.first_collision(&q)?.is_none() {
            out.push(q);
        }
    }
    Ok(out)
}

pub fn generate_robot_specific(model: &RobotModel, seed: u64, n: usize) -> Result<Vec<JointConfig>> {
    let limits = model.limits();
    blocked(seed, ROBOT_STREAMS, n, |rng| loop {
        let q = sample_box(&limits, rng);
        if model.first_collision(&q)?.is_none() {
            return Ok(q);
        }
    })
}

/// Unpaired skeletons: features of relaxed configurations, which reach
/// beyond what the robot can express.
pub fn generate_skeleton_specific(
    model: &RobotModel,
    alpha: f64,
    seed: u64,
    n: usize,
) -> Result<Vec<SkeletonFeature>> {
    let limits = relaxed_limits(model, alpha)?;
    blocked(seed, SKELETON_STREAMS, n, |rng| {
        skeleton_of(model, &sample_box(&limits, rng))
    })
}

/// Everything `gen-data` produces.
pub fn generate_dataset(model: &RobotModel, cfg: &SamplingConfig) -> Result<Dataset> {
    Ok(Dataset {
        tuples: generate_tuples(
            model,
            cfg.alpha,
            &cfg.projection,
            cfg.seed,
            cfg.counts.paired_tuples,
        )?,
        robot_only: generate_robot_specific(model, cfg.seed, cfg.counts.robot_specific)?,
        skeleton_only: generate_skeleton_specific(
            model,
            cfg.alpha,
            cfg.seed,
            cfg.counts.skeleton_specific,
        )?,
    })
}

/// A tuple rejected during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rejected: Vec<Rejection>,
    pub warnings: Vec<String>,
}

/// Loads externally retargeted tuples. Malformed lines are errors; tuples
/// that parse but violate an invariant are rejected and reported.
pub fn ingest_mocap_pairs(path: impl AsRef<Path>, model: &RobotModel) -> Result<IngestReport> {
    let path = path.as_ref();
    let records = formats::read_tuples(path)?;
    let mut report = IngestReport::default();
    if records.is_empty() {
        let msg = format!("{} contains no tuples", path.display());
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    for (line, mut t) in records {
        match t.check(model) {
            Ok(()) => {
                t.source = Source::MocapIngested;
                report.dataset.tuples.push(t);
            }
            Err(reason) => {
                log::warn!("{}:{line}: rejected tuple: {reason}", path.display());
                report.rejected.push(Rejection { line, reason });
            }
        }
    }
    Ok(report)
}

/// A smooth joint-space trajectory through the relaxed box.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub name: String,
    pub times: Vec<f64>,
    pub relaxed: Vec<JointConfig>,
}

/// Sum-of-sinusoids trajectories standing in for captured human motion.
/// Each joint oscillates around a random centre with a few low-frequency
/// components; angles are folded back into the relaxed box.
pub fn synthesize_motion(
    model: &RobotModel,
    alpha: f64,
    name: &str,
    frames: usize,
    fps: f64,
    rng: &mut Rng,
) -> Result<Motion> {
    const COMPONENTS: usize = 3;
    let limits = relaxed_limits(model, alpha)?;
    let params: Vec<(f64, f64, [(f64, f64, f64); COMPONENTS])> = limits
        .iter()
        .map(|&(lo, hi)| {
            let width = hi - lo;
            let centre = lo + width * (0.25 + 0.5 * rng.random::<f64>());
            let comps = std::array::from_fn(|k| {
                let amp = width * 0.25 * rng.random::<f64>() / (k + 1) as f64;
                let freq = 0.05 + 0.25 * rng.random::<f64>() * (k + 1) as f64;
                let phase = 2.0 * PI * rng.random::<f64>();
                (amp, freq, phase)
            });
            (centre, width, comps)
        })
        .collect();

    let times: Vec<f64> = (0..frames).map(|i| i as f64 / fps).collect();
    let relaxed = times
        .iter()
        .map(|&t| {
            JointConfig(
                params
                    .iter()
                    .zip(&limits)
                    .map(|((centre, _, comps), &(lo, hi))| {
                        let v = centre
                            + comps
                                .iter()
                                .map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin())
                                .sum::<f64>();
                        v.clamp(lo, hi)
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(Motion {
        name: name.to_string(),
        times,
        relaxed,
    })
}

/// Projects every frame of a motion into a paired tuple.
pub fn motion_tuples(
    model: &RobotModel,
    motion: &Motion,
    cfg: &ProjectionConfig,
    source: Source,
) -> Result<Vec<PairedTuple>> {
    motion
        .relaxed
        .iter()
        .map(|q| tuple_from_relaxed(model, q.clone(), cfg, source))
        .collect()
}

/// Streams reserved for scripted motions, one per motion index.
const MOTION_STREAMS: u64 = 3 << 32;

/// Which motions to script and how long they run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSetSpec {
    pub prefix: String,
    pub first: usize,
    pub count: usize,
    pub frames: usize,
    pub fps: f64,
}

/// Motions named `{prefix}_{index:02}` for indices `first..first + count`.
/// Motion `i` draws from its own stream, so disjoint index ranges never
/// share randomness.
pub fn motion_set(model: &RobotModel, alpha: f64, seed: u64, spec: &MotionSetSpec) -> Result<Vec<Motion>> {
    if !(spec.fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be > 0, got {}", spec.fps)));
    }
    (spec.first..spec.first + spec.count)
        .map(|i| {
            let mut rng = rng::stream(seed, MOTION_STREAMS + i as u64);
            let name = format!("{}_{i:02}", spec.prefix);
            synthesize_motion(model, alpha, &name, spec.frames, spec.fps, &mut rng)
        })
        .collect()
}

/// Landmark positions of every relaxed frame, as a skeleton sequence.
pub fn motion_skeleton_frames(model: &RobotModel, motion: &Motion) -> Result<Vec<formats::SkeletonFrame>> {
    motion
        .times
        .iter()
        .zip(&motion.relaxed)
        .map(|(&t, q)| {
            let pose = crate::robot::forward_kinematics(model, q)?;
            Ok(formats::SkeletonFrame::from_points(
                t,
                &crate::robot::landmark_positions(model, &pose),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::is_feasible;

    fn model() -> RobotModel {
        RobotModel::bundled_humanoid()
    }

    #[test]
    fn relaxed_limits_formula() {
        let m = model();
        let r = relaxed_limits(&m, 0.5).unwrap();
        for (j, (lo, hi)) in m.joints().iter().zip(&r) {
            let w = j.upper - j.lower;
            assert!((lo - (j.lower - 0.25 * w)).abs() < 1e-15);
            assert!(((hi - lo) - 1.5 * w).abs() < 1e-12);
        }
        assert_eq!(relaxed_limits(&m, 0.0).unwrap(), m.limits());
        assert!(relaxed_limits(&m, -0.1).is_err());
    }

    #[test]
    fn unit_interval_relaxes_to_one_and_a_half() {
        let file: crate::robot::RobotModelFile =
            serde_json::from_str(include_str!("../data/humanoid_upper.json")).unwrap();
        let mut file = file;
        file.joints[0].lower = -1.0;
        file.joints[0].upper = 1.0;
        let m = RobotModel::from_file(file).unwrap();
        assert_eq!(relaxed_limits(&m, 0.5).unwrap()[0], (-1.5, 1.5));
    }

    #[test]
    fn zero_alpha_samples_stay_inside() {
        let m = model();
        let mut rng = rng::stream(1, 0);
        for _ in 0..1000 {
            let q = sample_relaxed_config(&m, 0.0, &mut rng).unwrap();
            assert!(crate::robot::within_joint_limits(&m, &q).unwrap());
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let m = model();
        let a = generate_tuples(&m, 0.5, &ProjectionConfig::default(), 9, 50).unwrap();
        let b = generate_tuples(&m, 0.5, &ProjectionConfig::default(), 9, 50).unwrap();
        assert_eq!(a, b);
        let c = generate_tuples(&m, 0.5, &ProjectionConfig::default(), 10, 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_tuples_are_valid() {
        let m = model();
        let tuples = generate_tuples(&m, 0.5, &ProjectionConfig::default(), 3, 300).unwrap();
        for t in &tuples {
            t.check(&m).unwrap();
        }
    }

    #[test]
    fn zero_alpha_collision_free_tuple_is_fixed_point() {
        let m = model();
        let mut rng = rng::stream(4, 0);
        let mut seen = 0;
        for _ in 0..200 {
            let t = generate_tuple(&m, 0.0, &ProjectionConfig::default(), &mut rng).unwrap();
            if is_feasible(&m, &t.q_relaxed).unwrap() {
                assert_eq!(t.x_relaxed, t.x_feasible);
                assert_eq!(t.q_relaxed, t.q_feasible);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let m = model();
        let t = generate_tuples(&m, 0.5, &ProjectionConfig::default(), 5, 1)
            .unwrap()
            .remove(0);
        let one = mixup_with_beta(&t.x_relaxed, &t.x_feasible, 1.0).unwrap();
        let zero = mixup_with_beta(&t.x_relaxed, &t.x_feasible, 0.0).unwrap();
        for i in 0..21 {
            assert!((one.0[i] - t.x_relaxed.0[i]).abs() < 1e-15);
            assert!((zero.0[i] - t.x_feasible.0[i]).abs() < 1e-15);
        }

        let mut a = SkeletonFeature([0.0; 21]);
        let mut b = SkeletonFeature([0.0; 21]);
        for i in 0..7 {
            a.set_block(i, &Vector3::x());
            b.set_block(i, &Vector3::y());
        }
        let mid = mixup_with_beta(&a, &b, 0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((mid.block(3) - Vector3::new(h, h, 0.0)).norm() < 1e-15);

        // antipodal bones cancel at β = 0.5
        let c = a.rotated(&(-nalgebra::Matrix3::identity()));
        assert!(mixup_with_beta(&a, &c, 0.5).is_none());
    }

    #[test]
    fn mixup_resamples_degenerate_beta() {
        let mut a = SkeletonFeature([0.0; 21]);
        for i in 0..7 {
            a.set_block(i, &Vector3::x());
        }
        let t = PairedTuple {
            x_relaxed: a,
            x_feasible: a.rotated(&(-nalgebra::Matrix3::identity())),
            q_relaxed: JointConfig::zeros(1),
            q_feasible: JointConfig::zeros(1),
            source: Source::KinematicSampled,
        };
        let mut rng = rng::stream(0, 0);
        for _ in 0..100 {
            assert!(mixup_augment(&t, &mut rng).max_norm_error() < 1e-12);
        }
    }

    #[test]
    fn robot_specific_is_feasible() {
        let m = model();
        let mut rng = rng::stream(2, 0);
        assert!(sample_robot_specific(&m, &mut rng, 0).unwrap().is_empty());
        for q in sample_robot_specific(&m, &mut rng, 200).unwrap() {
            assert!(is_feasible(&m, &q).unwrap());
        }
    }

    #[test]
    fn motions_are_smooth_and_inside_relaxed_box() {
        let m = model();
        let mut rng = rng::stream(3, 0);
        let motion = synthesize_motion(&m, 0.5, "m0", 120, 30.0, &mut rng).unwrap();
        let limits = relaxed_limits(&m, 0.5).unwrap();
        for w in motion.relaxed.windows(2) {
            for ((a, b), (lo, hi)) in w[0].0.iter().zip(&w[1].0).zip(&limits) {
                assert!(*a >= *lo && *a <= *hi);
                assert!((a - b).abs() < 0.3, "jump {a} -> {b}");
            }
        }
    }
}
