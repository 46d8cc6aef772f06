use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::geometry::segment_distance;
use super::model::{JointConfig, Landmark, LinkKind, RobotModel};
use crate::error::{Error, Result};

/// World-frame rotation and translation of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Frame {
    pub fn identity() -> Self {
        Frame {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Per-link frames, indexed like the model's links.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub frames: Vec<Frame>,
}

impl Pose {
    pub fn link(&self, index: usize) -> &Frame {
        &self.frames[index]
    }
}

/// Bones of the skeleton feature, in block order.
pub const BONES: [(Landmark, Landmark); 7] = [
    (Landmark::Hip, Landmark::Neck),
    (Landmark::Neck, Landmark::LeftShoulder),
    (Landmark::Neck, Landmark::RightShoulder),
    (Landmark::LeftShoulder, Landmark::LeftElbow),
    (Landmark::RightShoulder, Landmark::RightElbow),
    (Landmark::LeftElbow, Landmark::LeftHand),
    (Landmark::RightElbow, Landmark::RightHand),
];

pub const BONE_NAMES: [&str; 7] = [
    "hip_neck",
    "neck_lshoulder",
    "neck_rshoulder",
    "lshoulder_lelbow",
    "rshoulder_relbow",
    "lelbow_lhand",
    "relbow_rhand",
];

pub const FEATURE_DIM: usize = 21;

/// Seven unit bone directions, flattened to 21 reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkeletonFeature(pub [f64; FEATURE_DIM]);

impl SkeletonFeature {
    pub fn block(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2])
    }

    pub fn set_block(&mut self, i: usize, v: &Vector3<f64>) {
        self.0[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_DIM] =
            values.try_into().map_err(|_| Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: values.len(),
            })?;
        Ok(SkeletonFeature(arr))
    }

    /// Largest deviation of any block norm from one.
    pub fn max_norm_error(&self) -> f64 {
        (0..7)
            .map(|i| (self.block(i).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Renormalizes every block; returns the number of blocks that were not
    /// unit length within `tol`. Fails on zero blocks.
    pub fn normalize_blocks(&mut self, tol: f64) -> Result<usize> {
        let mut fixed = 0;
        for i in 0..7 {
            let b = self.block(i);
            let n = b.norm();
            if !(n > 1e-9) || !n.is_finite() {
                return Err(Error::DegenerateBone { bone: BONE_NAMES[i] });
            }
            if (n - 1.0).abs() > tol {
                fixed += 1;
            }
            self.set_block(i, &(b / n));
        }
        Ok(fixed)
    }

    /// Rotates every block.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        let mut out = *self;
        for i in 0..7 {
            out.set_block(i, &(r * self.block(i)));
        }
        out
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &JointConfig) -> Result<Pose> {
    forward_kinematics_from(model, q, &Frame::identity())
}

/// Forward kinematics with an explicit root frame. Frames compose as
/// `child = parent ∘ Rot(axis, angle) ∘ Trans(origin)`.
pub fn forward_kinematics_from(model: &RobotModel, q: &JointConfig, root: &Frame) -> Result<Pose> {
    model.check_len(q)?;
    let mut frames = Vec::with_capacity(model.links.len());
    for link in &model.links {
        let frame = match (link.parent, link.kind) {
            (None, _) | (_, LinkKind::Root) => *root,
            (Some(p), LinkKind::Joint(j)) => {
                let parent: &Frame = &frames[p];
                let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(link.axis), q.0[j]);
                let rotation = parent.rotation * rot.matrix();
                Frame {
                    rotation,
                    translation: parent.translation + rotation * link.origin,
                }
            }
            (Some(p), LinkKind::Fixed) => {
                let parent: &Frame = &frames[p];
                Frame {
                    rotation: parent.rotation,
                    translation: parent.translation + parent.rotation * link.origin,
                }
            }
        };
        frames.push(frame);
    }
    Ok(Pose { frames })
}

pub fn landmark_positions(model: &RobotModel, pose: &Pose) -> [Vector3<f64>; 8] {
    Landmark::ALL.map(|lm| pose.frames[model.landmark_link(lm)].translation)
}

pub fn extract_skeleton_feature(model: &RobotModel, pose: &Pose) -> Result<SkeletonFeature> {
    feature_from_landmarks(&landmark_positions(model, pose))
}

/// Builds the skeleton feature from landmark positions ordered as
/// [`Landmark::ALL`]. Works for robot and human skeletons alike.
pub fn feature_from_landmarks(points: &[Vector3<f64>; 8]) -> Result<SkeletonFeature> {
    let mut out = SkeletonFeature([0.0; FEATURE_DIM]);
    for (i, (a, b)) in BONES.iter().enumerate() {
        let d = points[b.index()] - points[a.index()];
        let n = d.norm();
        if !(n >= 1e-9) {
            return Err(Error::DegenerateBone { bone: BONE_NAMES[i] });
        }
        out.set_block(i, &(d / n));
    }
    Ok(out)
}

/// Skeleton feature of configuration `q`.
pub fn skeleton_of(model: &RobotModel, q: &JointConfig) -> Result<SkeletonFeature> {
    extract_skeleton_feature(model, &forward_kinematics(model, q)?)
}

pub fn within_joint_limits(model: &RobotModel, q: &JointConfig) -> Result<bool> {
    model.check_len(q)?;
    Ok(model
        .joints()
        .iter()
        .zip(q.as_slice())
        .all(|(j, &v)| j.lower <= v && v <= j.upper))
}

pub fn self_collision_free(model: &RobotModel, q: &JointConfig) -> Result<bool> {
    Ok(model.first_collision(q)?.is_none())
}

/// Both feasibility predicates.
pub fn is_feasible(model: &RobotModel, q: &JointConfig) -> Result<bool> {
    Ok(within_joint_limits(model, q)? && self_collision_free(model, q)?)
}

impl RobotModel {
    /// World-space capsule axes at configuration `q`.
    pub fn capsule_segments(&self, q: &JointConfig) -> Result<Vec<(Vector3<f64>, Vector3<f64>, f64)>> {
        let pose = forward_kinematics(self, q)?;
        Ok(self.capsule_segments_at(&pose))
    }

    fn capsule_segments_at(&self, pose: &Pose) -> Vec<(Vector3<f64>, Vector3<f64>, f64)> {
        self.capsules
            .iter()
            .map(|c| {
                let f = &pose.frames[c.link];
                (f.transform_point(&c.a), f.transform_point(&c.b), c.radius)
            })
            .collect()
    }

    /// The first colliding pair from `collision_pairs`, if any.
    pub fn first_collision(&self, q: &JointConfig) -> Result<Option<[usize; 2]>> {
        let pose = forward_kinematics(self, q)?;
        let segs = self.capsule_segments_at(&pose);
        for &[i, j] in self.collision_pairs() {
            let (a1, b1, r1) = &segs[i];
            let (a2, b2, r2) = &segs[j];
            // NaN distances (non-finite angles) count as collisions.
            if !(segment_distance(a1, b1, a2, b2) > r1 + r2) {
                return Ok(Some([i, j]));
            }
        }
        Ok(None)
    }

    /// Smallest `distance - (r1 + r2)` over the tested pairs.
    pub fn collision_margin(&self, q: &JointConfig) -> Result<f64> {
        let segs = self.capsule_segments(q)?;
        Ok(self
            .collision_pairs()
            .iter()
            .map(|&[i, j]| {
                let (a1, b1, r1) = &segs[i];
                let (a2, b2, r2) = &segs[j];
                segment_distance(a1, b1, a2, b2) - (r1 + r2)
            })
            .fold(f64::INFINITY, f64::min))
    }
}
