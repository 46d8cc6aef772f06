//! Kinematic model of an upper-body humanoid: forward kinematics, skeleton
//! features and feasibility checks.

mod geometry;
mod kinematics;
mod model;

pub use geometry::{closest_points, segment_distance};
pub use kinematics::{
    extract_skeleton_feature, feature_from_landmarks, forward_kinematics,
    forward_kinematics_from, is_feasible, landmark_positions, self_collision_free, skeleton_of,
    within_joint_limits, Frame, Pose, SkeletonFeature, BONES, BONE_NAMES, FEATURE_DIM,
};
pub use model::{
    CapsuleSpec, FixedFrame, JointConfig, JointSpec, Landmark, RobotModel, RobotModelFile,
};
