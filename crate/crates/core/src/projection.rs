//! Projection of arbitrary joint configurations onto the feasible set.
//!
//! Limits are enforced by clamping. Self-collisions are resolved by moving
//! back along the straight joint-space segment towards the neutral pose,
//! which is feasible by model invariant, and keeping the largest feasible
//! fraction of the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{skeleton_of, JointConfig, RobotModel, SkeletonFeature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Width of the final bracket on the segment parameter.
    pub bisection_tolerance: f64,
    pub max_bisection_iters: usize,
    /// Number of uniform steps used to locate the last feasible stretch of
    /// the segment before bisecting.
    pub scan_steps: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            bisection_tolerance: 1e-4,
            max_bisection_iters: 60,
            scan_steps: 256,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bisection_tolerance > 0.0) || self.max_bisection_iters == 0 || self.scan_steps == 0
        {
            return Err(Error::InvalidArgument(format!(
                "projection config needs tolerance > 0, iters >= 1, scan steps >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Componentwise clamp to `[lower, upper]`. NaN angles map to the lower limit.
pub fn clamp_to_limits(model: &RobotModel, q: &JointConfig) -> Result<JointConfig> {
    if q.len() != model.dof() {
        return Err(Error::DimensionMismatch {
            expected: model.dof(),
            got: q.len(),
        });
    }
    Ok(JointConfig(
        model
            .joints()
            .iter()
            .zip(q.as_slice())
            .map(|(j, &v)| v.max(j.lower).min(j.upper))
            .collect(),
    ))
}

/// Point at parameter `t` on the segment from `neutral` to `target`,
/// clamped so rounding can never leave the limits.
fn along(model: &RobotModel, neutral: &[f64], target: &[f64], t: f64) -> JointConfig {
    JointConfig(
        model
            .joints()
            .iter()
            .zip(neutral.iter().zip(target))
            .map(|(j, (&n, &c))| (n + t * (c - n)).max(j.lower).min(j.upper))
            .collect(),
    )
}

/// Result of [`project_feasible_with_t`]: the feasible configuration and
/// the segment parameter it was taken from (`1` when no collision had to be
/// resolved).
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub config: JointConfig,
    pub t: f64,
}

/// Maps any configuration to one that satisfies the joint limits and is
/// self-collision free.
pub fn project_feasible(
    model: &RobotModel,
    q: &JointConfig,
    cfg: &ProjectionConfig,
) -> Result<JointConfig> {
    Ok(project_feasible_with_t(model, q, cfg)?.config)
}

pub fn project_feasible_with_t(
    model: &RobotModel,
    q: &JointConfig,
    cfg: &ProjectionConfig,
) -> Result<Projected> {
    cfg.validate()?;
    let clamped = clamp_to_limits(model, q)?;
    if model.first_collision(&clamped)?.is_none() {
        return Ok(Projected {
            config: clamped,
            t: 1.0,
        });
    }

    let neutral = model.neutral_pose().as_slice();
    let target = clamped.as_slice();
    let free = |t: f64| -> Result<Option<JointConfig>> {
        let c = along(model, neutral, target, t);
        Ok(model.first_collision(&c)?.is_none().then_some(c))
    };

    // Walk down from t = 1 to the first feasible grid point. t = 0 is the
    // neutral pose, which is always feasible.
    let n = cfg.scan_steps;
    let mut lo = 0.0;
    let mut best = model.neutral_pose().clone();
    let mut hi = 1.0;
    for k in (0..n).rev() {
        let t = k as f64 / n as f64;
        if k == 0 {
            break;
        }
        if let Some(c) = free(t)? {
            lo = t;
            best = c;
            break;
        }
        hi = t;
    }

    // Invariant: `lo` is feasible (and `best` is its configuration), `hi`
    // collides.
    for _ in 0..cfg.max_bisection_iters {
        if hi - lo <= cfg.bisection_tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match free(mid)? {
            Some(c) => {
                lo = mid;
                best = c;
            }
            None => hi = mid,
        }
    }
    Ok(Projected { config: best, t: lo })
}

/// Relaxed skeleton, feasible skeleton and feasible configuration for a
/// relaxed configuration. The skeleton map is induced by forward kinematics,
/// no inverse kinematics involved.
pub fn project_skeleton(
    model: &RobotModel,
    q: &JointConfig,
    cfg: &ProjectionConfig,
) -> Result<(SkeletonFeature, SkeletonFeature, JointConfig)> {
    let x_relaxed = skeleton_of(model, q)?;
    let q_feasible = project_feasible(model, q, cfg)?;
    let x_feasible = skeleton_of(model, &q_feasible)?;
    Ok((x_relaxed, x_feasible, q_feasible))
}
