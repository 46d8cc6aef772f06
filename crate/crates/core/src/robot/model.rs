use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖axis‖ = 1`.
const AXIS_TOL: f64 = 1e-9;

/// One revolute joint. The joint rotates its parent link frame about `axis`
/// and then offsets by `origin`; the resulting frame is a link named after
/// the joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub origin: [f64; 3],
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
}

/// A link rigidly attached to its parent at a fixed offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedFrame {
    pub name: String,
    pub parent: String,
    pub origin: [f64; 3],
}

/// Capsule collision primitive: segment `a`–`b` in the link frame, swept by
/// `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleSpec {
    pub link: String,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

/// The eight skeleton landmarks shared by robot and human skeletons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landmark {
    Hip,
    Neck,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftHand,
    RightHand,
}

impl Landmark {
    pub const ALL: [Landmark; 8] = [
        Landmark::Hip,
        Landmark::Neck,
        Landmark::LeftShoulder,
        Landmark::RightShoulder,
        Landmark::LeftElbow,
        Landmark::RightElbow,
        Landmark::LeftHand,
        Landmark::RightHand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::Hip => "hip",
            Landmark::Neck => "neck",
            Landmark::LeftShoulder => "left_shoulder",
            Landmark::RightShoulder => "right_shoulder",
            Landmark::LeftElbow => "left_elbow",
            Landmark::RightElbow => "right_elbow",
            Landmark::LeftHand => "left_hand",
            Landmark::RightHand => "right_hand",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// On-disk robot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModelFile {
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub frames: Vec<FixedFrame>,
    pub capsules: Vec<CapsuleSpec>,
    pub collision_pairs: Vec<[usize; 2]>,
    pub landmarks: HashMap<Landmark, String>,
    pub neutral_pose: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum LinkKind {
    Root,
    Joint(usize),
    Fixed,
}

#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub kind: LinkKind,
    pub origin: Vector3<f64>,
    pub axis: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Capsule {
    pub link: usize,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Joint angles in radians, one per degree of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        JointConfig(angles)
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

/// Validated, immutable kinematic model.
#[derive(Debug, Clone)]
pub struct RobotModel {
    joints: Vec<JointSpec>,
    /// Topologically ordered: every link appears after its parent.
    pub(crate) links: Vec<Link>,
    pub(crate) capsules: Vec<Capsule>,
    collision_pairs: Vec<[usize; 2]>,
    landmarks: [usize; 8],
    neutral: JointConfig,
    source: RobotModelFile,
}

impl RobotModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RobotModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse("robot model", e))?;
        Self::from_file(file)
    }

    /// The bundled 14-DoF humanoid upper body.
    pub fn bundled_humanoid() -> Self {
        Self::from_json(include_str!("../../data/humanoid_upper.json"))
            .expect("bundled humanoid model is valid")
    }

    pub fn from_file(file: RobotModelFile) -> Result<Self> {
        for (i, j) in file.joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                return Err(Error::InvalidLimits {
                    index: i,
                    name: j.name.clone(),
                    lower: j.lower,
                    upper: j.upper,
                });
            }
            let axis = Vector3::from(j.axis);
            if (axis.norm() - 1.0).abs() > AXIS_TOL {
                return Err(Error::Model(format!(
                    "joint {i} ({}): axis norm {} is not 1",
                    j.name,
                    axis.norm()
                )));
            }
            if j.origin.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("joint {i} ({}): non-finite origin", j.name)));
            }
        }

        let links = build_tree(&file)?;
        let index: HashMap<&str, usize> = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();

        let mut capsules = Vec::with_capacity(file.capsules.len());
        for (i, c) in file.capsules.iter().enumerate() {
            let link = *index.get(c.link.as_str()).ok_or_else(|| {
                Error::Model(format!("capsule {i} refers to unknown link {:?}", c.link))
            })?;
            if !(c.radius >= 0.0) {
                return Err(Error::Model(format!("capsule {i}: negative radius")));
            }
            capsules.push(Capsule {
                link,
                a: Vector3::from(c.a),
                b: Vector3::from(c.b),
                radius: c.radius,
            });
        }
        for (k, &[i, j]) in file.collision_pairs.iter().enumerate() {
            if i >= capsules.len() || j >= capsules.len() || i == j {
                return Err(Error::Model(format!(
                    "collision pair {k} ({i}, {j}) is not a pair of distinct capsules"
                )));
            }
        }

        let mut landmarks = [0usize; 8];
        for lm in Landmark::ALL {
            let link = file.landmarks.get(&lm).ok_or_else(|| Error::DanglingLandmark {
                landmark: lm.name().to_string(),
                link: String::new(),
            })?;
            landmarks[lm.index()] =
                *index
                    .get(link.as_str())
                    .ok_or_else(|| Error::DanglingLandmark {
                        landmark: lm.name().to_string(),
                        link: link.clone(),
                    })?;
        }

        let model = RobotModel {
            joints: file.joints.clone(),
            links,
            capsules,
            collision_pairs: file.collision_pairs.clone(),
            landmarks,
            neutral: JointConfig(file.neutral_pose.clone()),
            source: file,
        };

        let neutral = &model.neutral;
        if neutral.len() != model.dof() {
            return Err(Error::InfeasibleNeutral(format!(
                "has {} angles, model has {} joints",
                neutral.len(),
                model.dof()
            )));
        }
        for (i, (j, &v)) in model.joints.iter().zip(neutral.as_slice()).enumerate() {
            if !(j.lower <= v && v <= j.upper) {
                return Err(Error::InfeasibleNeutral(format!(
                    "joint {i} ({}) = {v} outside [{}, {}]",
                    j.name, j.lower, j.upper
                )));
            }
        }
        if let Some(pair) = model.first_collision(neutral)? {
            return Err(Error::InfeasibleNeutral(format!(
                "capsules {} and {} collide",
                pair[0], pair[1]
            )));
        }
        Ok(model)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn neutral_pose(&self) -> &JointConfig {
        &self.neutral
    }

    pub fn collision_pairs(&self) -> &[[usize; 2]] {
        &self.collision_pairs
    }

    pub fn capsule_count(&self) -> usize {
        self.capsules.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn link_name(&self, index: usize) -> &str {
        &self.links[index].name
    }

    pub(crate) fn landmark_link(&self, lm: Landmark) -> usize {
        self.landmarks[lm.index()]
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.joints.iter().map(|j| (j.lower, j.upper)).collect()
    }

    /// The description this model was built from.
    pub fn description(&self) -> &RobotModelFile {
        &self.source
    }

    pub(crate) fn check_len(&self, q: &JointConfig) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }
}

fn build_tree(file: &RobotModelFile) -> Result<Vec<Link>> {
    struct Pending<'a> {
        name: &'a str,
        parent: &'a str,
        kind: LinkKind,
        origin: [f64; 3],
        axis: [f64; 3],
    }

    let mut pending: Vec<Pending> = file
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| Pending {
            name: &j.name,
            parent: &j.parent,
            kind: LinkKind::Joint(i),
            origin: j.origin,
            axis: j.axis,
        })
        .chain(file.frames.iter().map(|f| Pending {
            name: &f.name,
            parent: &f.parent,
            kind: LinkKind::Fixed,
            origin: f.origin,
            axis: [0.0, 0.0, 1.0],
        }))
        .collect();

    let mut seen = HashMap::new();
    for p in &pending {
        if seen.insert(p.name, ()).is_some() {
            return Err(Error::Model(format!("duplicate link name {:?}", p.name)));
        }
    }

    let mut roots: Vec<&str> = pending
        .iter()
        .map(|p| p.parent)
        .filter(|parent| !seen.contains_key(parent))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    let root = match roots.as_slice() {
        [r] => *r,
        [] => {
            return Err(Error::Model(
                "kinematic tree has no root (every parent is a child): cycle".into(),
            ))
        }
        many => return Err(Error::Model(format!("kinematic tree has multiple roots: {many:?}"))),
    };

    let mut links = vec![Link {
        name: root.to_string(),
        parent: None,
        kind: LinkKind::Root,
        origin: Vector3::zeros(),
        axis: Vector3::z(),
    }];
    let mut placed: HashMap<String, usize> = HashMap::from([(root.to_string(), 0)]);
    while !pending.is_empty() {
        let before = pending.len();
        let mut rest = Vec::with_capacity(pending.len());
        for p in pending {
            if let Some(&parent) = placed.get(p.parent) {
                placed.insert(p.name.to_string(), links.len());
                links.push(Link {
                    name: p.name.to_string(),
                    parent: Some(parent),
                    kind: p.kind,
                    origin: Vector3::from(p.origin),
                    axis: Vector3::from(p.axis),
                });
            } else {
                rest.push(p);
            }
        }
        if rest.len() == before {
            return Err(Error::Model(format!(
                "kinematic tree has a cycle through link {:?}",
                rest[0].name
            )));
        }
        pending = rest;
    }
    Ok(links)
}
