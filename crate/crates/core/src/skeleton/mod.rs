//! Articulated skeletons, poses and motion clips.

mod bvh;
mod procedural;

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use bvh::{parse_bvh, write_bvh};
pub use procedural::{
    generate_procedural_clip, humanoid, ActionKind, ProceduralActionSpec, ACTION_LIBRARY, PARTNER_OFFSET_M,
};

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Clip frame rate used by all generated material.
pub const DEFAULT_FPS: u32 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint in the parent's frame, meters.
    pub offset: Vec3,
    /// BVH `End Site`: a leaf with no channels of its own.
    pub end_site: bool,
}

impl Joint {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: [f64; 3]) -> Self {
        Joint {
            name: name.into(),
            parent,
            offset: Vec3::from(offset),
            end_site: false,
        }
    }
}

/// A joint tree stored in traversal order: every joint's parent precedes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    name: String,
    joints: Vec<Joint>,
    root_index: usize,
}

impl Skeleton {
    pub fn new(name: impl Into<String>, joints: Vec<Joint>) -> Result<Self> {
        if joints.len() < 2 {
            return Err(Error::invalid("a skeleton needs at least 2 joints"));
        }
        let mut names = HashSet::new();
        let mut root = None;
        for (i, j) in joints.iter().enumerate() {
            if j.name.is_empty() {
                return Err(Error::invalid(format!("joint {i} has an empty name")));
            }
            if !names.insert(j.name.as_str()) {
                return Err(Error::invalid(format!("duplicate joint name {:?}", j.name)));
            }
            if !j.offset.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("joint {:?} has a non-finite offset", j.name)));
            }
            match j.parent {
                None if root.is_none() => root = Some(i),
                None => return Err(Error::invalid("skeleton has more than one root")),
                Some(p) if p >= i => {
                    return Err(Error::invalid(format!(
                        "joint {:?} has parent {p} that does not precede it",
                        j.name
                    )))
                }
                Some(_) => {}
            }
        }
        let root_index = root.ok_or_else(|| Error::invalid("skeleton has no root"))?;
        Ok(Skeleton {
            name: name.into(),
            joints,
            root_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// `(parent, child)` pairs, one per non-root joint.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.joints
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.parent.map(|p| (p, i)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root_translation: Vec3,
    /// Local rotation of each joint relative to its parent.
    pub joint_rotations: Vec<Quat>,
}

impl Pose {
    pub fn identity(num_joints: usize) -> Self {
        Pose {
            root_translation: Vec3::zeros(),
            joint_rotations: vec![Quat::identity(); num_joints],
        }
    }

    /// Rotate the whole figure about the vertical axis through the world origin,
    /// then translate it.
    pub fn placed(&self, root: usize, yaw: f64, shift: Vec3) -> Pose {
        let turn = Quat::from_axis_angle(&Vec3::y_axis(), yaw);
        let mut out = self.clone();
        out.root_translation = turn * self.root_translation + shift;
        out.joint_rotations[root] = turn * self.joint_rotations[root];
        out
    }
}

/// Per-frame poses of one skeleton; an optional second track holds a partner
/// actor for two-person actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Arc<Skeleton>,
    pub fps: u32,
    pub frames: Vec<Pose>,
    pub partner_frames: Option<Vec<Pose>>,
    pub action_label: String,
    pub variant_id: u32,
}

impl MotionClip {
    pub fn skeleton_id(&self) -> &str {
        self.skeleton.name()
    }

    pub fn actor_count(&self) -> usize {
        1 + self.partner_frames.is_some() as usize
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps as f64
    }

    /// World joint positions of every actor on frame `i`.
    pub fn actor_positions(&self, i: usize) -> Result<Vec<Vec<Vec3>>> {
        let mut out = vec![forward_kinematics(&self.skeleton, &self.frames[i])?];
        if let Some(partner) = &self.partner_frames {
            out.push(forward_kinematics(&self.skeleton, &partner[i])?);
        }
        Ok(out)
    }
}

/// World-space joint positions. The root sits at `root_translation`; every
/// other joint is its parent's world transform applied to its offset.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<Vec3>> {
    let n = skeleton.len();
    if pose.joint_rotations.len() != n {
        return Err(Error::invalid(format!(
            "pose has {} rotations for a skeleton of {n} joints",
            pose.joint_rotations.len()
        )));
    }
    let mut world_rot = Vec::with_capacity(n);
    let mut world_pos = Vec::with_capacity(n);
    for (i, joint) in skeleton.joints().iter().enumerate() {
        match joint.parent {
            None => {
                world_pos.push(pose.root_translation);
                world_rot.push(pose.joint_rotations[i]);
            }
            Some(p) => {
                let parent_rot: Quat = world_rot[p];
                world_pos.push(world_pos[p] + parent_rot * joint.offset);
                world_rot.push(parent_rot * pose.joint_rotations[i]);
            }
        }
    }
    Ok(world_pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn chain() -> Skeleton {
        Skeleton::new(
            "chain",
            vec![
                Joint::new("root", None, [0.0, 0.0, 0.0]),
                Joint::new("a", Some(0), [1.0, 0.0, 0.0]),
                Joint::new("b", Some(1), [0.0, 2.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_pose_sums_offsets() {
        let s = chain();
        let p = forward_kinematics(&s, &Pose::identity(3)).unwrap();
        assert_eq!(p[0], Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(p[1], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p[2], Vec3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn root_translation_shifts_everything() {
        let s = chain();
        let mut pose = Pose::identity(3);
        pose.root_translation = Vec3::new(1.0, 2.0, 3.0);
        let base = forward_kinematics(&s, &Pose::identity(3)).unwrap();
        let moved = forward_kinematics(&s, &pose).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert_eq!(b - a, Vec3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn root_rotation_about_z() {
        let s = chain();
        let mut pose = Pose::identity(3);
        pose.joint_rotations[0] = Quat::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        let p = forward_kinematics(&s, &pose).unwrap();
        // (1,0,0) rotated 90 degrees about z is (0,1,0)
        assert!((p[1] - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        // (0,2,0) rotated is (-2,0,0), added to the child
        assert!((p[2] - Vec3::new(-2.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        assert!(forward_kinematics(&chain(), &Pose::identity(2)).is_err());
    }

    #[test]
    fn skeleton_validation() {
        assert!(Skeleton::new("x", vec![Joint::new("r", None, [0.0; 3])]).is_err());
        assert!(Skeleton::new(
            "x",
            vec![Joint::new("r", None, [0.0; 3]), Joint::new("r", Some(0), [0.0; 3])]
        )
        .is_err());
        assert!(Skeleton::new(
            "x",
            vec![Joint::new("r", None, [0.0; 3]), Joint::new("c", Some(1), [0.0; 3])]
        )
        .is_err());
        assert!(Skeleton::new(
            "x",
            vec![
                Joint::new("r", None, [0.0; 3]),
                Joint::new("c", Some(0), [f64::NAN, 0.0, 0.0])
            ]
        )
        .is_err());
    }
}
