//! Built-in parametric action library.
//!
//! Each action is a periodic function of a phase `2*pi*f*speed*t + phase0`
//! mapped onto a fixed 17-joint humanoid. `amplitude_scale` multiplies every
//! joint angle (and vertical root excursion) about the rest pose; the seed
//! picks the starting phase, a facing jitter and a +-10% per-joint amplitude
//! jitter.

use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use rand::Rng;

use super::{Joint, MotionClip, Pose, Quat, Skeleton, Vec3, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::seed;

pub const ACTION_LIBRARY: [&str; 8] = ["wave", "jump", "squat", "run_in_place", "punch", "kick", "bow", "spin"];

/// Relative root offset between the two actors of a two-person clip.
pub const PARTNER_OFFSET_M: f64 = 1.0;

const HIPS: usize = 0;
const SPINE: usize = 1;
const CHEST: usize = 2;
const NECK: usize = 3;
const L_SHOULDER: usize = 5;
const L_ELBOW: usize = 6;
const R_SHOULDER: usize = 8;
const R_ELBOW: usize = 9;
#[cfg(test)]
const R_WRIST: usize = 10;
const L_HIP: usize = 11;
const L_KNEE: usize = 12;
const L_ANKLE: usize = 13;
const R_HIP: usize = 14;
const R_KNEE: usize = 15;
const R_ANKLE: usize = 16;
const NUM_JOINTS: usize = 17;

const HIP_HEIGHT: f64 = 0.95;

/// The shared rest-pose humanoid: Y up, facing +Z, arms hanging.
pub fn humanoid() -> Arc<Skeleton> {
    static SKELETON: OnceLock<Arc<Skeleton>> = OnceLock::new();
    SKELETON
        .get_or_init(|| {
            let j = |name: &str, parent: usize, offset: [f64; 3]| Joint::new(name, Some(parent), offset);
            let joints = vec![
                Joint::new("hips", None, [0.0, 0.0, 0.0]),
                j("spine", HIPS, [0.0, 0.12, 0.0]),
                j("chest", SPINE, [0.0, 0.25, 0.0]),
                j("neck", CHEST, [0.0, 0.18, 0.0]),
                j("head", NECK, [0.0, 0.2, 0.0]),
                j("l_shoulder", CHEST, [0.18, 0.12, 0.0]),
                j("l_elbow", L_SHOULDER, [0.0, -0.28, 0.0]),
                j("l_wrist", L_ELBOW, [0.0, -0.26, 0.0]),
                j("r_shoulder", CHEST, [-0.18, 0.12, 0.0]),
                j("r_elbow", R_SHOULDER, [0.0, -0.28, 0.0]),
                j("r_wrist", R_ELBOW, [0.0, -0.26, 0.0]),
                j("l_hip", HIPS, [0.1, -0.05, 0.0]),
                j("l_knee", L_HIP, [0.0, -0.43, 0.0]),
                j("l_ankle", L_KNEE, [0.0, -0.42, 0.0]),
                j("r_hip", HIPS, [-0.1, -0.05, 0.0]),
                j("r_knee", R_HIP, [0.0, -0.43, 0.0]),
                j("r_ankle", R_KNEE, [0.0, -0.42, 0.0]),
            ];
            Arc::new(Skeleton::new("humanoid17", joints).expect("built-in skeleton is valid"))
        })
        .clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Wave,
    Jump,
    Squat,
    RunInPlace,
    Punch,
    Kick,
    Bow,
    Spin,
}

impl ActionKind {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "wave" => ActionKind::Wave,
            "jump" => ActionKind::Jump,
            "squat" => ActionKind::Squat,
            "run_in_place" => ActionKind::RunInPlace,
            "punch" => ActionKind::Punch,
            "kick" => ActionKind::Kick,
            "bow" => ActionKind::Bow,
            "spin" => ActionKind::Spin,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        ACTION_LIBRARY[self as usize]
    }

    /// Actions that may be staged with a partner (boxing, salsa-style spin).
    pub fn two_person(self) -> bool {
        matches!(self, ActionKind::Punch | ActionKind::Spin)
    }

    /// Cycles per second at `speed_scale` 1.
    fn frequency(self) -> f64 {
        match self {
            ActionKind::Wave => 1.0,
            ActionKind::Jump => 0.6,
            ActionKind::Squat => 0.5,
            ActionKind::RunInPlace => 1.4,
            ActionKind::Punch => 0.8,
            ActionKind::Kick => 0.45,
            ActionKind::Bow => 0.4,
            ActionKind::Spin => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralActionSpec {
    pub action_name: String,
    pub speed_scale: f64,
    pub amplitude_scale: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub fps: u32,
    pub actor_count: usize,
    pub variant_id: u32,
}

impl ProceduralActionSpec {
    pub fn new(action_name: impl Into<String>, seed: u64) -> Self {
        ProceduralActionSpec {
            action_name: action_name.into(),
            speed_scale: 1.0,
            amplitude_scale: 1.0,
            duration_s: 4.0,
            seed,
            fps: DEFAULT_FPS,
            actor_count: 1,
            variant_id: 0,
        }
    }

    pub fn validate(&self) -> Result<ActionKind> {
        let kind = ActionKind::from_name(&self.action_name)
            .ok_or_else(|| Error::invalid(format!("unknown action {:?}", self.action_name)))?;
        if !(0.5..=2.0).contains(&self.speed_scale) {
            return Err(Error::invalid(format!(
                "speed_scale {} outside [0.5, 2.0]",
                self.speed_scale
            )));
        }
        if !(0.5..=1.5).contains(&self.amplitude_scale) {
            return Err(Error::invalid(format!(
                "amplitude_scale {} outside [0.5, 1.5]",
                self.amplitude_scale
            )));
        }
        if !(2.0..=6.0).contains(&self.duration_s) {
            return Err(Error::invalid(format!("duration_s {} outside [2, 6]", self.duration_s)));
        }
        if self.fps == 0 {
            return Err(Error::invalid("fps must be positive"));
        }
        match self.actor_count {
            1 => {}
            2 if kind.two_person() => {}
            2 => return Err(Error::invalid(format!("{} is not a two-person action", kind.name()))),
            n => return Err(Error::invalid(format!("actor_count {n} must be 1 or 2"))),
        }
        Ok(kind)
    }
}

fn rx(a: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::x_axis(), a)
}

fn ry(a: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::y_axis(), a)
}

fn rz(a: f64) -> Quat {
    Quat::from_axis_angle(&Vec3::z_axis(), a)
}

struct Style {
    phase0: f64,
    facing: f64,
    jitter: [f64; NUM_JOINTS],
}

impl Style {
    fn draw(seed_value: u64) -> Self {
        let mut rng = seed::rng(seed_value);
        let phase0 = rng.random_range(0.0..TAU);
        let facing = rng.random_range(-0.25..0.25);
        let mut jitter = [1.0; NUM_JOINTS];
        for j in jitter.iter_mut() {
            *j = rng.random_range(0.9..1.1);
        }
        Style { phase0, facing, jitter }
    }
}

fn pose_at(kind: ActionKind, phase: f64, amp: f64, style: &Style) -> Pose {
    let mut pose = Pose::identity(NUM_JOINTS);
    let a = |j: usize| amp * style.jitter[j];
    let mut lift = 0.0;
    let mut root = Quat::identity();
    let r = &mut pose.joint_rotations;
    let s = phase.sin();
    match kind {
        ActionKind::Wave => {
            r[R_SHOULDER] = rz(-2.5 * a(R_SHOULDER));
            r[R_ELBOW] = rz(0.6 * a(R_ELBOW) * s);
            r[L_SHOULDER] = rz(0.15 * a(L_SHOULDER));
        }
        ActionKind::Jump => {
            let up = s.max(0.0);
            let down = (-s).max(0.0);
            lift = 0.25 * up * a(HIPS) - 0.15 * down * a(HIPS);
            for (hip, knee, ankle) in [(L_HIP, L_KNEE, L_ANKLE), (R_HIP, R_KNEE, R_ANKLE)] {
                r[hip] = rx(-0.8 * down * a(hip));
                r[knee] = rx(1.4 * down * a(knee));
                r[ankle] = rx(-0.6 * down * a(ankle));
            }
            r[L_SHOULDER] = rx(-1.6 * up * a(L_SHOULDER)) * rz(0.2 * a(L_SHOULDER));
            r[R_SHOULDER] = rx(-1.6 * up * a(R_SHOULDER)) * rz(-0.2 * a(R_SHOULDER));
        }
        ActionKind::Squat => {
            let d = 0.5 * (1.0 - phase.cos());
            lift = -0.38 * d * a(HIPS);
            for (hip, knee, ankle) in [(L_HIP, L_KNEE, L_ANKLE), (R_HIP, R_KNEE, R_ANKLE)] {
                r[hip] = rx(-1.5 * d * a(hip));
                r[knee] = rx(2.0 * d * a(knee));
                r[ankle] = rx(-0.5 * d * a(ankle));
            }
            r[SPINE] = rx(0.35 * d * a(SPINE));
            r[L_SHOULDER] = rx(-1.4 * d * a(L_SHOULDER));
            r[R_SHOULDER] = rx(-1.4 * d * a(R_SHOULDER));
        }
        ActionKind::RunInPlace => {
            let left = s.max(0.0);
            let right = (-s).max(0.0);
            lift = 0.05 * s.abs() * a(HIPS);
            r[L_HIP] = rx(-0.9 * left * a(L_HIP));
            r[L_KNEE] = rx(1.6 * left * a(L_KNEE));
            r[R_HIP] = rx(-0.9 * right * a(R_HIP));
            r[R_KNEE] = rx(1.6 * right * a(R_KNEE));
            r[L_SHOULDER] = rx(0.7 * s * a(L_SHOULDER));
            r[R_SHOULDER] = rx(-0.7 * s * a(R_SHOULDER));
            r[L_ELBOW] = rx(-1.5 * a(L_ELBOW));
            r[R_ELBOW] = rx(-1.5 * a(R_ELBOW));
        }
        ActionKind::Punch => {
            let p = s.max(0.0).powi(2);
            let q = (-s).max(0.0).powi(2);
            r[L_SHOULDER] = rx(-(0.6 + 0.9 * p) * a(L_SHOULDER)) * rz(0.25 * a(L_SHOULDER));
            r[L_ELBOW] = rx(-1.9 * (1.0 - p) * a(L_ELBOW));
            r[R_SHOULDER] = rx(-(0.6 + 0.9 * q) * a(R_SHOULDER)) * rz(-0.25 * a(R_SHOULDER));
            r[R_ELBOW] = rx(-1.9 * (1.0 - q) * a(R_ELBOW));
            r[SPINE] = ry(0.3 * (q - p) * a(SPINE));
            r[L_HIP] = rx(-0.15 * a(L_HIP));
            r[R_HIP] = rx(-0.15 * a(R_HIP));
            r[L_KNEE] = rx(0.3 * a(L_KNEE));
            r[R_KNEE] = rx(0.3 * a(R_KNEE));
        }
        ActionKind::Kick => {
            let k = s.max(0.0);
            r[R_HIP] = rx(-1.3 * k * a(R_HIP));
            r[R_KNEE] = rx(4.8 * k * (1.0 - k) * a(R_KNEE));
            r[SPINE] = rx(-0.2 * k * a(SPINE));
            r[L_SHOULDER] = rz(0.7 * a(L_SHOULDER));
            r[R_SHOULDER] = rz(-0.7 * a(R_SHOULDER));
        }
        ActionKind::Bow => {
            let b = 0.5 * (1.0 - phase.cos());
            r[SPINE] = rx(0.7 * b * a(SPINE));
            r[CHEST] = rx(0.4 * b * a(CHEST));
            r[NECK] = rx(0.3 * b * a(NECK));
            r[L_SHOULDER] = rx(-0.3 * b * a(L_SHOULDER));
            r[R_SHOULDER] = rx(-0.3 * b * a(R_SHOULDER));
        }
        ActionKind::Spin => {
            root = ry(phase);
            lift = 0.03 * (2.0 * phase).sin() * a(HIPS);
            r[L_SHOULDER] = rz(1.4 * a(L_SHOULDER));
            r[R_SHOULDER] = rz(-1.4 * a(R_SHOULDER));
            r[L_ELBOW] = rz(0.3 * a(L_ELBOW));
            r[R_ELBOW] = rz(-0.3 * a(R_ELBOW));
        }
    }
    r[HIPS] = ry(style.facing) * root * r[HIPS];
    pose.root_translation = Vec3::new(0.0, HIP_HEIGHT + lift, 0.0);
    pose
}

fn track(kind: ActionKind, spec: &ProceduralActionSpec, seed_value: u64, n: usize) -> Vec<Pose> {
    let style = Style::draw(seed_value);
    let rate = TAU * kind.frequency() * spec.speed_scale;
    (0..n)
        .map(|i| {
            let t = i as f64 / spec.fps as f64;
            pose_at(kind, rate * t + style.phase0, spec.amplitude_scale, &style)
        })
        .collect()
}

/// Generate a clip for `spec`. Deterministic in every field of the spec.
pub fn generate_procedural_clip(spec: &ProceduralActionSpec) -> Result<MotionClip> {
    let kind = spec.validate()?;
    let n = (spec.duration_s * spec.fps as f64).round() as usize;
    let mut frames = track(kind, spec, spec.seed, n);
    let partner_frames = (spec.actor_count == 2).then(|| {
        let partner = track(kind, spec, seed::derive_seed(spec.seed, &[2]), n);
        // the two actors face each other across the offset
        frames = frames.iter().map(|p| p.placed(HIPS, PI / 2.0, Vec3::zeros())).collect();
        partner
            .iter()
            .map(|p| p.placed(HIPS, -PI / 2.0, Vec3::new(PARTNER_OFFSET_M, 0.0, 0.0)))
            .collect()
    });
    Ok(MotionClip {
        skeleton: humanoid(),
        fps: spec.fps,
        frames,
        partner_frames,
        action_label: kind.name().to_string(),
        variant_id: spec.variant_id,
    })
}
