//! Software rendering of articulated figures as shaded capsules.

mod frame;
mod raster;
mod texture;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;
use crate::skeleton::{MotionClip, Vec3};

pub use frame::Frame;
pub use raster::{render_frame, render_frame_with_mask};
pub use texture::Texture;

/// Radius of the cylindrical backdrop around the world origin, meters.
pub const BACKDROP_RADIUS_M: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraMode {
    Fixed,
    Tracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub position: Vec3,
    pub look_at: Vec3,
    pub focal_length_px: f64,
    pub width: usize,
    pub height: usize,
    pub mode: CameraMode,
    pub shake_amplitude: f64,
    pub shake_seed: u64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig::orbit(320, 240, 0.0)
    }
}

impl CameraConfig {
    /// Fixed camera on a 4.5 m circle around the origin at chest height,
    /// `azimuth` radians from the figure's front.
    pub fn orbit(width: usize, height: usize, azimuth: f64) -> Self {
        let r = 4.5;
        CameraConfig {
            position: Vec3::new(r * azimuth.sin(), 1.0, r * azimuth.cos()),
            look_at: Vec3::new(0.0, 0.9, 0.0),
            focal_length_px: 1.2 * width as f64,
            width,
            height,
            mode: CameraMode::Fixed,
            shake_amplitude: 0.0,
            shake_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_px > 0.0 && self.focal_length_px.is_finite()) {
            return Err(Error::invalid("focal_length_px must be positive"));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::invalid(format!(
                "image size {}x{} below 32x32",
                self.width, self.height
            )));
        }
        if !(self.shake_amplitude >= 0.0 && self.shake_amplitude.is_finite()) {
            return Err(Error::invalid("shake_amplitude must be non-negative"));
        }
        if (self.look_at - self.position).norm() < 1e-9 {
            return Err(Error::invalid("camera position coincides with look_at"));
        }
        Ok(())
    }

    /// Orthonormal `(right, up, forward)` camera axes.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalize();
        let mut right = forward.cross(&Vec3::y());
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::z());
        }
        let right = right.normalize();
        (right, right.cross(&forward), forward)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected {
    Pixel { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

/// Pinhole projection; image `v` grows downward.
pub fn project_point(camera: &CameraConfig, world: &Vec3) -> Projected {
    let (right, up, forward) = camera.basis();
    let d = world - camera.position;
    let z = d.dot(&forward);
    if z <= 1e-9 {
        return Projected::BehindCamera;
    }
    let (cx, cy) = camera.center();
    let f = camera.focal_length_px;
    Projected::Pixel {
        u: cx + f * d.dot(&right) / z,
        v: cy - f * d.dot(&up) / z,
        depth: z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LightingPreset {
    Dark,
    Shadow,
    Bright,
    Custom,
}

impl LightingPreset {
    pub fn intensity(self) -> Option<f64> {
        match self {
            LightingPreset::Dark => Some(0.35),
            LightingPreset::Shadow => Some(0.6),
            LightingPreset::Bright => Some(1.0),
            LightingPreset::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LightingPreset::Dark => "dark",
            LightingPreset::Shadow => "shadow",
            LightingPreset::Bright => "bright",
            LightingPreset::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "dark" => LightingPreset::Dark,
            "shadow" => LightingPreset::Shadow,
            "bright" => LightingPreset::Bright,
            "custom" => LightingPreset::Custom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightingConfig {
    pub preset: LightingPreset,
    pub intensity: f64,
    pub per_frame_jitter: f64,
    pub jitter_seed: u64,
}

impl LightingConfig {
    pub fn preset(preset: LightingPreset) -> Self {
        LightingConfig {
            preset,
            intensity: preset.intensity().unwrap_or(1.0),
            per_frame_jitter: 0.0,
            jitter_seed: 0,
        }
    }

    pub fn custom(intensity: f64) -> Self {
        LightingConfig {
            intensity,
            ..LightingConfig::preset(LightingPreset::Custom)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity <= 2.0) {
            return Err(Error::invalid(format!(
                "lighting intensity {} outside (0, 2]",
                self.intensity
            )));
        }
        if let Some(fixed) = self.preset.intensity() {
            if fixed != self.intensity {
                return Err(Error::invalid(format!(
                    "preset {} has intensity {fixed}",
                    self.preset.name()
                )));
            }
        }
        if !(self.per_frame_jitter >= 0.0 && self.per_frame_jitter.is_finite()) {
            return Err(Error::invalid("per_frame_jitter must be non-negative"));
        }
        Ok(())
    }

    /// Intensity on frame `i` after multiplicative uniform jitter.
    pub fn frame_intensity(&self, i: usize) -> f64 {
        if self.per_frame_jitter == 0.0 {
            return self.intensity;
        }
        let mut rng = seed::rng_for(self.jitter_seed, &[i as u64]);
        let k: f64 = rng.random_range(-1.0..=1.0);
        (self.intensity * (1.0 + self.per_frame_jitter * k)).clamp(0.01, 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    Blank,
    Textured(Arc<Texture>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CharacterTexture {
    Flat,
    Textured(Arc<Texture>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub background: Background,
    pub character_texture: CharacterTexture,
    pub limb_radius: f64,
    /// Output channels, 1 (gray) or 3 (RGB).
    pub channels: usize,
    /// Texture density on the backdrop.
    pub texels_per_meter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            background: Background::Blank,
            character_texture: CharacterTexture::Flat,
            limb_radius: 0.07,
            channels: 1,
            texels_per_meter: 8.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.limb_radius > 0.0 && self.limb_radius.is_finite()) {
            return Err(Error::invalid("limb_radius must be positive"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid("scene channels must be 1 or 3"));
        }
        if !(self.texels_per_meter > 0.0 && self.texels_per_meter.is_finite()) {
            return Err(Error::invalid("texels_per_meter must be positive"));
        }
        Ok(())
    }

    pub fn is_simplified(&self) -> bool {
        matches!(self.background, Background::Blank) && matches!(self.character_texture, CharacterTexture::Flat)
    }

    pub fn describe(&self) -> String {
        let bg = match &self.background {
            Background::Blank => "blank".to_string(),
            Background::Textured(t) => format!("textured({})", t.id),
        };
        let ch = match &self.character_texture {
            CharacterTexture::Flat => "flat".to_string(),
            CharacterTexture::Textured(t) => format!("textured({})", t.id),
        };
        format!(
            "background={bg} character={ch} limb_radius={} channels={}",
            self.limb_radius, self.channels
        )
    }
}

/// Per-frame cameras: i.i.d. uniform shake in `[-a, a]^3` from
/// `(shake_seed, frame)`; tracking cameras aim at the subject root.
pub fn sample_camera_track(
    camera: &CameraConfig,
    num_frames: usize,
    subject_root_per_frame: &[Vec3],
) -> Vec<CameraConfig> {
    let a = camera.shake_amplitude;
    (0..num_frames)
        .map(|i| {
            let offset = if a > 0.0 {
                let mut rng = seed::rng_for(camera.shake_seed, &[i as u64]);
                Vec3::new(
                    rng.random_range(-a..=a),
                    rng.random_range(-a..=a),
                    rng.random_range(-a..=a),
                )
            } else {
                Vec3::zeros()
            };
            let mut cam = camera.clone();
            cam.position += offset;
            match camera.mode {
                CameraMode::Fixed => cam.look_at += offset,
                CameraMode::Tracking => {
                    if let Some(root) = subject_root_per_frame.get(i).or(subject_root_per_frame.last()) {
                        cam.look_at = *root;
                    }
                }
            }
            cam
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMetadata {
    pub clip_id: String,
    pub camera: CameraConfig,
    pub lighting: LightingConfig,
    pub scene: String,
    pub seeds: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    pub frames: Vec<Frame>,
    /// Per-frame foreground masks, row-major.
    pub masks: Vec<Vec<bool>>,
    pub fps: u32,
    pub metadata: VideoMetadata,
}

impl VideoTensor {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Midpoint of the actors' roots.
fn subject_root(actors: &[Vec<Vec3>], root: usize) -> Vec3 {
    actors.iter().map(|a| a[root]).sum::<Vec3>() / actors.len() as f64
}

pub fn render_clip(
    clip: &MotionClip,
    camera: &CameraConfig,
    lighting: &LightingConfig,
    scene: &SceneConfig,
    clip_id: &str,
) -> Result<VideoTensor> {
    camera.validate()?;
    lighting.validate()?;
    scene.validate()?;
    if clip.len() < 2 {
        return Err(Error::invalid("a video needs at least 2 frames"));
    }
    let positions: Vec<Vec<Vec<Vec3>>> = (0..clip.len())
        .map(|i| clip.actor_positions(i))
        .collect::<Result<_>>()?;
    let root = clip.skeleton.root_index();
    let roots: Vec<Vec3> = positions.iter().map(|a| subject_root(a, root)).collect();
    let cameras = sample_camera_track(camera, clip.len(), &roots);
    let rendered: Vec<(Frame, Vec<bool>)> = (0..clip.len())
        .into_par_iter()
        .map(|i| {
            let light = LightingConfig {
                intensity: lighting.frame_intensity(i),
                ..*lighting
            };
            render_frame_with_mask(&positions[i], &clip.skeleton, &cameras[i], &light, scene)
        })
        .collect::<Result<_>>()?;
    let (frames, masks) = rendered.into_iter().unzip();
    Ok(VideoTensor {
        frames,
        masks,
        fps: clip.fps,
        metadata: VideoMetadata {
            clip_id: clip_id.to_string(),
            camera: camera.clone(),
            lighting: *lighting,
            scene: scene.describe(),
            seeds: vec![
                ("shake_seed".into(), camera.shake_seed),
                ("lighting_seed".into(), lighting.jitter_seed),
            ],
        },
    })
}
