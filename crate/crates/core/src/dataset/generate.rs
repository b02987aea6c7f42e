use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    flow_paths, frame_path, load_frames, make_splits, read_manifest, write_frame, write_manifest, write_split,
    DatasetManifest, SourceKind, VideoRecord,
};
use crate::error::{Error, Result};
use crate::flow::{encode_flow, estimate_flow, FlowParams};
use crate::render::{
    render_clip, Background, CameraConfig, CameraMode, CharacterTexture, Frame, LightingConfig, LightingPreset,
    SceneConfig, Texture,
};
use crate::seed;
use crate::skeleton::{generate_procedural_clip, ActionKind, ProceduralActionSpec, ACTION_LIBRARY, DEFAULT_FPS};

/// Encoding bound for desk-scale clips, px. Their motion rarely exceeds a
/// few pixels per frame, so a tighter bound keeps quantization at 0.04 px.
pub const DESK_FLOW_BOUND: f64 = 5.0;

pub const GENERATOR_VERSION: &str = concat!("synthact-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    pub action: String,
    pub actor_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSpec {
    pub speed_scale: f64,
    pub amplitude_scale: f64,
}

/// Everything that determines a generated dataset. Per-video factors cycle
/// independently: video `i` takes `variants[i % nv]`, viewpoint `i % nview`,
/// `lighting_presets[i % nl]` and `shake_amplitudes[i % ns]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub classes: Vec<ClassSpec>,
    pub variants: Vec<VariantSpec>,
    pub videos_per_class: usize,
    pub viewpoints_per_class: usize,
    /// Viewpoints spread evenly over `[-max, max]` degrees of azimuth.
    pub max_azimuth_deg: f64,
    pub lighting_presets: Vec<LightingPreset>,
    pub lighting_jitter: f64,
    pub shake_amplitudes: Vec<f64>,
    /// Kinds generated; `videos_per_class` videos of each.
    pub source_kinds: Vec<SourceKind>,
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub duration_range: (f64, f64),
    pub camera_mode: CameraMode,
    pub limb_radius: f64,
    pub flow_params: FlowParams,
    pub flow_bound: f64,
    pub test_fraction: f64,
    pub global_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            classes: ACTION_LIBRARY
                .iter()
                .map(|a| ClassSpec {
                    name: a.to_string(),
                    action: a.to_string(),
                    actor_count: if *a == "punch" { 2 } else { 1 },
                })
                .collect(),
            variants: vec![
                VariantSpec {
                    speed_scale: 1.0,
                    amplitude_scale: 1.0,
                },
                VariantSpec {
                    speed_scale: 0.75,
                    amplitude_scale: 1.2,
                },
                VariantSpec {
                    speed_scale: 1.3,
                    amplitude_scale: 0.85,
                },
                VariantSpec {
                    speed_scale: 0.6,
                    amplitude_scale: 0.7,
                },
                VariantSpec {
                    speed_scale: 1.6,
                    amplitude_scale: 1.3,
                },
            ],
            videos_per_class: 40,
            viewpoints_per_class: 7,
            max_azimuth_deg: 60.0,
            lighting_presets: vec![LightingPreset::Dark, LightingPreset::Shadow, LightingPreset::Bright],
            lighting_jitter: 0.1,
            shake_amplitudes: vec![0.0, 0.02],
            source_kinds: vec![SourceKind::RealLike, SourceKind::Simplified],
            width: 64,
            height: 48,
            fps: DEFAULT_FPS,
            duration_range: (2.0, 3.0),
            camera_mode: CameraMode::Fixed,
            limb_radius: 0.08,
            flow_params: FlowParams {
                iterations_per_level: 40,
                pyramid_levels: 3,
                warp_steps_per_level: 2,
                damping: 50.0,
                ..FlowParams::default()
            },
            flow_bound: DESK_FLOW_BOUND,
            test_fraction: 0.3,
            global_seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("no classes configured"));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.classes {
            if c.name.is_empty() || c.name.contains(['/', '\t', ',', '\\']) || !names.insert(&c.name) {
                return Err(Error::invalid(format!("bad or duplicate class name {:?}", c.name)));
            }
            let kind = ActionKind::from_name(&c.action)
                .ok_or_else(|| Error::invalid(format!("unknown action {:?}", c.action)))?;
            if c.actor_count == 2 && !kind.two_person() || !(1..=2).contains(&c.actor_count) {
                return Err(Error::invalid(format!(
                    "class {:?}: actor_count {} not allowed for {}",
                    c.name, c.actor_count, c.action
                )));
            }
        }
        if self.variants.is_empty() || self.lighting_presets.is_empty() || self.shake_amplitudes.is_empty() {
            return Err(Error::invalid("variant, lighting and shake lists must be non-empty"));
        }
        if self.videos_per_class == 0 || self.viewpoints_per_class == 0 {
            return Err(Error::invalid(
                "videos_per_class and viewpoints_per_class must be positive",
            ));
        }
        if self.source_kinds.is_empty() {
            return Err(Error::invalid("no source kinds configured"));
        }
        let (lo, hi) = self.duration_range;
        if !(2.0..=6.0).contains(&lo) || !(2.0..=6.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!("duration range ({lo}, {hi}) not within [2, 6]")));
        }
        if self.fps == 0 {
            return Err(Error::invalid("fps must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if !(self.flow_bound > 0.0 && self.flow_bound.is_finite()) {
            return Err(Error::invalid("flow_bound must be positive"));
        }
        self.flow_params.validate()?;
        Ok(())
    }
}

/// Fully resolved parameters of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPlan {
    pub record: VideoRecord,
    pub clip: ProceduralActionSpec,
    pub camera: CameraConfig,
    pub lighting: LightingConfig,
    pub scene: SceneConfig,
    pub viewpoint: usize,
    pub azimuth_deg: f64,
}

fn kind_tag(kind: SourceKind) -> (&'static str, u64) {
    match kind {
        SourceKind::RealLike => ("r", 1),
        SourceKind::Simplified => ("s", 2),
    }
}

pub fn plan_dataset(config: &GenerationConfig) -> Result<Vec<VideoPlan>> {
    config.validate()?;
    let mut plans = Vec::new();
    for &kind in &config.source_kinds {
        let (tag, code) = kind_tag(kind);
        for (ci, class) in config.classes.iter().enumerate() {
            for i in 0..config.videos_per_class {
                let video_seed = seed::derive_seed(config.global_seed, &[seed::hash_str(&class.name), i as u64, code]);
                let mut rng = seed::rng(video_seed);
                let variant = config.variants[i % config.variants.len()];
                let (lo, hi) = config.duration_range;
                let duration_s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let frames = (duration_s * config.fps as f64).round() as usize;
                let clip = ProceduralActionSpec {
                    action_name: class.action.clone(),
                    speed_scale: variant.speed_scale,
                    amplitude_scale: variant.amplitude_scale,
                    duration_s,
                    seed: seed::derive_seed(video_seed, &[1]),
                    fps: config.fps,
                    actor_count: class.actor_count,
                    variant_id: (i % config.variants.len()) as u32,
                };

                let viewpoint = i % config.viewpoints_per_class;
                let azimuth_deg = if config.viewpoints_per_class > 1 {
                    -config.max_azimuth_deg
                        + 2.0 * config.max_azimuth_deg * viewpoint as f64 / (config.viewpoints_per_class - 1) as f64
                } else {
                    0.0
                };
                let mut camera = CameraConfig::orbit(config.width, config.height, azimuth_deg.to_radians());
                camera.mode = config.camera_mode;
                camera.shake_amplitude = config.shake_amplitudes[i % config.shake_amplitudes.len()];
                camera.shake_seed = seed::derive_seed(video_seed, &[2]);

                let mut lighting = LightingConfig::preset(config.lighting_presets[i % config.lighting_presets.len()]);
                lighting.per_frame_jitter = config.lighting_jitter;
                lighting.jitter_seed = seed::derive_seed(video_seed, &[3]);

                let scene = match kind {
                    SourceKind::Simplified => SceneConfig {
                        limb_radius: config.limb_radius,
                        ..SceneConfig::default()
                    },
                    SourceKind::RealLike => SceneConfig {
                        background: Background::Textured(Arc::new(Texture::procedural(seed::derive_seed(
                            video_seed,
                            &[4],
                        )))),
                        character_texture: CharacterTexture::Textured(Arc::new(Texture::procedural(
                            seed::derive_seed(video_seed, &[5]),
                        ))),
                        limb_radius: config.limb_radius,
                        ..SceneConfig::default()
                    },
                };

                let video_id = format!("{}_{tag}{i:04}", class.name);
                plans.push(VideoPlan {
                    record: VideoRecord {
                        relative_path: format!("{}/{video_id}", class.name),
                        video_id,
                        class_name: class.name.clone(),
                        class_index: ci,
                        source_kind: kind,
                        num_frames: frames,
                        fps: config.fps,
                        seed: video_seed,
                    },
                    clip,
                    camera,
                    lighting,
                    scene,
                    viewpoint,
                    azimuth_deg,
                });
            }
        }
    }
    Ok(plans)
}

fn meta_text(p: &VideoPlan) -> String {
    let c = &p.clip;
    format!(
        "action = {}\nactor_count = {}\nvariant = {}\nspeed_scale = {}\namplitude_scale = {}\n\
         duration_s = {}\nviewpoint = {}\nazimuth_deg = {}\nlighting_preset = {}\n\
         lighting_intensity = {}\nlighting_jitter = {}\nshake_amplitude = {}\ncamera_mode = {}\n\
         scene = {}\nclip_seed = {}\nshake_seed = {}\nlighting_seed = {}\nwidth = {}\nheight = {}\n",
        c.action_name,
        c.actor_count,
        c.variant_id,
        c.speed_scale,
        c.amplitude_scale,
        c.duration_s,
        p.viewpoint,
        p.azimuth_deg,
        p.lighting.preset.name(),
        p.lighting.intensity,
        p.lighting.per_frame_jitter,
        p.camera.shake_amplitude,
        match p.camera.mode {
            CameraMode::Fixed => "fixed",
            CameraMode::Tracking => "tracking",
        },
        p.scene.describe(),
        c.seed,
        p.camera.shake_seed,
        p.lighting.jitter_seed,
        p.camera.width,
        p.camera.height,
    )
}

fn write_flows(root: &Path, rec: &VideoRecord, frames: &[Frame], params: &FlowParams, bound: f64) -> Result<()> {
    for (i, pair) in frames.windows(2).enumerate() {
        let enc = encode_flow(&estimate_flow(&pair[0], &pair[1], params)?, bound)?;
        let (px, py) = flow_paths(root, rec, i);
        write_frame(&px, &enc.x_plane)?;
        write_frame(&py, &enc.y_plane)?;
    }
    Ok(())
}

fn write_video(root: &Path, plan: &VideoPlan, config: &GenerationConfig) -> Result<()> {
    let rec = &plan.record;
    let clip = generate_procedural_clip(&plan.clip)?;
    let video = render_clip(&clip, &plan.camera, &plan.lighting, &plan.scene, &rec.video_id)?;
    if video.len() != rec.num_frames {
        return Err(Error::data(format!(
            "{}: rendered {} frames, planned {}",
            rec.video_id,
            video.len(),
            rec.num_frames
        )));
    }
    let dir = root.join(&rec.relative_path);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, f) in video.frames.iter().enumerate() {
        write_frame(&frame_path(root, rec, i), f)?;
    }
    write_flows(root, rec, &video.frames, &config.flow_params, config.flow_bound)?;
    let meta = dir.join("meta.txt");
    fs::write(&meta, meta_text(plan)).map_err(|e| Error::io(&meta, e))
}

/// Render every planned video with its frames and encoded flow, then write
/// the manifest and three splits. Output depends only on `config`.
pub fn generate_dataset(config: &GenerationConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let plans = plan_dataset(config)?;
    if out_dir.exists() {
        let mut entries = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
        if entries.next().is_some() {
            return Err(Error::invalid(format!("{} is not empty", out_dir.display())));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    plans.par_iter().try_for_each(|p| write_video(out_dir, p, config))?;
    let manifest = DatasetManifest {
        classes: config.classes.iter().map(|c| c.name.clone()).collect(),
        records: plans.into_iter().map(|p| p.record).collect(),
        flow_bound: config.flow_bound,
        generator_version: GENERATOR_VERSION.to_string(),
        global_seed: config.global_seed,
        flow_params: config.flow_params,
    };
    for split in make_splits(&manifest, config.test_fraction, config.global_seed)? {
        write_split(out_dir, &manifest, &split)?;
    }
    write_manifest(out_dir, &manifest)?;
    log::info!("generated {} videos in {}", manifest.records.len(), out_dir.display());
    Ok(manifest)
}

/// Re-estimate every flow file from the stored frames with the dataset's flow parameters.
pub fn recompute_flow(root: &Path) -> Result<DatasetManifest> {
    let m = read_manifest(root)?;
    m.records.par_iter().try_for_each(|rec| {
        let frames = load_frames(root, rec)?;
        write_flows(root, rec, &frames, &m.flow_params, m.flow_bound)
    })?;
    Ok(m)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// SHA-256 over every file's relative path and contents, in sorted path order.
pub fn tree_checksum(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::check_integrity;

    fn tiny() -> GenerationConfig {
        GenerationConfig {
            classes: ["wave", "squat"]
                .iter()
                .map(|a| ClassSpec {
                    name: a.to_string(),
                    action: a.to_string(),
                    actor_count: 1,
                })
                .collect(),
            videos_per_class: 2,
            source_kinds: vec![SourceKind::RealLike, SourceKind::Simplified],
            width: 32,
            height: 32,
            duration_range: (2.0, 2.0),
            lighting_presets: vec![LightingPreset::Dark, LightingPreset::Bright],
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn factors_cycle_independently() {
        let mut cfg = tiny();
        cfg.videos_per_class = 6;
        cfg.viewpoints_per_class = 3;
        let plans = plan_dataset(&cfg).unwrap();
        let first: Vec<&VideoPlan> = plans.iter().take(6).collect();
        let views: Vec<usize> = first.iter().map(|p| p.viewpoint).collect();
        assert_eq!(views, vec![0, 1, 2, 0, 1, 2]);
        let lights: Vec<&str> = first.iter().map(|p| p.lighting.preset.name()).collect();
        assert_eq!(lights, vec!["dark", "bright", "dark", "bright", "dark", "bright"]);
        assert_eq!(first[0].azimuth_deg, -60.0);
        assert_eq!(first[2].azimuth_deg, 60.0);
        assert!(plans
            .iter()
            .all(|p| p.scene.is_simplified() == (p.record.source_kind == SourceKind::Simplified)));
    }

    #[test]
    fn generate_writes_consistent_tree() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds");
        let m = generate_dataset(&tiny(), &out).unwrap();
        assert_eq!(m.records.len(), 8);
        check_integrity(&out, &m).unwrap();
        assert_eq!(read_manifest(&out).unwrap(), m);
        for id in 1..=3 {
            assert!(out.join(format!("split_{id}.tsv")).is_file());
        }
        assert!(generate_dataset(&tiny(), &out).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = tiny();
        c.classes[0].action = "moonwalk".into();
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.classes[0].actor_count = 2;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.duration_range = (1.0, 2.0);
        assert!(c.validate().is_err());
    }
}
