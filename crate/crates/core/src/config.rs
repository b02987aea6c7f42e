//! Line-oriented `key = value` config files with `[section]` headers.
//!
//! `#` and `;` start comments. Every key must be known to its section;
//! anything else is reported with its line number.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{ClassSpec, GenerationConfig, SourceKind, VariantSpec};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ExperimentId};
use crate::render::{CameraMode, LightingPreset};
use crate::tsn::{ModelKind, NetworkKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

pub fn parse_ini(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::Config {
                    line,
                    msg: format!("malformed section header {s:?}"),
                })?;
            if sections.iter().any(|x| x.name == name) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate section [{name}]"),
                });
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got {s:?}"),
        })?;
        let sec = sections.last_mut().ok_or_else(|| Error::Config {
            line,
            msg: "key outside any [section]".into(),
        })?;
        let key = k.trim().to_string();
        if sec.entries.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key {key:?}"),
            });
        }
        sec.entries.push(Entry {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn err(e: &Entry, msg: impl Into<String>) -> Error {
    Error::Config {
        line: e.line,
        msg: format!("{}: {}", e.key, msg.into()),
    }
}

fn num<T: FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| err(e, format!("cannot parse {:?}", e.value)))
}

fn list(e: &Entry) -> Vec<&str> {
    e.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn num_list<T: FromStr>(e: &Entry) -> Result<Vec<T>> {
    list(e)
        .into_iter()
        .map(|s| s.parse().map_err(|_| err(e, format!("cannot parse {s:?}"))))
        .collect()
}

fn unknown(e: &Entry, section: &str) -> Error {
    err(e, format!("unknown key in [{section}]"))
}

/// `action` or `action:actors`; the class is named after its action.
fn parse_class(e: &Entry, s: &str) -> Result<ClassSpec> {
    let (action, actors) = match s.split_once(':') {
        Some((a, n)) => (
            a.trim(),
            n.trim()
                .parse()
                .map_err(|_| err(e, format!("bad actor count in {s:?}")))?,
        ),
        None => (s, 1),
    };
    Ok(ClassSpec {
        name: action.to_string(),
        action: action.to_string(),
        actor_count: actors,
    })
}

/// `speed/amplitude`
fn parse_variant(e: &Entry, s: &str) -> Result<VariantSpec> {
    let (a, b) = s
        .split_once('/')
        .ok_or_else(|| err(e, format!("variant {s:?} is not speed/amplitude")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| err(e, format!("bad number in {s:?}")))
    };
    Ok(VariantSpec {
        speed_scale: p(a)?,
        amplitude_scale: p(b)?,
    })
}

pub fn apply_generation(sec: &Section, g: &mut GenerationConfig) -> Result<()> {
    for e in &sec.entries {
        match e.key.as_str() {
            "classes" => g.classes = list(e).into_iter().map(|s| parse_class(e, s)).collect::<Result<_>>()?,
            "variants" => {
                g.variants = list(e)
                    .into_iter()
                    .map(|s| parse_variant(e, s))
                    .collect::<Result<_>>()?
            }
            "videos_per_class" => g.videos_per_class = num(e)?,
            "viewpoints_per_class" => g.viewpoints_per_class = num(e)?,
            "max_azimuth_deg" => g.max_azimuth_deg = num(e)?,
            "lighting_presets" => {
                g.lighting_presets = list(e)
                    .into_iter()
                    .map(|s| LightingPreset::from_name(s).ok_or_else(|| err(e, format!("unknown preset {s:?}"))))
                    .collect::<Result<_>>()?
            }
            "lighting_jitter" => g.lighting_jitter = num(e)?,
            "shake_amplitudes" => g.shake_amplitudes = num_list(e)?,
            "source_kinds" => {
                g.source_kinds = list(e)
                    .into_iter()
                    .map(|s| SourceKind::from_name(s).ok_or_else(|| err(e, format!("unknown source kind {s:?}"))))
                    .collect::<Result<_>>()?
            }
            "width" => g.width = num(e)?,
            "height" => g.height = num(e)?,
            "fps" => g.fps = num(e)?,
            "duration_range" => match num_list::<f64>(e)?.as_slice() {
                [lo, hi] => g.duration_range = (*lo, *hi),
                _ => return Err(err(e, "expected `min, max` seconds")),
            },
            "camera_mode" => {
                g.camera_mode = match e.value.as_str() {
                    "fixed" => CameraMode::Fixed,
                    "tracking" => CameraMode::Tracking,
                    v => return Err(err(e, format!("unknown camera mode {v:?}"))),
                }
            }
            "limb_radius" => g.limb_radius = num(e)?,
            "flow_bound" => g.flow_bound = num(e)?,
            "test_fraction" => g.test_fraction = num(e)?,
            "global_seed" => g.global_seed = num(e)?,
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    Ok(())
}

fn apply_flow(sec: &Section, g: &mut GenerationConfig) -> Result<()> {
    let p = &mut g.flow_params;
    for e in &sec.entries {
        match e.key.as_str() {
            "smoothness_alpha" => p.smoothness_alpha = num(e)?,
            "iterations_per_level" => p.iterations_per_level = num(e)?,
            "pyramid_levels" => p.pyramid_levels = num(e)?,
            "pyramid_scale" => p.pyramid_scale = num(e)?,
            "warp_steps_per_level" => p.warp_steps_per_level = num(e)?,
            "damping" => p.damping = num(e)?,
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    Ok(())
}

fn parse_model(e: &Entry, hidden: usize, dropout: f64) -> Result<ModelKind> {
    match e.value.as_str() {
        "softmax_linear" => Ok(ModelKind::SoftmaxLinear),
        "mlp_1hidden" => Ok(ModelKind::Mlp {
            hidden_units: hidden,
            dropout_p: dropout,
        }),
        v => Err(err(e, format!("unknown model kind {v:?}"))),
    }
}

fn set_hidden(kind: &mut ModelKind, h: Option<usize>, p: Option<f64>) {
    if let ModelKind::Mlp {
        hidden_units,
        dropout_p,
    } = kind
    {
        *hidden_units = h.unwrap_or(*hidden_units);
        *dropout_p = p.unwrap_or(*dropout_p);
    }
}

fn apply_model(sec: &Section, x: &mut ExperimentConfig) -> Result<()> {
    let n = &mut x.network;
    let (mut hidden, mut flow_dropout, mut rgb_dropout) = (None, None, None);
    for e in &sec.entries {
        match e.key.as_str() {
            "flow_model" => n.flow_model = parse_model(e, 64, 0.8)?,
            "rgb_model" => n.rgb_model = parse_model(e, 64, 0.5)?,
            "hidden_units" => hidden = Some(num(e)?),
            "flow_dropout" => flow_dropout = Some(num(e)?),
            "rgb_dropout" => rgb_dropout = Some(num(e)?),
            "fusion_weights" => {
                let w: Vec<f64> = num_list(e)?;
                if w.len() != n.streams.len() {
                    return Err(err(e, format!("{} weights for {} streams", w.len(), n.streams.len())));
                }
                n.streams.iter_mut().zip(w).for_each(|(s, w)| s.weight = w);
            }
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    set_hidden(&mut n.flow_model, hidden, flow_dropout);
    set_hidden(&mut n.rgb_model, hidden, rgb_dropout);
    Ok(())
}

fn apply_train(sec: &Section, x: &mut ExperimentConfig) -> Result<()> {
    let t = &mut x.network.train;
    for e in &sec.entries {
        match e.key.as_str() {
            "batch_size" => t.batch_size = num(e)?,
            "momentum" => t.momentum = num(e)?,
            "learning_rate" => t.learning_rate = num(e)?,
            "lr_decay" => t.lr_decay = num(e)?,
            "lr_decay_at" => t.lr_decay_at = num(e)?,
            "epochs" => t.epochs = num(e)?,
            "seed" => t.seed = num(e)?,
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    Ok(())
}

fn apply_features(sec: &Section, x: &mut ExperimentConfig) -> Result<()> {
    let f = &mut x.network.features;
    for e in &sec.entries {
        match e.key.as_str() {
            "num_segments" => f.sampler.num_segments = num(e)?,
            "stack_length" => f.sampler.stack_length = num(e)?,
            "grid" => {
                f.flow.grid = num(e)?;
                f.rgb.grid = f.flow.grid;
            }
            "orientation_bins" => f.flow.orientation_bins = num(e)?,
            "train_draws" => f.train_draws = num(e)?,
            "seed" => f.seed = num(e)?,
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    Ok(())
}

/// Synthetic amounts are fractions of the available pool: `none`, `half`,
/// `all` or a number in `[0, 1]`.
fn parse_amount(e: &Entry, s: &str) -> Result<f64> {
    let v = match s {
        "none" => 0.0,
        "half" => 0.5,
        "all" => 1.0,
        _ => s.parse().map_err(|_| err(e, format!("bad synthetic amount {s:?}")))?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(err(e, format!("{s} outside [0, 1]")));
    }
    Ok(v)
}

fn apply_experiment(sec: &Section, x: &mut ExperimentConfig, base: &Path) -> Result<()> {
    let path = |v: &str| -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    for e in &sec.entries {
        match e.key.as_str() {
            "experiment_id" => {
                x.experiment_id = ExperimentId::from_name(&e.value)
                    .ok_or_else(|| err(e, format!("unknown experiment {:?}", e.value)))?
            }
            "dataset" => x.dataset = path(&e.value),
            "background_dataset" => x.background_dataset = Some(path(&e.value)),
            "synthetic_counts" => {
                x.synthetic_counts = list(e).into_iter().map(|s| parse_amount(e, s)).collect::<Result<_>>()?
            }
            "keep_fractions" => x.keep_fractions = num_list(e)?,
            "seeds" => x.seeds = num_list(e)?,
            "splits" => x.splits = num_list(e)?,
            "network" => {
                let kind =
                    NetworkKind::from_name(&e.value).ok_or_else(|| err(e, format!("unknown network {:?}", e.value)))?;
                x.set_network_kind(kind);
            }
            "subsample_seed" => x.subsample_seed = num(e)?,
            _ => return Err(unknown(e, &sec.name)),
        }
    }
    Ok(())
}

/// Reads a config file. Relative dataset paths resolve against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Sections: `[experiment]`, `[generation]`, `[background]` (generation keys
/// for the E1 background pool), `[flow]`, `[features]`, `[model]`, `[train]`.
/// `[model]` applies after `[experiment]` so fusion weights match the network.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let sections = parse_ini(text)?;
    let mut x = ExperimentConfig::default();
    let order = [
        "experiment",
        "generation",
        "background",
        "flow",
        "features",
        "model",
        "train",
    ];
    for s in &sections {
        if !order.contains(&s.name.as_str()) {
            return Err(Error::Config {
                line: s.line,
                msg: format!("unknown section [{}]", s.name),
            });
        }
    }
    for name in order {
        let Some(sec) = sections.iter().find(|s| s.name == name) else {
            continue;
        };
        match name {
            "experiment" => apply_experiment(sec, &mut x, base)?,
            "generation" => apply_generation(sec, &mut x.generation)?,
            "background" => apply_generation(sec, &mut x.background)?,
            "flow" => {
                apply_flow(sec, &mut x.generation)?;
                apply_flow(sec, &mut x.background)?;
            }
            "features" => apply_features(sec, &mut x)?,
            "model" => apply_model(sec, &mut x)?,
            "train" => apply_train(sec, &mut x)?,
            _ => unreachable!(),
        }
    }
    x.validate()?;
    Ok(x)
}
