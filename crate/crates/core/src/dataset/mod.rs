//! On-disk video datasets: records, manifests, splits and subsampling.

mod generate;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::flow::{decode_flow, EncodedFlow, FlowField, FlowParams};
use crate::pnm;
use crate::render::Frame;
use crate::seed;

pub use generate::{
    generate_dataset, plan_dataset, recompute_flow, tree_checksum, ClassSpec, GenerationConfig, VariantSpec, VideoPlan,
    DESK_FLOW_BOUND, GENERATOR_VERSION,
};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const INFO_FILE: &str = "dataset.cfg";
const MANIFEST_HEADER: &str = "video_id\tclass_name\tclass_index\tsource_kind\tnum_frames\tfps\tseed\trelative_path";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceKind {
    RealLike,
    Simplified,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::RealLike => "real_like",
            SourceKind::Simplified => "simplified",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "real_like" => Some(SourceKind::RealLike),
            "simplified" => Some(SourceKind::Simplified),
            _ => None,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoRecord {
    pub video_id: String,
    pub class_name: String,
    pub class_index: usize,
    pub source_kind: SourceKind,
    pub num_frames: usize,
    pub fps: u32,
    pub seed: u64,
    pub relative_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub records: Vec<VideoRecord>,
    pub flow_bound: f64,
    pub generator_version: String,
    pub global_seed: u64,
    pub flow_params: FlowParams,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.video_id.as_str()) {
                return Err(Error::data(format!("duplicate video_id {:?}", r.video_id)));
            }
            match self.classes.get(r.class_index) {
                Some(c) if *c == r.class_name => {}
                _ => {
                    return Err(Error::data(format!(
                        "{}: class {:?} does not match index {}",
                        r.video_id, r.class_name, r.class_index
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn record(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    pub fn has_kind(&self, kind: SourceKind) -> bool {
        self.records.iter().any(|r| r.source_kind == kind)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

fn field<'a>(parts: &[&'a str], i: usize, line: usize) -> Result<&'a str> {
    parts
        .get(i)
        .copied()
        .ok_or_else(|| Error::format(format!("manifest line {line}: missing field {i}")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(format!("manifest line {line}: bad {what} {s:?}")))
}

pub fn manifest_tsv(records: &[VideoRecord]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.video_id, r.class_name, r.class_index, r.source_kind, r.num_frames, r.fps, r.seed, r.relative_path
        ));
    }
    out
}

pub fn parse_manifest_tsv(text: &str) -> Result<Vec<VideoRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::format("manifest header missing or malformed"));
    }
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let ln = n + 2;
        if line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split('\t').collect();
        if p.len() != 8 {
            return Err(Error::format(format!(
                "manifest line {ln}: expected 8 fields, found {}",
                p.len()
            )));
        }
        let kind = field(&p, 3, ln)?;
        let rec = VideoRecord {
            video_id: field(&p, 0, ln)?.to_string(),
            class_name: field(&p, 1, ln)?.to_string(),
            class_index: parse_num(field(&p, 2, ln)?, "class_index", ln)?,
            source_kind: SourceKind::from_name(kind)
                .ok_or_else(|| Error::format(format!("manifest line {ln}: bad source_kind {kind:?}")))?,
            num_frames: parse_num(field(&p, 4, ln)?, "num_frames", ln)?,
            fps: parse_num(field(&p, 5, ln)?, "fps", ln)?,
            seed: parse_num(field(&p, 6, ln)?, "seed", ln)?,
            relative_path: field(&p, 7, ln)?.to_string(),
        };
        if !ids.insert(rec.video_id.clone()) {
            return Err(Error::format(format!(
                "manifest line {ln}: duplicate video_id {:?}",
                rec.video_id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

fn info_text(m: &DatasetManifest) -> String {
    let p = &m.flow_params;
    format!(
        "classes = {}\nflow_bound = {}\ngenerator_version = {}\nglobal_seed = {}\n\
         smoothness_alpha = {}\niterations_per_level = {}\npyramid_levels = {}\n\
         pyramid_scale = {}\nwarp_steps_per_level = {}\ndamping = {}\n",
        m.classes.join(","),
        m.flow_bound,
        m.generator_version,
        m.global_seed,
        p.smoothness_alpha,
        p.iterations_per_level,
        p.pyramid_levels,
        p.pyramid_scale,
        p.warp_steps_per_level,
        p.damping
    )
}

fn parse_info(text: &str) -> Result<(Vec<String>, f64, String, u64, FlowParams)> {
    let mut kv = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("{INFO_FILE} line {}: expected key = value", n + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .cloned()
            .ok_or_else(|| Error::format(format!("{INFO_FILE}: missing {k}")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format(format!("{INFO_FILE}: bad {k}")))
    };
    let int = |k: &str| -> Result<u64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format(format!("{INFO_FILE}: bad {k}")))
    };
    let classes = get("classes")?.split(',').map(str::to_string).collect();
    let params = FlowParams {
        smoothness_alpha: num("smoothness_alpha")?,
        iterations_per_level: int("iterations_per_level")? as usize,
        pyramid_levels: int("pyramid_levels")? as usize,
        pyramid_scale: num("pyramid_scale")?,
        warp_steps_per_level: int("warp_steps_per_level")? as usize,
        damping: num("damping")?,
    };
    Ok((
        classes,
        num("flow_bound")?,
        get("generator_version")?,
        int("global_seed")?,
        params,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write `manifest.tsv` and the `dataset.cfg` sidecar holding dataset-level fields.
pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    write_text(&root.join(INFO_FILE), &info_text(manifest))?;
    write_text(&root.join(MANIFEST_FILE), &manifest_tsv(&manifest.records))
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let (classes, flow_bound, generator_version, global_seed, flow_params) =
        parse_info(&read_text(&root.join(INFO_FILE))?)?;
    let records = parse_manifest_tsv(&read_text(&root.join(MANIFEST_FILE))?)?;
    let m = DatasetManifest {
        classes,
        records,
        flow_bound,
        generator_version,
        global_seed,
        flow_params,
    };
    m.validate()?;
    Ok(m)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    pnm::write_file(path, frame)
}

/// Read a binary PGM; anything but single-channel P5 is a format error.
pub fn read_frame(path: &Path) -> Result<Frame> {
    pnm::read_file(path, Some(1))
}

pub fn frame_path(root: &Path, rec: &VideoRecord, i: usize) -> PathBuf {
    root.join(&rec.relative_path).join(format!("frame_{i:05}.pgm"))
}

pub fn flow_paths(root: &Path, rec: &VideoRecord, i: usize) -> (PathBuf, PathBuf) {
    let dir = root.join(&rec.relative_path);
    (
        dir.join(format!("flow_x_{i:05}.pgm")),
        dir.join(format!("flow_y_{i:05}.pgm")),
    )
}

pub fn load_frames(root: &Path, rec: &VideoRecord) -> Result<Vec<Frame>> {
    (0..rec.num_frames)
        .map(|i| read_frame(&frame_path(root, rec, i)))
        .collect()
}

/// Decoded flow fields `0..num_frames-1`.
pub fn load_flows(root: &Path, rec: &VideoRecord, bound: f64) -> Result<Vec<FlowField>> {
    (0..rec.num_frames.saturating_sub(1))
        .map(|i| {
            let (px, py) = flow_paths(root, rec, i);
            decode_flow(&EncodedFlow {
                x_plane: read_frame(&px)?,
                y_plane: read_frame(&py)?,
                bound,
            })
        })
        .collect()
}

/// Every record's directory holds `num_frames` frames and `num_frames - 1` flow pairs.
pub fn check_integrity(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    for rec in &manifest.records {
        for i in 0..rec.num_frames {
            let p = frame_path(root, rec, i);
            if !p.is_file() {
                return Err(Error::data(format!("missing {}", p.display())));
            }
        }
        for i in 0..rec.num_frames.saturating_sub(1) {
            let (x, y) = flow_paths(root, rec, i);
            if !x.is_file() || !y.is_file() {
                return Err(Error::data(format!("missing flow pair {i} of {}", rec.video_id)));
            }
        }
        if frame_path(root, rec, rec.num_frames).exists() {
            return Err(Error::data(format!("{} has extra frames", rec.video_id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub split_id: u8,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

impl SplitSpec {
    pub fn train<'a>(&'a self, m: &'a DatasetManifest) -> impl Iterator<Item = &'a VideoRecord> + 'a {
        m.records.iter().filter(|r| self.train_ids.contains(&r.video_id))
    }

    pub fn test<'a>(&'a self, m: &'a DatasetManifest) -> impl Iterator<Item = &'a VideoRecord> + 'a {
        m.records.iter().filter(|r| self.test_ids.contains(&r.video_id))
    }
}

/// Records eligible for testing in `class`: real_like ones if the dataset has
/// any, otherwise all of them.
fn test_pool(m: &DatasetManifest, class: usize) -> Vec<&VideoRecord> {
    let real = m.has_kind(SourceKind::RealLike);
    m.records
        .iter()
        .filter(|r| r.class_index == class && (!real || r.source_kind == SourceKind::RealLike))
        .collect()
}

/// Three stratified train/test splits. Tests are drawn per class from the
/// real_like records (or from all records of a purely simplified dataset);
/// everything else trains.
pub fn make_splits(m: &DatasetManifest, test_fraction: f64, split_seed: u64) -> Result<Vec<SplitSpec>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test_fraction {test_fraction} outside (0, 1)")));
    }
    let mut pools = Vec::with_capacity(m.classes.len());
    for (c, name) in m.classes.iter().enumerate() {
        let pool = test_pool(m, c);
        if pool.len() < 2 {
            return Err(Error::data(format!(
                "class {name:?} has {} eligible videos; at least 2 are needed",
                pool.len()
            )));
        }
        pools.push(pool);
    }
    (1..=3u8)
        .map(|split_id| {
            let mut test_ids = BTreeSet::new();
            for (c, pool) in pools.iter().enumerate() {
                let n_test = ((test_fraction * pool.len() as f64).round() as usize).clamp(1, pool.len() - 1);
                let mut order: Vec<&VideoRecord> = pool.clone();
                let mut rng = seed::rng_for(split_seed, &[split_id as u64, seed::hash_str(&m.classes[c])]);
                order.shuffle(&mut rng);
                test_ids.extend(order[..n_test].iter().map(|r| r.video_id.clone()));
            }
            let train_ids = m
                .records
                .iter()
                .filter(|r| !test_ids.contains(&r.video_id))
                .map(|r| r.video_id.clone())
                .collect();
            Ok(SplitSpec {
                split_id,
                train_ids,
                test_ids,
            })
        })
        .collect()
}

/// Keep `round(keep_fraction * n)` training records of `kind` per class.
/// The kept set is a prefix of a seeded per-class permutation, so a smaller
/// fraction always keeps a subset of a larger one.
pub fn subsample_kind(
    split: &SplitSpec,
    m: &DatasetManifest,
    kind: SourceKind,
    keep_fraction: f64,
    sub_seed: u64,
) -> Result<SplitSpec> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::invalid(format!("keep_fraction {keep_fraction} outside [0, 1]")));
    }
    let mut out = split.clone();
    for (c, name) in m.classes.iter().enumerate() {
        let mut pool: Vec<&VideoRecord> = split
            .train(m)
            .filter(|r| r.class_index == c && r.source_kind == kind)
            .collect();
        let keep = (keep_fraction * pool.len() as f64).round() as usize;
        let mut rng = seed::rng_for(
            sub_seed,
            &[split.split_id as u64, seed::hash_str(name), seed::hash_str(kind.name())],
        );
        pool.shuffle(&mut rng);
        for r in &pool[keep..] {
            out.train_ids.remove(&r.video_id);
        }
    }
    Ok(out)
}

pub fn subsample_real(split: &SplitSpec, m: &DatasetManifest, keep_fraction: f64, sub_seed: u64) -> Result<SplitSpec> {
    subsample_kind(split, m, SourceKind::RealLike, keep_fraction, sub_seed)
}

pub fn split_path(root: &Path, split_id: u8) -> PathBuf {
    root.join(format!("split_{split_id}.tsv"))
}

/// Lines `video_id<TAB>train|test`, in manifest order.
pub fn write_split(root: &Path, m: &DatasetManifest, split: &SplitSpec) -> Result<()> {
    let mut text = String::new();
    for r in &m.records {
        let tag = if split.test_ids.contains(&r.video_id) {
            "test"
        } else if split.train_ids.contains(&r.video_id) {
            "train"
        } else {
            continue;
        };
        text.push_str(&format!("{}\t{tag}\n", r.video_id));
    }
    write_text(&split_path(root, split.split_id), &text)
}

pub fn read_split(root: &Path, split_id: u8) -> Result<SplitSpec> {
    if !(1..=3).contains(&split_id) {
        return Err(Error::invalid(format!("split {split_id} must be 1, 2 or 3")));
    }
    let path = split_path(root, split_id);
    let mut split = SplitSpec {
        split_id,
        train_ids: BTreeSet::new(),
        test_ids: BTreeSet::new(),
    };
    for (n, line) in read_text(&path)?.lines().enumerate() {
        match line.split_once('\t') {
            Some((id, "train")) => split.train_ids.insert(id.to_string()),
            Some((id, "test")) => split.test_ids.insert(id.to_string()),
            _ => {
                return Err(Error::format(format!(
                    "{} line {}: expected video_id<TAB>train|test",
                    path.display(),
                    n + 1
                )))
            }
        };
    }
    Ok(split)
}
