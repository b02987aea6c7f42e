//! Desk-scale analogues of the three studies: background effect (E1),
//! synthetic augmentation (E2), real-data reduction (E3), and a per-class
//! breakdown.

mod report;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{
    self, generate_dataset, read_manifest, read_split, subsample_kind, subsample_real, DatasetManifest,
    GenerationConfig, SourceKind, SplitSpec, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::tsn::{
    argmax, evaluate, extract_features, train_network, EvalResult, FeatureConfig, NetworkConfig, NetworkKind,
    VideoFeatures,
};

pub use report::{aligned, report_per_class, Aggregate, ExperimentReport, LiteratureValue, PerClassTable, RunRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    PerClass,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::PerClass => "per_class",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "E1" | "e1" => Some(ExperimentId::E1),
            "E2" | "e2" => Some(ExperimentId::E2),
            "E3" | "e3" => Some(ExperimentId::E3),
            "per_class" => Some(ExperimentId::PerClass),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: ExperimentId,
    /// Main dataset with real_like and simplified videos; generated from
    /// `generation` if it has no manifest yet.
    pub dataset: PathBuf,
    /// Real_like pool for the background-augmented streams of E1, generated
    /// from `background` when missing.
    pub background_dataset: Option<PathBuf>,
    pub generation: GenerationConfig,
    pub background: GenerationConfig,
    /// Fractions of each class's simplified training videos.
    pub synthetic_counts: Vec<f64>,
    pub keep_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub splits: Vec<u8>,
    /// Model, training and feature settings; its kind is used by `per_class`.
    pub network: NetworkConfig,
    pub subsample_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment_id: ExperimentId::E2,
            dataset: PathBuf::from("dataset"),
            background_dataset: None,
            generation: GenerationConfig::default(),
            background: GenerationConfig {
                source_kinds: vec![SourceKind::RealLike],
                videos_per_class: 20,
                global_seed: 1,
                ..GenerationConfig::default()
            },
            synthetic_counts: vec![0.5, 1.0],
            keep_fractions: vec![1.0, 0.5, 0.1, 0.0],
            seeds: vec![0, 1, 2],
            splits: vec![1, 2, 3],
            network: NetworkConfig::new(NetworkKind::Net2),
            subsample_seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn set_network_kind(&mut self, kind: NetworkKind) {
        self.network.kind = kind;
        self.network.streams = kind.default_streams();
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.background.validate()?;
        self.network.validate()?;
        let unit = |v: &[f64], what: &str| -> Result<()> {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("{what} must lie in [0, 1]")));
            }
            Ok(())
        };
        unit(&self.synthetic_counts, "synthetic_counts")?;
        unit(&self.keep_fractions, "keep_fractions")?;
        if self.seeds.is_empty() || self.splits.is_empty() {
            return Err(Error::invalid("seeds and splits must be non-empty"));
        }
        if self.splits.iter().any(|s| !(1..=3).contains(s)) {
            return Err(Error::invalid("splits must be 1, 2 or 3"));
        }
        match self.experiment_id {
            ExperimentId::E3 if self.network.kind != NetworkKind::Net2 => Err(Error::invalid(
                "E3 runs net2 for kept real data and net3 for none; set network = net2",
            )),
            ExperimentId::E1 if self.synthetic_counts.first().is_none_or(|&n| n <= 0.0 || n > 0.5) => Err(
                Error::invalid("E1 takes N from the first synthetic count, which must lie in (0, 0.5]"),
            ),
            _ => Ok(()),
        }
    }

    fn network_of(&self, kind: NetworkKind) -> NetworkConfig {
        let mut n = self.network.clone();
        if n.kind != kind {
            n.kind = kind;
            n.streams = kind.default_streams();
        }
        n
    }
}

/// A dataset with its splits and precomputed snippet features.
pub struct Workbench {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub splits: Vec<SplitSpec>,
    features: HashMap<String, VideoFeatures>,
}

impl Workbench {
    pub fn open(root: &Path, features: &FeatureConfig) -> Result<Self> {
        let manifest = read_manifest(root)?;
        let splits = (1..=3u8)
            .filter(|&s| dataset::split_path(root, s).exists())
            .map(|s| read_split(root, s))
            .collect::<Result<Vec<_>>>()?;
        info!(
            "extracting features for {} videos in {}",
            manifest.records.len(),
            root.display()
        );
        let feats = extract_features(root, &manifest, &manifest.records, features)?;
        Ok(Workbench {
            root: root.to_path_buf(),
            features: feats.into_iter().map(|v| (v.video_id.clone(), v)).collect(),
            manifest,
            splits,
        })
    }

    pub fn split(&self, id: u8) -> Result<&SplitSpec> {
        self.splits
            .iter()
            .find(|s| s.split_id == id)
            .ok_or_else(|| Error::data(format!("{} has no split {id}", self.root.display())))
    }

    pub fn features(&self, video_id: &str) -> &VideoFeatures {
        &self.features[video_id]
    }

    /// Fingerprint of what the dataset was generated from.
    fn fingerprint(&self) -> String {
        let m = &self.manifest;
        format!(
            "{}|{}|{}|{:?}",
            m.generator_version,
            m.global_seed,
            m.records.len(),
            m.flow_params
        )
    }
}

/// Which synthetic videos feed the augmented streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticSource {
    /// Simplified training videos of the split, subsampled per class.
    Simplified,
    /// Real_like videos from a separate background dataset, this many per class.
    Background { per_class: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub configuration: String,
    pub network: NetworkConfig,
    pub split: u8,
    pub seed: u64,
    pub keep_fraction: f64,
    pub synthetic_fraction: f64,
    pub source: SyntheticSource,
    pub subsample_seed: u64,
}

impl RunSpec {
    pub fn config_hash(&self, bench: &Workbench) -> String {
        let mut h = Sha256::new();
        let text = format!(
            "{:?}|{}|{}|{:?}|{}|{}|{}",
            self.network,
            self.keep_fraction,
            self.synthetic_fraction,
            self.source,
            self.split,
            self.subsample_seed,
            bench.fingerprint()
        );
        h.update(text.as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Trains the run's network and evaluates it on the split's test videos.
pub fn execute_run(bench: &Workbench, background: Option<&Workbench>, spec: &RunSpec) -> Result<(RunRow, EvalResult)> {
    let m = &bench.manifest;
    let sub_seed = seed::derive_seed(spec.subsample_seed, &[spec.seed]);
    let split = bench.split(spec.split)?;
    let kept = subsample_real(split, m, spec.keep_fraction, sub_seed)?;
    let real: Vec<&VideoFeatures> = kept
        .train(m)
        .filter(|r| r.source_kind == SourceKind::RealLike)
        .map(|r| bench.features(&r.video_id))
        .collect();
    let synthetic: Vec<&VideoFeatures> = match spec.source {
        SyntheticSource::Simplified => {
            let s = subsample_kind(&kept, m, SourceKind::Simplified, spec.synthetic_fraction, sub_seed)?;
            s.train(m)
                .filter(|r| r.source_kind == SourceKind::Simplified)
                .map(|r| bench.features(&r.video_id))
                .collect()
        }
        SyntheticSource::Background { per_class } => {
            let bg = background.ok_or_else(|| Error::data("background dataset required"))?;
            background_pool(bg, m, per_class, sub_seed)?
        }
    };
    let test: Vec<&VideoFeatures> = split.test(m).map(|r| bench.features(&r.video_id)).collect();
    let (net, _) = train_network(&spec.network, &real, &synthetic, m.num_classes())?;
    let mut pairs = Vec::with_capacity(test.len());
    let mut stream_correct = vec![0usize; net.streams.len()];
    for v in &test {
        let p = net.predict(v)?;
        for (c, s) in stream_correct.iter_mut().zip(&p.stream_scores) {
            *c += (argmax(s) == v.class_index) as usize;
        }
        pairs.push((v.class_index, p.class));
    }
    let eval = evaluate(&pairs, m.num_classes())?;
    let row = RunRow {
        configuration: spec.configuration.clone(),
        config_hash: spec.config_hash(bench),
        seed: spec.seed,
        split: spec.split,
        keep_fraction: spec.keep_fraction,
        synthetic_fraction: spec.synthetic_fraction,
        real_videos: real.len(),
        synthetic_videos: synthetic.len(),
        streams: net
            .streams
            .iter()
            .zip(&stream_correct)
            .map(|((d, _), &c)| (d.name.clone(), c as f64 / test.len() as f64))
            .collect(),
        fused_accuracy: eval.accuracy,
    };
    Ok((row, eval))
}

/// `per_class` videos of each main-dataset class drawn from the background set.
fn background_pool<'a>(
    bg: &'a Workbench,
    main: &DatasetManifest,
    per_class: usize,
    sub_seed: u64,
) -> Result<Vec<&'a VideoFeatures>> {
    if bg.manifest.classes != main.classes {
        return Err(Error::data("background dataset classes differ from the main dataset"));
    }
    let mut out = Vec::new();
    for (c, name) in main.classes.iter().enumerate() {
        let mut pool: Vec<&VideoFeatures> = bg
            .manifest
            .records
            .iter()
            .filter(|r| r.class_index == c)
            .map(|r| bg.features(&r.video_id))
            .collect();
        if pool.len() < per_class {
            return Err(Error::data(format!(
                "background class {name:?} has {} videos; {per_class} needed",
                pool.len()
            )));
        }
        pool.shuffle(&mut seed::rng_for(sub_seed, &[seed::hash_str(name)]));
        out.extend(&pool[..per_class]);
    }
    Ok(out)
}

fn execute_all(
    bench: &Workbench,
    background: Option<&Workbench>,
    specs: &[RunSpec],
) -> Result<Vec<(RunRow, EvalResult)>> {
    specs
        .par_iter()
        .map(|s| {
            let r = execute_run(bench, background, s)?;
            info!(
                "{} seed {} split {}: fused {:.3}",
                s.configuration, s.seed, s.split, r.0.fused_accuracy
            );
            Ok(r)
        })
        .collect()
}

fn pct_label(f: f64) -> String {
    format!("{}%", (f * 100.0).round())
}

fn grid_specs(cfg: &ExperimentConfig, confs: &[(String, NetworkKind, f64, f64, SyntheticSource)]) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for (label, kind, keep, syn, source) in confs {
        for &seed in &cfg.seeds {
            for &split in &cfg.splits {
                let mut network = cfg.network_of(*kind);
                network.train.seed = seed;
                specs.push(RunSpec {
                    configuration: label.clone(),
                    network,
                    split,
                    seed,
                    keep_fraction: *keep,
                    synthetic_fraction: *syn,
                    source: *source,
                    subsample_seed: cfg.subsample_seed,
                });
            }
        }
    }
    specs
}

const DESK_NOTE: &str =
    "desk scale: real = real_like renders (textured background, textured character, camera shake); \
synthetic = simplified renders (blank background, flat character); only trends are comparable to literature values";

/// Simplified training videos per class in the first configured split.
fn simplified_per_class(bench: &Workbench, cfg: &ExperimentConfig) -> Result<usize> {
    let split = bench.split(cfg.splits[0])?;
    let m = &bench.manifest;
    Ok(split
        .train(m)
        .filter(|r| r.source_kind == SourceKind::Simplified && r.class_index == 0)
        .count())
}

pub fn e1_configurations(
    cfg: &ExperimentConfig,
    simplified: usize,
) -> Vec<(String, NetworkKind, f64, f64, SyntheticSource)> {
    let frac = cfg.synthetic_counts[0];
    let n = (frac * simplified as f64).round() as usize;
    vec![
        (
            format!("net1+{n}bg"),
            NetworkKind::Net1,
            1.0,
            frac,
            SyntheticSource::Background { per_class: n },
        ),
        (
            format!("net2+{n}simplified"),
            NetworkKind::Net2,
            1.0,
            frac,
            SyntheticSource::Simplified,
        ),
        (
            format!("net2+{}simplified", 2 * n),
            NetworkKind::Net2,
            1.0,
            2.0 * frac,
            SyntheticSource::Simplified,
        ),
    ]
}

pub fn run_e1_background_effect(
    cfg: &ExperimentConfig,
    bench: &Workbench,
    background: &Workbench,
) -> Result<ExperimentReport> {
    let confs = e1_configurations(cfg, simplified_per_class(bench, cfg)?);
    let rows = execute_all(bench, Some(background), &grid_specs(cfg, &confs))?;
    Ok(ExperimentReport {
        experiment: ExperimentId::E1,
        notes: vec![
            DESK_NOTE.into(),
            "N and 2N count synthetic videos per class; background videos come from a separate real_like set".into(),
        ],
        rows: rows.into_iter().map(|r| r.0).collect(),
        literature: vec![
            LiteratureValue::new("Network-1 + 4000 background synthetic", "HMDB-51", 72.3),
            LiteratureValue::new("Network-2 + 4000 simplified synthetic", "HMDB-51", 71.8),
            LiteratureValue::new("Network-2 + 8000 simplified synthetic", "HMDB-51", 72.4),
        ],
        per_class: None,
    })
}

pub fn e2_configurations(cfg: &ExperimentConfig) -> Vec<(String, NetworkKind, f64, f64, SyntheticSource)> {
    let mut v = vec![(
        "real only".to_string(),
        NetworkKind::Net2,
        1.0,
        0.0,
        SyntheticSource::Simplified,
    )];
    for &s in &cfg.synthetic_counts {
        v.push((
            format!("real+{} synthetic", pct_label(s)),
            NetworkKind::Net2,
            1.0,
            s,
            SyntheticSource::Simplified,
        ));
    }
    v
}

pub fn run_e2_synthetic_augmentation(cfg: &ExperimentConfig, bench: &Workbench) -> Result<ExperimentReport> {
    let rows = execute_all(bench, None, &grid_specs(cfg, &e2_configurations(cfg)))?;
    Ok(ExperimentReport {
        experiment: ExperimentId::E2,
        notes: vec![DESK_NOTE.into()],
        rows: rows.into_iter().map(|r| r.0).collect(),
        literature: vec![
            LiteratureValue::new("Real only", "HMDB-38", 71.8),
            LiteratureValue::new("Half synthetic + real", "HMDB-38", 73.66),
            LiteratureValue::new("All synthetic + real", "HMDB-38", 74.62),
            LiteratureValue::new("Real only", "UCF-25", 96.66),
            LiteratureValue::new("Half synthetic + real", "UCF-25", 97.5),
            LiteratureValue::new("All synthetic + real", "UCF-25", 97.8),
        ],
        per_class: None,
    })
}

pub fn e3_label(keep: f64, syn: f64) -> String {
    format!("{} real + {} synthetic", pct_label(keep), pct_label(syn))
}

/// Keep fractions crossed with {none} and the synthetic counts; no real data
/// runs the flow-only network and skips the empty "no synthetic" cell.
pub fn e3_configurations(cfg: &ExperimentConfig) -> Vec<(String, NetworkKind, f64, f64, SyntheticSource)> {
    let mut v = Vec::new();
    for &keep in &cfg.keep_fractions {
        for syn in std::iter::once(0.0).chain(cfg.synthetic_counts.iter().copied()) {
            if keep == 0.0 && syn == 0.0 {
                continue;
            }
            let kind = if keep > 0.0 {
                NetworkKind::Net2
            } else {
                NetworkKind::Net3
            };
            v.push((e3_label(keep, syn), kind, keep, syn, SyntheticSource::Simplified));
        }
    }
    v
}

pub fn run_e3_real_reduction(cfg: &ExperimentConfig, bench: &Workbench) -> Result<ExperimentReport> {
    let rows = execute_all(bench, None, &grid_specs(cfg, &e3_configurations(cfg)))?;
    let t = |row: &str, col: &str, v: f64| LiteratureValue::new(&format!("{row}, {col}"), "UCF-25", v);
    Ok(ExperimentReport {
        experiment: ExperimentId::E3,
        notes: vec![
            DESK_NOTE.into(),
            "0% real runs the single synthetic-trained flow stream, tested on real_like videos".into(),
        ],
        rows: rows.into_iter().map(|r| r.0).collect(),
        literature: vec![
            t("100% real", "real only", 96.66),
            t("100% real", "+2500 synthetic", 97.5),
            t("100% real", "+5000 synthetic", 97.8),
            t("50% real", "real only", 96.34),
            t("50% real", "+2500 synthetic", 97.02),
            t("50% real", "+5000 synthetic", 97.7),
            t("10% real", "real only", 77.4),
            t("10% real", "+2500 synthetic", 81.69),
            t("10% real", "+5000 synthetic", 85.41),
            t("0% real", "+2500 synthetic", 30.71),
            t("0% real", "+5000 synthetic", 52.7),
        ],
        per_class: None,
    })
}

/// Trains the configured network with all synthetic data and pools the
/// confusion matrices of every run into one per-class table.
pub fn run_per_class(cfg: &ExperimentConfig, bench: &Workbench) -> Result<ExperimentReport> {
    let kind = cfg.network.kind;
    let (keep, syn) = if kind == NetworkKind::Net3 {
        (0.0, 1.0)
    } else {
        (1.0, 1.0)
    };
    let confs = [(kind.name().to_string(), kind, keep, syn, SyntheticSource::Simplified)];
    if kind == NetworkKind::Net1 {
        return Err(Error::invalid("per_class supports net2 and net3"));
    }
    let results = execute_all(bench, None, &grid_specs(cfg, &confs))?;
    let n = bench.manifest.num_classes();
    let mut pairs = Vec::new();
    for (_, e) in &results {
        for (t, row) in e.confusion.iter().enumerate() {
            for (p, &k) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((t, p), k));
            }
        }
    }
    let pooled = evaluate(&pairs, n)?;
    Ok(ExperimentReport {
        experiment: ExperimentId::PerClass,
        notes: vec![DESK_NOTE.into(), "per-class accuracy pooled over all runs".into()],
        rows: results.into_iter().map(|r| r.0).collect(),
        literature: Vec::new(),
        per_class: Some(report_per_class(&pooled, &bench.manifest.classes)),
    })
}

/// Generates `dir` from `gen` unless it already holds a dataset.
pub fn ensure_dataset(dir: &Path, gen: &GenerationConfig) -> Result<()> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(());
    }
    info!("generating dataset in {}", dir.display());
    generate_dataset(gen, dir).map(|_| ())
}

/// Runs the configured experiment end to end, generating datasets as needed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    ensure_dataset(&cfg.dataset, &cfg.generation)?;
    let bench = Workbench::open(&cfg.dataset, &cfg.network.features)?;
    match cfg.experiment_id {
        ExperimentId::E1 => {
            let dir = cfg
                .background_dataset
                .as_ref()
                .ok_or_else(|| Error::invalid("E1 needs background_dataset"))?;
            ensure_dataset(dir, &cfg.background)?;
            let bg = Workbench::open(dir, &cfg.network.features)?;
            run_e1_background_effect(cfg, &bench, &bg)
        }
        ExperimentId::E2 => run_e2_synthetic_augmentation(cfg, &bench),
        ExperimentId::E3 => run_e3_real_reduction(cfg, &bench),
        ExperimentId::PerClass => run_per_class(cfg, &bench),
    }
}
