//! Temporal-segment classification: sparse snippet sampling, handcrafted
//! per-snippet features, per-stream classifiers, average consensus and
//! weighted late fusion.

mod checkpoint;
mod features;
mod model;
mod network;
mod sampler;

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{self, DatasetManifest, SourceKind, VideoRecord};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::render::Frame;
use crate::seed;

pub use checkpoint::{
    checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, write_loss_csv, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use features::{flow_features, orientation_bin, rgb_features, FeatureSpec, StreamKind, COLOR_BINS, NEAR_ZERO_PX};
pub use model::{softmax, train_stream, ModelKind, StreamModel, TrainConfig};
pub use network::{
    train_network, DataSource, NetworkConfig, NetworkKind, NetworkPrediction, StreamDef, TrainedNetwork,
};
pub use sampler::{sample_segments, segment_bounds, SamplingMode, SegmentSampler};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(pub Vec<f64>);

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("fusion weights must be finite and non-negative"));
        }
        if !self.0.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid("at least one fusion weight must be positive"));
        }
        Ok(())
    }
}

/// Weighted mean of per-stream score vectors and its argmax.
pub fn fuse_scores(scores: &[Vec<f64>], weights: &FusionWeights) -> Result<(Vec<f64>, usize)> {
    weights.validate()?;
    if scores.is_empty() || scores.len() != weights.0.len() {
        return Err(Error::invalid(format!(
            "{} score vectors for {} weights",
            scores.len(),
            weights.0.len()
        )));
    }
    let c = scores[0].len();
    if scores.iter().any(|s| s.len() != c) {
        return Err(Error::invalid("score vectors differ in length"));
    }
    let total: f64 = weights.0.iter().sum();
    let mut fused = vec![0.0; c];
    for (s, &w) in scores.iter().zip(&weights.0) {
        fused.iter_mut().zip(s).for_each(|(f, x)| *f += w * x);
    }
    fused.iter_mut().for_each(|f| *f /= total);
    let k = argmax(&fused);
    Ok((fused, k))
}

/// Average of per-snippet softmax scores.
pub fn consensus(model: &StreamModel, snippets: &[Vec<f64>]) -> Result<Vec<f64>> {
    if snippets.is_empty() {
        return Err(Error::invalid("no snippets to score"));
    }
    let mut mean = vec![0.0; model.num_classes];
    for x in snippets {
        mean.iter_mut().zip(model.scores(x)?).for_each(|(m, p)| *m += p);
    }
    let n = snippets.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Snippet geometry and the feature specs of both stream kinds. The default
/// uses 5 segments of 10-flow stacks, which desk-scale clips of 2-3 s afford.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sampler: SegmentSampler,
    pub flow: FeatureSpec,
    pub rgb: FeatureSpec,
    /// Random snippet sets drawn per training video.
    pub train_draws: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sampler: SegmentSampler {
                num_segments: 5,
                mode: SamplingMode::TestCenter,
                stack_length: 10,
            },
            flow: FeatureSpec::flow(),
            rgb: FeatureSpec::rgb(),
            train_draws: 4,
            seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn spec(&self, kind: StreamKind) -> &FeatureSpec {
        match kind {
            StreamKind::Flow => &self.flow,
            StreamKind::Rgb => &self.rgb,
        }
    }

    pub fn feature_len(&self, kind: StreamKind, channels: usize) -> usize {
        self.spec(kind).len(self.sampler.stack_length, channels)
    }
}

/// Features of one snippet per start for the given stream. A snippet starting
/// at `s` stacks flows `s..s+L` and takes frame `s` for appearance.
pub fn snippet_features(
    frames: &[Frame],
    flows: &[FlowField],
    starts: &[usize],
    cfg: &FeatureConfig,
    kind: StreamKind,
) -> Result<Vec<Vec<f64>>> {
    let l = cfg.sampler.stack_length;
    starts
        .iter()
        .map(|&s| match kind {
            StreamKind::Flow => {
                let stack = flows
                    .get(s..s + l)
                    .ok_or_else(|| Error::invalid(format!("snippet at {s} runs past {} flows", flows.len())))?;
                flow_features(stack, &cfg.flow)
            }
            StreamKind::Rgb => {
                let f = frames
                    .get(s)
                    .ok_or_else(|| Error::invalid(format!("snippet at {s} past {} frames", frames.len())))?;
                rgb_features(f, &cfg.rgb)
            }
        })
        .collect()
}

fn starts_for(num_flows: usize, cfg: &FeatureConfig, mode: SamplingMode, seed_value: u64) -> Result<Vec<usize>> {
    sample_segments(num_flows, &cfg.sampler.with_mode(mode), seed_value)
}

/// Consensus scores of `model` on a decoded video with centered snippets.
pub fn predict_video(
    model: &StreamModel,
    kind: StreamKind,
    frames: &[Frame],
    flows: &[FlowField],
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    let starts = starts_for(flows.len(), cfg, SamplingMode::TestCenter, 0)?;
    consensus(model, &snippet_features(frames, flows, &starts, cfg, kind)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnippetSet {
    pub flow: Vec<Vec<f64>>,
    pub rgb: Vec<Vec<f64>>,
}

impl SnippetSet {
    pub fn get(&self, kind: StreamKind) -> &[Vec<f64>] {
        match kind {
            StreamKind::Flow => &self.flow,
            StreamKind::Rgb => &self.rgb,
        }
    }
}

/// Precomputed snippet features of one video: `train_draws` random snippet
/// sets for training and the centered set for testing.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub class_index: usize,
    pub source_kind: SourceKind,
    pub train: SnippetSet,
    pub test: SnippetSet,
}

pub fn video_features(
    rec: &VideoRecord,
    frames: &[Frame],
    flows: &[FlowField],
    cfg: &FeatureConfig,
) -> Result<VideoFeatures> {
    let mut train = SnippetSet::default();
    for r in 0..cfg.train_draws {
        let s = seed::derive_seed(cfg.seed, &[rec.seed, r as u64]);
        let starts = starts_for(flows.len(), cfg, SamplingMode::TrainRandom, s)?;
        train
            .flow
            .extend(snippet_features(frames, flows, &starts, cfg, StreamKind::Flow)?);
        train
            .rgb
            .extend(snippet_features(frames, flows, &starts, cfg, StreamKind::Rgb)?);
    }
    let starts = starts_for(flows.len(), cfg, SamplingMode::TestCenter, 0)?;
    let test = SnippetSet {
        flow: snippet_features(frames, flows, &starts, cfg, StreamKind::Flow)?,
        rgb: snippet_features(frames, flows, &starts, cfg, StreamKind::Rgb)?,
    };
    Ok(VideoFeatures {
        video_id: rec.video_id.clone(),
        class_index: rec.class_index,
        source_kind: rec.source_kind,
        train,
        test,
    })
}

/// Loads every record from disk and extracts its features, in parallel.
pub fn extract_features<'a>(
    root: &Path,
    manifest: &DatasetManifest,
    records: impl IntoIterator<Item = &'a VideoRecord>,
    cfg: &FeatureConfig,
) -> Result<Vec<VideoFeatures>> {
    let recs: Vec<&VideoRecord> = records.into_iter().collect();
    recs.par_iter()
        .map(|rec| {
            let frames = dataset::load_frames(root, rec)?;
            let flows = dataset::load_flows(root, rec, manifest.flow_bound)?;
            video_features(rec, &frames, &flows, cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Accuracy per class in manifest order; `None` where a class has no test videos.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Scores `(true class, predicted class)` pairs.
pub fn evaluate(pairs: &[(usize, usize)], num_classes: usize) -> Result<EvalResult> {
    if pairs.is_empty() {
        return Err(Error::data("evaluation needs a nonempty test set"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for &(t, p) in pairs {
        if t >= num_classes || p >= num_classes {
            return Err(Error::invalid(format!("class index beyond {num_classes} classes")));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(EvalResult {
        accuracy: correct as f64 / pairs.len() as f64,
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fusion_of_identical_streams() {
        let s = vec![0.2, 0.5, 0.3];
        let (f, k) = fuse_scores(&[s.clone(), s.clone()], &FusionWeights(vec![3.0, 0.5])).unwrap();
        f.iter().zip(&s).for_each(|(a, b)| assert!((a - b).abs() < 1e-15));
        assert_eq!(k, 1);
    }

    #[test]
    fn fusion_two_to_one() {
        let (f, k) = fuse_scores(&[vec![0.6, 0.4], vec![0.0, 1.0]], &FusionWeights(vec![2.0, 1.0])).unwrap();
        assert!((f[0] - 0.4).abs() < 1e-15 && (f[1] - 0.6).abs() < 1e-15);
        assert_eq!(k, 1);
    }

    #[test]
    fn network1_weights_match_brute_force() {
        let mut rng = seed::rng(2);
        let streams: Vec<Vec<f64>> = (0..4)
            .map(|_| softmax(&(0..6).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>()))
            .collect();
        let w = [2.0, 1.0, 1.0, 0.5];
        let (f, _) = fuse_scores(&streams, &FusionWeights(w.to_vec())).unwrap();
        for c in 0..6 {
            let want = (2.0 * streams[0][c] + streams[1][c] + streams[2][c] + 0.5 * streams[3][c]) / 4.5;
            assert!((f[c] - want).abs() < 1e-15);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let scaled = FusionWeights(w.iter().map(|x| x * 7.5).collect());
        assert_eq!(fuse_scores(&streams, &scaled).unwrap().1, argmax(&f));
    }

    #[test]
    fn fusion_errors() {
        let s = vec![vec![0.5, 0.5]];
        assert!(fuse_scores(&s, &FusionWeights(vec![0.0])).is_err());
        assert!(fuse_scores(&s, &FusionWeights(vec![1.0, 1.0])).is_err());
        assert!(fuse_scores(&[vec![1.0], vec![0.5, 0.5]], &FusionWeights(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn evaluate_bookkeeping() {
        let oracle: Vec<(usize, usize)> = (0..12).map(|i| (i % 4, i % 4)).collect();
        let r = evaluate(&oracle, 4).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|&a| a == Some(1.0)));

        let constant: Vec<(usize, usize)> = (0..12).map(|i| (i % 4, 2)).collect();
        let r = evaluate(&constant, 4).unwrap();
        assert!((r.accuracy - 0.25).abs() < 1e-15);
        for row in &r.confusion {
            assert_eq!(row.iter().sum::<usize>(), 3);
        }
        assert!(evaluate(&[], 4).is_err());
    }

    fn toy_video(n: usize, s: u64) -> (Vec<Frame>, Vec<FlowField>) {
        let mut rng = seed::rng(s);
        let frames = (0..n)
            .map(|_| Frame::gray(16, 12, (0..16 * 12).map(|_| rng.random()).collect()).unwrap())
            .collect();
        let flows = (1..n)
            .map(|_| {
                let mut g = || -> Vec<f64> { (0..16 * 12).map(|_| rng.random_range(-2.0..2.0)).collect() };
                FlowField::new(16, 12, g(), g()).unwrap()
            })
            .collect();
        (frames, flows)
    }

    #[test]
    fn consensus_is_mean_of_snippet_scores() {
        let (frames, flows) = toy_video(31, 1);
        let cfg = FeatureConfig {
            sampler: SegmentSampler::default(),
            ..FeatureConfig::default()
        };
        let dim = cfg.feature_len(StreamKind::Flow, 1);
        let mut model = StreamModel::new(ModelKind::SoftmaxLinear, dim, 4, 0).unwrap();
        let mut rng = seed::rng(5);
        model.params.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let got = predict_video(&model, StreamKind::Flow, &frames, &flows, &cfg).unwrap();

        let starts = sample_segments(30, &cfg.sampler, 0).unwrap();
        let mut want = vec![0.0; 4];
        for s in starts {
            let p = model
                .scores(&flow_features(&flows[s..s + 5], &cfg.flow).unwrap())
                .unwrap();
            want.iter_mut().zip(p).for_each(|(w, x)| *w += x / 3.0);
        }
        got.iter().zip(&want).for_each(|(a, b)| assert!((a - b).abs() < 1e-14));
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-6);

        let single = FeatureConfig {
            sampler: SegmentSampler {
                num_segments: 1,
                ..cfg.sampler
            },
            ..cfg
        };
        let one = predict_video(&model, StreamKind::Flow, &frames, &flows, &single).unwrap();
        let s = sample_segments(30, &single.sampler, 0).unwrap()[0];
        assert_eq!(
            one,
            model
                .scores(&flow_features(&flows[s..s + 5], &cfg.flow).unwrap())
                .unwrap()
        );
    }

    #[test]
    fn short_clip_is_rejected() {
        let (frames, flows) = toy_video(40, 2);
        let cfg = FeatureConfig::default();
        let model = StreamModel::new(ModelKind::SoftmaxLinear, cfg.feature_len(StreamKind::Flow, 1), 3, 0).unwrap();
        assert!(predict_video(&model, StreamKind::Flow, &frames, &flows, &cfg).is_err());
    }

    #[test]
    fn video_features_have_expected_shapes() {
        let (frames, flows) = toy_video(61, 3);
        let rec = VideoRecord {
            video_id: "x_r0000".into(),
            class_name: "x".into(),
            class_index: 0,
            source_kind: SourceKind::RealLike,
            num_frames: 61,
            fps: 30,
            seed: 9,
            relative_path: "videos/x_r0000".into(),
        };
        let cfg = FeatureConfig::default();
        let v = video_features(&rec, &frames, &flows, &cfg).unwrap();
        assert_eq!(v.train.flow.len(), 20);
        assert_eq!(v.train.rgb.len(), 20);
        assert_eq!(v.test.flow.len(), 5);
        assert_eq!(v.test.flow[0].len(), cfg.feature_len(StreamKind::Flow, 1));
        assert_eq!(v.test.rgb[0].len(), cfg.feature_len(StreamKind::Rgb, 1));
        assert_eq!(v, video_features(&rec, &frames, &flows, &cfg).unwrap());
    }
}
