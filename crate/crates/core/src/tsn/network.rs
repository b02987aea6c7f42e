use log::debug;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::render::Frame;
use crate::seed;

use super::{
    consensus, fuse_scores, predict_video, train_stream, FeatureConfig, FusionWeights, ModelKind, StreamKind,
    StreamModel, TrainConfig, VideoFeatures,
};

/// Which training videos feed a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataSource {
    Real,
    Synthetic,
    RealAndSynthetic,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            DataSource::Real => "real",
            DataSource::Synthetic => "synthetic",
            DataSource::RealAndSynthetic => "real+synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamDef {
    pub name: String,
    pub kind: StreamKind,
    pub source: DataSource,
    pub weight: f64,
}

impl StreamDef {
    fn new(name: &str, kind: StreamKind, source: DataSource, weight: f64) -> Self {
        StreamDef {
            name: name.into(),
            kind,
            source,
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    Net1,
    Net2,
    Net3,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Net1 => "net1",
            NetworkKind::Net2 => "net2",
            NetworkKind::Net3 => "net3",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "net1" => Some(NetworkKind::Net1),
            "net2" => Some(NetworkKind::Net2),
            "net3" => Some(NetworkKind::Net3),
            _ => None,
        }
    }

    /// Net1: four streams, augmented flow weighted 2.0 and augmented
    /// appearance 0.5. Net2: three equally weighted streams. Net3: one flow
    /// stream trained on synthetic videos alone.
    pub fn default_streams(self) -> Vec<StreamDef> {
        use DataSource::*;
        use StreamKind::*;
        match self {
            NetworkKind::Net1 => vec![
                StreamDef::new("real_syn_flow", Flow, RealAndSynthetic, 2.0),
                StreamDef::new("real_flow", Flow, Real, 1.0),
                StreamDef::new("real_rgb", Rgb, Real, 1.0),
                StreamDef::new("syn_real_rgb", Rgb, RealAndSynthetic, 0.5),
            ],
            NetworkKind::Net2 => vec![
                StreamDef::new("real_flow", Flow, Real, 1.0),
                StreamDef::new("real_rgb", Rgb, Real, 1.0),
                StreamDef::new("real_syn_flow", Flow, RealAndSynthetic, 1.0),
            ],
            NetworkKind::Net3 => vec![StreamDef::new("syn_flow", Flow, Synthetic, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub kind: NetworkKind,
    pub streams: Vec<StreamDef>,
    pub flow_model: ModelKind,
    pub rgb_model: ModelKind,
    pub train: TrainConfig,
    pub features: FeatureConfig,
}

impl NetworkConfig {
    pub fn new(kind: NetworkKind) -> Self {
        NetworkConfig {
            kind,
            streams: kind.default_streams(),
            flow_model: ModelKind::SoftmaxLinear,
            rgb_model: ModelKind::SoftmaxLinear,
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
        }
    }

    pub fn weights(&self) -> FusionWeights {
        FusionWeights(self.streams.iter().map(|s| s.weight).collect())
    }

    pub fn model_for(&self, kind: StreamKind) -> ModelKind {
        match kind {
            StreamKind::Flow => self.flow_model,
            StreamKind::Rgb => self.rgb_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::invalid("a network needs at least one stream"));
        }
        self.weights().validate()?;
        self.flow_model.validate()?;
        self.rgb_model.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub kind: NetworkKind,
    pub features: FeatureConfig,
    pub streams: Vec<(StreamDef, StreamModel)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPrediction {
    pub stream_scores: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub class: usize,
}

impl TrainedNetwork {
    pub fn weights(&self) -> FusionWeights {
        FusionWeights(self.streams.iter().map(|(d, _)| d.weight).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.streams[0].1.num_classes
    }

    fn fuse(&self, stream_scores: Vec<Vec<f64>>) -> Result<NetworkPrediction> {
        let (fused, class) = fuse_scores(&stream_scores, &self.weights())?;
        Ok(NetworkPrediction {
            stream_scores,
            fused,
            class,
        })
    }

    /// Prediction from precomputed centered snippet features.
    pub fn predict(&self, video: &VideoFeatures) -> Result<NetworkPrediction> {
        let scores = self
            .streams
            .iter()
            .map(|(d, m)| consensus(m, video.test.get(d.kind)))
            .collect::<Result<_>>()?;
        self.fuse(scores)
    }

    pub fn predict_decoded(&self, frames: &[Frame], flows: &[FlowField]) -> Result<NetworkPrediction> {
        let scores = self
            .streams
            .iter()
            .map(|(d, m)| predict_video(m, d.kind, frames, flows, &self.features))
            .collect::<Result<_>>()?;
        self.fuse(scores)
    }
}

/// Trains every stream of the network on its data source. Stream `i` uses
/// seed `derive(train.seed, [i])` for initialization, shuffling and dropout.
pub fn train_network(
    cfg: &NetworkConfig,
    real: &[&VideoFeatures],
    synthetic: &[&VideoFeatures],
    num_classes: usize,
) -> Result<(TrainedNetwork, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let mut streams = Vec::with_capacity(cfg.streams.len());
    let mut histories = Vec::with_capacity(cfg.streams.len());
    for (i, def) in cfg.streams.iter().enumerate() {
        let pool: Vec<&VideoFeatures> = match def.source {
            DataSource::Real => real.to_vec(),
            DataSource::Synthetic => synthetic.to_vec(),
            DataSource::RealAndSynthetic => real.iter().chain(synthetic).copied().collect(),
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for v in &pool {
            for x in v.train.get(def.kind) {
                xs.push(x.clone());
                ys.push(v.class_index);
            }
        }
        if xs.is_empty() {
            return Err(Error::data(format!(
                "stream {} has no {} training videos",
                def.name,
                def.source.name()
            )));
        }
        let s = seed::derive_seed(cfg.train.seed, &[i as u64]);
        let model = StreamModel::new(cfg.model_for(def.kind), xs[0].len(), num_classes, s)?;
        let tc = TrainConfig { seed: s, ..cfg.train };
        let (model, hist) = train_stream(model, &xs, &ys, &tc)?;
        debug!(
            "stream {}: {} videos, {} snippets, final loss {:.4}",
            def.name,
            pool.len(),
            xs.len(),
            hist.last().copied().unwrap_or(f64::NAN)
        );
        streams.push((def.clone(), model));
        histories.push(hist);
    }
    Ok((
        TrainedNetwork {
            kind: cfg.kind,
            features: cfg.features,
            streams,
        },
        histories,
    ))
}
