//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSNC" version:u8 network:u8
//! segments:u32 stack:u32 grid:u32 bins:u32 train_draws:u32 feature_seed:u64
//! streams:u32
//! per stream:
//!   name_len:u32 name kind:u8 source:u8 weight:f64
//!   model:u8 hidden:u32 dropout:f64 input_dim:u32 classes:u32
//!   params:u64 then that many f64
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{
    DataSource, FeatureConfig, FeatureSpec, ModelKind, NetworkKind, SamplingMode, SegmentSampler, StreamDef,
    StreamKind, StreamModel, TrainedNetwork,
};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSNC";
pub const CHECKPOINT_VERSION: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format("checkpoint is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn bad(what: &str, v: u8) -> Error {
    Error::format(format!("checkpoint has unknown {what} code {v}"))
}

pub fn checkpoint_bytes(net: &TrainedNetwork) -> Vec<u8> {
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.u8(CHECKPOINT_VERSION);
    w.u8(match net.kind {
        NetworkKind::Net1 => 1,
        NetworkKind::Net2 => 2,
        NetworkKind::Net3 => 3,
    });
    let f = &net.features;
    w.u32(f.sampler.num_segments);
    w.u32(f.sampler.stack_length);
    w.u32(f.flow.grid);
    w.u32(f.flow.orientation_bins);
    w.u32(f.train_draws);
    w.u64(f.seed);
    w.u32(net.streams.len());
    for (def, m) in &net.streams {
        w.u32(def.name.len());
        w.0.extend(def.name.as_bytes());
        w.u8(match def.kind {
            StreamKind::Flow => 0,
            StreamKind::Rgb => 1,
        });
        w.u8(match def.source {
            DataSource::Real => 0,
            DataSource::Synthetic => 1,
            DataSource::RealAndSynthetic => 2,
        });
        w.f64(def.weight);
        match m.kind {
            ModelKind::SoftmaxLinear => {
                w.u8(0);
                w.u32(0);
                w.f64(0.0);
            }
            ModelKind::Mlp {
                hidden_units,
                dropout_p,
            } => {
                w.u8(1);
                w.u32(hidden_units);
                w.f64(dropout_p);
            }
        }
        w.u32(m.input_dim);
        w.u32(m.num_classes);
        w.u64(m.params.len() as u64);
        m.params.iter().for_each(|&p| w.f64(p));
    }
    w.0
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<TrainedNetwork> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("not a TSNC checkpoint"));
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let kind = match r.u8()? {
        1 => NetworkKind::Net1,
        2 => NetworkKind::Net2,
        3 => NetworkKind::Net3,
        v => return Err(bad("network", v)),
    };
    let sampler = SegmentSampler {
        num_segments: r.u32()?,
        mode: SamplingMode::TestCenter,
        stack_length: r.u32()?,
    };
    let (grid, bins) = (r.u32()?, r.u32()?);
    let features = FeatureConfig {
        sampler,
        flow: FeatureSpec {
            stream_kind: StreamKind::Flow,
            grid,
            orientation_bins: bins,
        },
        rgb: FeatureSpec {
            stream_kind: StreamKind::Rgb,
            grid,
            orientation_bins: bins,
        },
        train_draws: r.u32()?,
        seed: r.u64()?,
    };
    let n = r.u32()?;
    let mut streams = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::format("stream name is not UTF-8"))?;
        let skind = match r.u8()? {
            0 => StreamKind::Flow,
            1 => StreamKind::Rgb,
            v => return Err(bad("stream kind", v)),
        };
        let source = match r.u8()? {
            0 => DataSource::Real,
            1 => DataSource::Synthetic,
            2 => DataSource::RealAndSynthetic,
            v => return Err(bad("data source", v)),
        };
        let weight = r.f64()?;
        let mcode = r.u8()?;
        let (hidden_units, dropout_p) = (r.u32()?, r.f64()?);
        let mkind = match mcode {
            0 => ModelKind::SoftmaxLinear,
            1 => ModelKind::Mlp {
                hidden_units,
                dropout_p,
            },
            v => return Err(bad("model", v)),
        };
        mkind.validate().map_err(|e| Error::format(e.to_string()))?;
        let (input_dim, num_classes) = (r.u32()?, r.u32()?);
        let count = r.u64()? as usize;
        if count != StreamModel::param_count(mkind, input_dim, num_classes) {
            return Err(Error::format(format!(
                "stream {name}: parameter count {count} does not match its shape"
            )));
        }
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        streams.push((
            StreamDef {
                name,
                kind: skind,
                source,
                weight,
            },
            StreamModel {
                kind: mkind,
                input_dim,
                num_classes,
                params,
            },
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint"));
    }
    if streams.is_empty() {
        return Err(Error::format("checkpoint has no streams"));
    }
    Ok(TrainedNetwork {
        kind,
        features,
        streams,
    })
}

pub fn write_checkpoint(path: &Path, net: &TrainedNetwork) -> Result<()> {
    fs::write(path, checkpoint_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedNetwork> {
    parse_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        writeln!(s, "{e},{l}").unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
