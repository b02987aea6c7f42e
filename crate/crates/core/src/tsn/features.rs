use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::render::Frame;

/// Flow vectors shorter than this go to the near-zero bin, each adding this
/// value, the largest magnitude the bin admits.
pub const NEAR_ZERO_PX: f64 = 0.1;
pub const COLOR_BINS: usize = 16;
const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Flow,
    Rgb,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Flow => "flow",
            StreamKind::Rgb => "rgb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub stream_kind: StreamKind,
    pub grid: usize,
    pub orientation_bins: usize,
}

impl FeatureSpec {
    pub fn flow() -> Self {
        FeatureSpec {
            stream_kind: StreamKind::Flow,
            grid: 4,
            orientation_bins: 8,
        }
    }

    pub fn rgb() -> Self {
        FeatureSpec {
            stream_kind: StreamKind::Rgb,
            ..FeatureSpec::flow()
        }
    }

    /// Feature length for a flow stack of `stack_length` fields or a frame of `channels`.
    pub fn len(&self, stack_length: usize, channels: usize) -> usize {
        let cells = self.grid * self.grid;
        match self.stream_kind {
            StreamKind::Flow => cells * (self.orientation_bins + 1) * stack_length,
            StreamKind::Rgb => cells * COLOR_BINS * channels,
        }
    }
}

#[inline]
fn cell_of(x: usize, y: usize, w: usize, h: usize, g: usize) -> usize {
    (y * g / h) * g + x * g / w
}

/// Orientation bin with bin 0 centered on angle 0 (pointing +x).
pub fn orientation_bin(u: f64, v: f64, bins: usize) -> usize {
    let width = TAU / bins as f64;
    let t = (v.atan2(u) + width / 2.0).rem_euclid(TAU);
    ((t / width) as usize).min(bins - 1)
}

fn check_grid(spec: &FeatureSpec, w: usize, h: usize) -> Result<()> {
    if spec.grid == 0 || spec.grid > w || spec.grid > h {
        return Err(Error::invalid(format!(
            "grid {} does not fit a {w}x{h} raster",
            spec.grid
        )));
    }
    if spec.stream_kind == StreamKind::Flow && spec.orientation_bins == 0 {
        return Err(Error::invalid("orientation_bins must be positive"));
    }
    Ok(())
}

/// Per cell: magnitude-weighted orientation histogram plus the near-zero bin,
/// L2-normalized; cells of successive fields are concatenated.
pub fn flow_features(stack: &[FlowField], spec: &FeatureSpec) -> Result<Vec<f64>> {
    if spec.stream_kind != StreamKind::Flow {
        return Err(Error::invalid("flow features need a flow feature spec"));
    }
    let first = stack.first().ok_or_else(|| Error::invalid("empty flow stack"))?;
    let (w, h) = (first.width, first.height);
    check_grid(spec, w, h)?;
    let g = spec.grid;
    let nb = spec.orientation_bins + 1;
    let mut out = Vec::with_capacity(spec.len(stack.len(), 1));
    for f in stack {
        if f.width != w || f.height != h {
            return Err(Error::invalid("flow fields in a stack differ in size"));
        }
        let mut hist = vec![0.0; g * g * nb];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (u, v) = (f.u[i], f.v[i]);
                let m = u.hypot(v);
                let c = cell_of(x, y, w, h, g);
                if m < NEAR_ZERO_PX {
                    hist[c * nb + spec.orientation_bins] += NEAR_ZERO_PX;
                } else {
                    hist[c * nb + orientation_bin(u, v, spec.orientation_bins)] += m;
                }
            }
        }
        for cell in hist.chunks_mut(nb) {
            let n = cell.iter().map(|x| x * x).sum::<f64>().sqrt();
            cell.iter_mut().for_each(|x| *x /= n + NORM_EPS);
        }
        out.extend(hist);
    }
    Ok(out)
}

/// Per cell and channel: 16-bin intensity histogram, L1-normalized.
pub fn rgb_features(frame: &Frame, spec: &FeatureSpec) -> Result<Vec<f64>> {
    if spec.stream_kind != StreamKind::Rgb {
        return Err(Error::invalid("appearance features need an rgb feature spec"));
    }
    let (w, h, ch) = (frame.width, frame.height, frame.channels);
    check_grid(spec, w, h)?;
    let g = spec.grid;
    let mut hist = vec![0.0; g * g * ch * COLOR_BINS];
    for y in 0..h {
        for x in 0..w {
            let cell = cell_of(x, y, w, h, g);
            for c in 0..ch {
                let bin = frame.get(x, y, c) as usize * COLOR_BINS / 256;
                hist[(cell * ch + c) * COLOR_BINS + bin] += 1.0;
            }
        }
    }
    for block in hist.chunks_mut(COLOR_BINS) {
        let s: f64 = block.iter().sum();
        if s > 0.0 {
            block.iter_mut().for_each(|x| *x /= s);
        }
    }
    Ok(hist)
}
