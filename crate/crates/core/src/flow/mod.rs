//! Dense optical flow: coarse-to-fine Horn–Schunck estimation, the
//! variational energy it minimizes, and the 8-bit two-plane encoding.

mod hs;
mod plane;

use crate::error::{Error, Result};
use crate::render::Frame;

pub use hs::{estimate_flow, estimate_flow_traced, flow_energy, flow_energy_terms, EnergyTerms, WarpTrace};

pub const DEFAULT_FLOW_BOUND: f64 = 20.0;

/// Per-pixel displacement in pixels/frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::invalid(format!(
                "flow planes of {} and {} values for a {width}x{height} field",
                u.len(),
                v.len()
            )));
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite flow value".into()));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    #[inline]
    pub fn magnitude(&self, i: usize) -> f64 {
        self.u[i].hypot(self.v[i])
    }

    /// Mean magnitude over the pixels where `select` is true; `None` if none are.
    pub fn mean_magnitude_where(&self, select: &[bool]) -> Option<f64> {
        let (sum, n) = select
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .fold((0.0, 0usize), |(s, n), (i, _)| (s + self.magnitude(i), n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub smoothness_alpha: f64,
    pub iterations_per_level: usize,
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub warp_steps_per_level: usize,
    /// Weight of a `|w|^2` penalty pulling unconstrained flow toward zero;
    /// 0 is plain Horn–Schunck.
    pub damping: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            smoothness_alpha: 15.0,
            iterations_per_level: 100,
            pyramid_levels: 4,
            pyramid_scale: 0.5,
            warp_steps_per_level: 3,
            damping: 0.0,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness_alpha > 0.0 && self.smoothness_alpha.is_finite()) {
            return Err(Error::invalid("smoothness_alpha must be positive"));
        }
        if self.pyramid_levels < 1 {
            return Err(Error::invalid("pyramid_levels must be at least 1"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid("pyramid_scale must lie in (0, 1)"));
        }
        if self.warp_steps_per_level < 1 {
            return Err(Error::invalid("warp_steps_per_level must be at least 1"));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::invalid("damping must be non-negative"));
        }
        Ok(())
    }
}

/// Flow quantized to two 8-bit planes over `[-bound, bound]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFlow {
    pub x_plane: Frame,
    pub y_plane: Frame,
    pub bound: f64,
}

pub fn encode_value(f: f64, bound: f64) -> u8 {
    let t = (f.clamp(-bound, bound) + bound) * 255.0 / (2.0 * bound);
    // f64::round rounds half away from zero
    t.round() as u8
}

pub fn decode_value(b: u8, bound: f64) -> f64 {
    b as f64 * 2.0 * bound / 255.0 - bound
}

pub fn encode_flow(flow: &FlowField, bound: f64) -> Result<EncodedFlow> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!("flow bound {bound} must be positive")));
    }
    let plane = |c: &[f64]| {
        Frame::gray(
            flow.width,
            flow.height,
            c.iter().map(|&f| encode_value(f, bound)).collect(),
        )
    };
    Ok(EncodedFlow {
        x_plane: plane(&flow.u)?,
        y_plane: plane(&flow.v)?,
        bound,
    })
}

pub fn decode_flow(enc: &EncodedFlow) -> Result<FlowField> {
    let (x, y) = (&enc.x_plane, &enc.y_plane);
    if !x.same_shape(y) || x.channels != 1 {
        return Err(Error::format("flow planes must be single-channel and equal-sized"));
    }
    let plane = |f: &Frame| f.pixels.iter().map(|&b| decode_value(b, enc.bound)).collect();
    FlowField::new(x.width, x.height, plane(x), plane(y))
}

/// Mean endpoint difference between two fields over the masked pixels.
pub fn foreground_epe(a: &FlowField, b: &FlowField, mask: &[bool]) -> Result<f64> {
    if a.width != b.width || a.height != b.height || mask.len() != a.len() {
        return Err(Error::invalid("flow fields and mask differ in size"));
    }
    let (sum, n) = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (i, _)| {
            (s + (a.u[i] - b.u[i]).hypot(a.v[i] - b.v[i]), n + 1)
        });
    if n == 0 {
        return Err(Error::invalid("foreground mask is empty"));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn encoding_endpoints() {
        assert_eq!(encode_value(0.0, 20.0), 128);
        assert_eq!(encode_value(20.0, 20.0), 255);
        assert_eq!(encode_value(-20.0, 20.0), 0);
        assert_eq!(encode_value(1e9, 20.0), 255);
        assert_eq!(encode_value(-1e9, 20.0), 0);
    }

    #[test]
    fn decode_inverts_affine_map() {
        assert_eq!(decode_value(0, 20.0), -20.0);
        assert_eq!(decode_value(255, 20.0), 20.0);
    }

    #[test]
    fn round_trip_on_random_values() {
        let mut rng = seed::rng(5);
        let vals: Vec<f64> = (0..1000).map(|_| rng.random_range(-20.0..=20.0)).collect();
        let flow = FlowField::new(1000, 1, vals.clone(), vals.clone()).unwrap();
        let back = decode_flow(&encode_flow(&flow, 20.0).unwrap()).unwrap();
        let max = vals.iter().zip(&back.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max <= 20.0 / 255.0 + 1e-9, "max error {max}");
    }

    #[test]
    fn bad_bound_rejected() {
        assert!(encode_flow(&FlowField::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn epe_examples() {
        let a = FlowField::constant(4, 4, 0.5, -0.25);
        let mask = vec![true; 16];
        assert_eq!(foreground_epe(&a, &a, &mask).unwrap(), 0.0);
        let b = FlowField::constant(4, 4, 1.5, -0.25);
        assert!((foreground_epe(&a, &b, &mask).unwrap() - 1.0).abs() < 1e-12);
        assert!(foreground_epe(&a, &b, &[false; 16]).is_err());
    }

    #[test]
    fn epe_brute_force_on_sparse_mask() {
        let mut rng = seed::rng(11);
        let mut g = || -> Vec<f64> { (0..64).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let a = FlowField::new(8, 8, g(), g()).unwrap();
        let b = FlowField::new(8, 8, g(), g()).unwrap();
        let picked = [3usize, 7, 12, 19, 25, 33, 40, 47, 58, 63];
        let mut mask = vec![false; 64];
        picked.iter().for_each(|&i| mask[i] = true);
        let mut expect = 0.0;
        for &i in &picked {
            let du = a.u[i] - b.u[i];
            let dv = a.v[i] - b.v[i];
            expect += (du * du + dv * dv).sqrt();
        }
        expect /= 10.0;
        assert!((foreground_epe(&a, &b, &mask).unwrap() - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_error_bounded(f in -50.0f64..50.0, bound in 0.5f64..40.0) {
            let back = decode_value(encode_value(f, bound), bound);
            prop_assert!((back - f.clamp(-bound, bound)).abs() <= bound / 255.0 + 1e-9);
        }
    }
}
