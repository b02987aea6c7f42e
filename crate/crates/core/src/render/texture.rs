use std::path::Path;

use rand::Rng;

use super::Frame;
use crate::error::{Error, Result};
use crate::{pnm, seed};

const PROCEDURAL_SIZE: usize = 64;

/// A static, tiling image sampled bilinearly in texel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub id: String,
    width: usize,
    height: usize,
    /// Three channels per texel, 0..255.
    rgb: Vec<f32>,
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

fn blur_tiled(data: &mut [f32], n: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = {
        let k: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.iter().map(|v| (v / s) as f32).collect()
    };
    let mut tmp = vec![0.0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = kernel
                .iter()
                .zip(-radius..)
                .map(|(k, d)| k * data[y * n + wrap(x as isize + d, n)])
                .sum();
        }
    }
    for y in 0..n {
        for x in 0..n {
            data[y * n + x] = kernel
                .iter()
                .zip(-radius..)
                .map(|(k, d)| k * tmp[wrap(y as isize + d, n) * n + x])
                .sum();
        }
    }
}

impl Texture {
    /// Smooth random texture, fully determined by `texture_id`.
    pub fn procedural(texture_id: u64) -> Self {
        let n = PROCEDURAL_SIZE;
        let mut rng = seed::rng_for(texture_id, &[0x7e7]);
        let tint: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.0));
        let mut planes: Vec<Vec<f32>> = Vec::with_capacity(3);
        let shared: Vec<f32> = (0..n * n).map(|_| rng.random()).collect();
        for _ in 0..3 {
            let mut p: Vec<f32> = shared.iter().map(|s| 0.7 * s + 0.3 * rng.random::<f32>()).collect();
            blur_tiled(&mut p, n, 1.5);
            let (lo, hi) = p
                .iter()
                .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let span = (hi - lo).max(1e-6);
            p.iter_mut().for_each(|v| *v = 30.0 + 195.0 * (*v - lo) / span);
            planes.push(p);
        }
        let rgb = (0..n * n)
            .flat_map(|i| (0..3).map(move |c| (i, c)))
            .map(|(i, c)| planes[c][i] * tint[c])
            .collect();
        Texture {
            id: format!("proc:{texture_id}"),
            width: n,
            height: n,
            rgb,
        }
    }

    pub fn from_frame(id: impl Into<String>, frame: &Frame) -> Self {
        let rgb = match frame.channels {
            1 => frame.pixels.iter().flat_map(|&p| [p as f32; 3]).collect(),
            _ => frame.pixels.iter().map(|&p| p as f32).collect(),
        };
        Texture {
            id: id.into(),
            width: frame.width,
            height: frame.height,
            rgb,
        }
    }

    /// Load a binary PGM (P5) or PPM (P6) image.
    pub fn load(path: &Path) -> Result<Self> {
        let frame = pnm::read_file(path, None)?;
        if frame.width < 2 || frame.height < 2 {
            return Err(Error::data(format!("{}: texture too small", path.display())));
        }
        Ok(Texture::from_frame(path.display().to_string(), &frame))
    }

    /// Tiled bilinear sample; `(s, t)` in texels.
    pub fn sample(&self, s: f64, t: f64) -> [f64; 3] {
        let x0 = s.floor();
        let y0 = t.floor();
        let fx = (s - x0) as f32;
        let fy = (t - y0) as f32;
        let xa = wrap(x0 as isize, self.width);
        let ya = wrap(y0 as isize, self.height);
        let xb = (xa + 1) % self.width;
        let yb = (ya + 1) % self.height;
        let at = |x: usize, y: usize, c: usize| self.rgb[(y * self.width + x) * 3 + c];
        std::array::from_fn(|c| {
            let top = at(xa, ya, c) * (1.0 - fx) + at(xb, ya, c) * fx;
            let bottom = at(xa, yb, c) * (1.0 - fx) + at(xb, yb, c) * fx;
            (top * (1.0 - fy) + bottom * fy) as f64
        })
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = (self.width * self.height) as f64;
        std::array::from_fn(|c| self.rgb.iter().skip(c).step_by(3).map(|&v| v as f64).sum::<f64>() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_is_deterministic_and_textured() {
        let a = Texture::procedural(4);
        assert_eq!(a, Texture::procedural(4));
        assert_ne!(a, Texture::procedural(5));
        let vals: Vec<f64> = (0..64).map(|i| a.sample(i as f64, 3.0)[0]).collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 30.0);
    }

    #[test]
    fn sampling_tiles() {
        let t = Texture::procedural(1);
        assert_eq!(t.sample(3.25, 7.5), t.sample(3.25 + 64.0, 7.5 - 128.0));
    }

    #[test]
    fn gray_frame_texture_samples_exactly_on_texels() {
        let f = Frame::gray(2, 2, vec![0, 100, 200, 50]).unwrap();
        let t = Texture::from_frame("x", &f);
        assert_eq!(t.sample(1.0, 0.0), [100.0; 3]);
        assert_eq!(t.sample(0.5, 0.0), [50.0; 3]);
    }
}
