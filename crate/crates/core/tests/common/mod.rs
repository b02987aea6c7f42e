#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use synthact::dataset::{ClassSpec, GenerationConfig};
use synthact::render::Frame;
use synthact::seed;

/// Three classes, six 2 s videos of each kind at 32x32.
pub fn tiny_generation(seed: u64) -> GenerationConfig {
    GenerationConfig {
        classes: ["wave", "squat", "jump"]
            .iter()
            .map(|a| ClassSpec {
                name: a.to_string(),
                action: a.to_string(),
                actor_count: 1,
            })
            .collect(),
        videos_per_class: 6,
        width: 32,
        height: 32,
        duration_range: (2.0, 2.0),
        global_seed: seed,
        ..GenerationConfig::default()
    }
}

pub const TINY_INI: &str = "\
[generation]
classes = wave, squat, jump
videos_per_class = 6
width = 32
height = 32
duration_range = 2.0, 2.0
global_seed = 3
";

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Smooth random texture: white noise, two circular box blurs, stretched to 0..255.
pub fn textured(n: usize, s: u64) -> Vec<f64> {
    let mut rng = seed::rng(s);
    let mut img: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
    for _ in 0..2 {
        let mut tmp = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                tmp[y * n + x] = (-2i64..=2)
                    .map(|d| img[y * n + (x as i64 + d).rem_euclid(n as i64) as usize])
                    .sum::<f64>()
                    / 5.0;
            }
        }
        for y in 0..n {
            for x in 0..n {
                img[y * n + x] = (-2i64..=2)
                    .map(|d| tmp[(y as i64 + d).rem_euclid(n as i64) as usize * n + x])
                    .sum::<f64>()
                    / 5.0;
            }
        }
    }
    let lo = img.iter().cloned().fold(f64::MAX, f64::min);
    let hi = img.iter().cloned().fold(f64::MIN, f64::max);
    img.iter().map(|v| 255.0 * (v - lo) / (hi - lo)).collect()
}

pub fn to_frame(n: usize, img: &[f64]) -> Frame {
    Frame::gray(n, n, img.iter().map(|v| v.round() as u8).collect()).unwrap()
}

/// `b(x + d) = a(x)` with wrap-around.
pub fn shifted(n: usize, img: &[f64], dx: i64, dy: i64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for y in 0..n as i64 {
        for x in 0..n as i64 {
            let sx = (x - dx).rem_euclid(n as i64) as usize;
            let sy = (y - dy).rem_euclid(n as i64) as usize;
            out[y as usize * n + x as usize] = img[sy * n + sx];
        }
    }
    out
}

pub fn interior_epe(n: usize, u: &[f64], v: &[f64], du: f64, dv: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0.0;
    for y in 4..n - 4 {
        for x in 4..n - 4 {
            let i = y * n + x;
            sum += (u[i] - du).hypot(v[i] - dv);
            count += 1.0;
        }
    }
    sum / count
}
