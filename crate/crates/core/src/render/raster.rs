use super::{
    project_point, Background, CameraConfig, CharacterTexture, Frame, LightingConfig, Projected, SceneConfig,
    BACKDROP_RADIUS_M,
};
use crate::error::{Error, Result};
use crate::skeleton::{Skeleton, Vec3};

const BASE_COLORS: [[f64; 3]; 2] = [[205.0, 180.0, 160.0], [160.0, 185.0, 215.0]];
const AMBIENT: f64 = 0.3;
const HEAD_SCALE: f64 = 1.7;
const CHARACTER_TEXELS_PER_M: f64 = 24.0;

/// Light direction in camera coordinates (x right, y up, z toward the viewer).
fn light_dir() -> [f64; 3] {
    let l: [f64; 3] = [-0.45, 0.6, 0.65];
    let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
    [l[0] / n, l[1] / n, l[2] / n]
}

fn luma(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// A projected capsule; `a == b` gives a disc.
struct Capsule {
    a: (f64, f64),
    b: (f64, f64),
    radius: f64,
    depth: f64,
    order: usize,
    actor: usize,
    length_m: f64,
}

fn capsules(actors: &[Vec<Vec3>], skeleton: &Skeleton, camera: &CameraConfig, limb: f64) -> Vec<Capsule> {
    let f = camera.focal_length_px;
    let mut out = Vec::new();
    let mut order = 0;
    for (actor, pos) in actors.iter().enumerate() {
        let proj: Vec<Projected> = pos.iter().map(|p| project_point(camera, p)).collect();
        for (p, c) in skeleton.bones() {
            if let (
                Projected::Pixel {
                    u: u0,
                    v: v0,
                    depth: z0,
                },
                Projected::Pixel {
                    u: u1,
                    v: v1,
                    depth: z1,
                },
            ) = (proj[p], proj[c])
            {
                let depth = 0.5 * (z0 + z1);
                out.push(Capsule {
                    a: (u0, v0),
                    b: (u1, v1),
                    radius: f * limb / depth,
                    depth,
                    order,
                    actor,
                    length_m: (pos[c] - pos[p]).norm(),
                });
            }
            order += 1;
        }
        for (j, joint) in skeleton.joints().iter().enumerate() {
            if !joint.name.eq_ignore_ascii_case("head") {
                continue;
            }
            if let Projected::Pixel { u, v, depth } = proj[j] {
                out.push(Capsule {
                    a: (u, v),
                    b: (u, v),
                    radius: f * limb * HEAD_SCALE / depth,
                    // just in front of the neck so the head covers it
                    depth: depth - 1e-3,
                    order,
                    actor,
                    length_m: 0.0,
                });
            }
            order += 1;
        }
    }
    // painter's order: far to near, ties by construction order
    out.sort_by(|x, y| y.depth.total_cmp(&x.depth).then(x.order.cmp(&y.order)));
    out
}

fn paint_background(buf: &mut [[f64; 3]], camera: &CameraConfig, scene: &SceneConfig) {
    let tex = match &scene.background {
        Background::Blank => {
            buf.iter_mut().for_each(|p| *p = [0.0; 3]);
            return;
        }
        Background::Textured(t) => t,
    };
    let (right, up, forward) = camera.basis();
    let (cx, cy) = camera.center();
    let f = camera.focal_length_px;
    let o = camera.position;
    let r2 = BACKDROP_RADIUS_M * BACKDROP_RADIUS_M;
    let k = scene.texels_per_meter;
    let mean = tex.mean();
    for y in 0..camera.height {
        for x in 0..camera.width {
            let dir = forward + right * ((x as f64 + 0.5 - cx) / f) - up * ((y as f64 + 0.5 - cy) / f);
            // ray / vertical cylinder x^2 + z^2 = R^2, camera inside
            let qa = dir.x * dir.x + dir.z * dir.z;
            let qb = 2.0 * (o.x * dir.x + o.z * dir.z);
            let qc = o.x * o.x + o.z * o.z - r2;
            let disc = qb * qb - 4.0 * qa * qc;
            buf[y * camera.width + x] = if qa < 1e-12 || disc < 0.0 {
                mean
            } else {
                let t = (-qb + disc.sqrt()) / (2.0 * qa);
                let hit = o + dir * t;
                let s = hit.x.atan2(hit.z) * BACKDROP_RADIUS_M * k;
                tex.sample(s, -hit.y * k)
            };
        }
    }
}

/// Render one frame and its foreground mask (pixels with nonzero coverage).
pub fn render_frame_with_mask(
    actors: &[Vec<Vec3>],
    skeleton: &Skeleton,
    camera: &CameraConfig,
    lighting: &LightingConfig,
    scene: &SceneConfig,
) -> Result<(Frame, Vec<bool>)> {
    if actors.iter().any(|a| a.len() != skeleton.len()) {
        return Err(Error::invalid("joint positions do not match the skeleton"));
    }
    let (w, h) = (camera.width, camera.height);
    let mut buf = vec![[0.0f64; 3]; w * h];
    let mut mask = vec![false; w * h];
    paint_background(&mut buf, camera, scene);

    let light = light_dir();
    let intensity = lighting.intensity;
    for cap in capsules(actors, skeleton, camera, scene.limb_radius) {
        let reach = cap.radius + 0.5;
        let x_lo = (cap.a.0.min(cap.b.0) - reach).floor().max(0.0) as usize;
        let y_lo = (cap.a.1.min(cap.b.1) - reach).floor().max(0.0) as usize;
        let x_hi = ((cap.a.0.max(cap.b.0) + reach).ceil().max(0.0) as usize).min(w);
        let y_hi = ((cap.a.1.max(cap.b.1) + reach).ceil().max(0.0) as usize).min(h);
        let (ex, ey) = (cap.b.0 - cap.a.0, cap.b.1 - cap.a.1);
        let len2 = ex * ex + ey * ey;
        let base = BASE_COLORS[cap.actor.min(1)];
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - cap.a.0) * ex + (py - cap.a.1) * ey) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (dx, dy) = (px - (cap.a.0 + t * ex), py - (cap.a.1 + t * ey));
                let d = dx.hypot(dy);
                let alpha = (cap.radius - d + 0.5).clamp(0.0, 1.0);
                if alpha <= 0.0 {
                    continue;
                }
                let k = (d / cap.radius).min(1.0);
                let (ox, oy) = if d > 0.0 { (dx / d, dy / d) } else { (0.0, 0.0) };
                let n = [ox * k, -oy * k, (1.0 - k * k).sqrt()];
                let lambert =
                    AMBIENT + (1.0 - AMBIENT) * (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
                let modulation = match &scene.character_texture {
                    CharacterTexture::Flat => [1.0; 3],
                    CharacterTexture::Textured(tex) => {
                        let side = (ex * dy - ey * dx).signum();
                        let s = cap.order as f64 * 13.0 + t * cap.length_m * CHARACTER_TEXELS_PER_M;
                        let q = 20.0 + side * k * scene.limb_radius * CHARACTER_TEXELS_PER_M * 2.0;
                        let c = tex.sample(s, q);
                        std::array::from_fn(|i| 0.55 + 0.45 * c[i] / 255.0)
                    }
                };
                let px_buf = &mut buf[y * w + x];
                for c in 0..3 {
                    let shade = base[c] * intensity * lambert * modulation[c];
                    px_buf[c] = alpha * shade + (1.0 - alpha) * px_buf[c];
                }
                mask[y * w + x] = true;
            }
        }
    }

    let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let pixels = match scene.channels {
        1 => buf.iter().map(|&c| q(luma(c))).collect(),
        _ => buf.iter().flat_map(|c| c.map(q)).collect(),
    };
    Ok((Frame::new(w, h, scene.channels, pixels)?, mask))
}

pub fn render_frame(
    actors: &[Vec<Vec3>],
    skeleton: &Skeleton,
    camera: &CameraConfig,
    lighting: &LightingConfig,
    scene: &SceneConfig,
) -> Result<Frame> {
    render_frame_with_mask(actors, skeleton, camera, lighting, scene).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{CameraMode, LightingPreset, Texture};
    use crate::skeleton::Joint;
    use std::sync::Arc;

    fn stick() -> Skeleton {
        Skeleton::new(
            "stick",
            vec![
                Joint::new("base", None, [0.0, 0.0, 0.0]),
                Joint::new("tip", Some(0), [0.0, 1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    fn camera() -> CameraConfig {
        CameraConfig {
            position: Vec3::new(0.0, 0.0, 4.0),
            look_at: Vec3::zeros(),
            focal_length_px: 120.0,
            width: 64,
            height: 64,
            mode: CameraMode::Fixed,
            shake_amplitude: 0.0,
            shake_seed: 0,
        }
    }

    fn bright() -> LightingConfig {
        LightingConfig::preset(LightingPreset::Bright)
    }

    #[test]
    fn everything_behind_camera_is_black() {
        let pos = vec![vec![Vec3::new(0.0, 0.0, 6.0), Vec3::new(0.0, 1.0, 6.0)]];
        let f = render_frame(&pos, &stick(), &camera(), &bright(), &SceneConfig::default()).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn vertical_bone_centroid_at_center() {
        let pos = vec![vec![Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)]];
        let f = render_frame(&pos, &stick(), &camera(), &bright(), &SceneConfig::default()).unwrap();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..f.height {
            for x in 0..f.width {
                if f.get(x, y, 0) > 0 {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        assert!(n > 0.0);
        assert!((sx / n - 32.0).abs() < 1.0, "x centroid {}", sx / n);
        assert!((sy / n - 32.0).abs() < 1.0, "y centroid {}", sy / n);
    }

    #[test]
    fn intensity_scales_foreground() {
        let pos = vec![vec![Vec3::new(-0.3, -0.5, 0.0), Vec3::new(0.2, 0.6, 0.1)]];
        let scene = SceneConfig::default();
        let full = render_frame(&pos, &stick(), &camera(), &bright(), &scene).unwrap();
        let half = render_frame(&pos, &stick(), &camera(), &LightingConfig::custom(0.5), &scene).unwrap();
        let mut seen = 0;
        for (a, b) in full.pixels.iter().zip(&half.pixels) {
            if *a > 0 {
                seen += 1;
                assert!((*a as f64 * 0.5 - *b as f64).abs() <= 1.0, "{a} {b}");
            } else {
                assert_eq!(*b, 0);
            }
        }
        assert!(seen > 20);
    }

    #[test]
    fn textured_background_and_mask() {
        let pos = vec![vec![Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)]];
        let scene = SceneConfig {
            background: Background::Textured(Arc::new(Texture::procedural(2))),
            character_texture: CharacterTexture::Textured(Arc::new(Texture::procedural(3))),
            channels: 3,
            ..SceneConfig::default()
        };
        let (f, mask) = render_frame_with_mask(&pos, &stick(), &camera(), &bright(), &scene).unwrap();
        assert_eq!(f.channels, 3);
        assert!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        let bg: Vec<u8> = (0..mask.len()).filter(|&i| !mask[i]).map(|i| f.pixels[3 * i]).collect();
        assert!(bg.iter().any(|&p| p != bg[0]));
    }
}
