use super::plane::Plane;
use super::{FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::render::Frame;

const MIN_LEVEL_SIZE: usize = 8;

/// Terms of the linearized energy
/// `data + alpha^2 * smoothness + damping * magnitude`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub data: f64,
    pub smoothness: f64,
    pub magnitude: f64,
}

impl EnergyTerms {
    pub fn total(&self, params: &FlowParams) -> f64 {
        self.data + params.smoothness_alpha.powi(2) * self.smoothness + params.damping * self.magnitude
    }
}

/// Linearized energy around one warp step of the finest pyramid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpTrace {
    pub warp: usize,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Brightness constancy linearized about a base flow: the residual at pixel i
/// is `ix[i] * u + iy[i] * v + c[i]`.
struct Linearization {
    w: usize,
    h: usize,
    ix: Vec<f64>,
    iy: Vec<f64>,
    c: Vec<f64>,
}

impl Linearization {
    fn new(a: &Plane, b: &Plane, u0: &[f64], v0: &[f64]) -> Self {
        let (w, h) = (a.w, a.h);
        let mut warped = Plane::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                warped.data[i] = b.sample(x as f64 + u0[i], y as f64 + v0[i]);
            }
        }
        let avg = Plane::new(
            w,
            h,
            a.data.iter().zip(&warped.data).map(|(p, q)| 0.5 * (p + q)).collect(),
        );
        let n = w * h;
        let (mut ix, mut iy, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                ix[i] = 0.5 * (avg.at(x + 1, y) - avg.at(x - 1, y));
                iy[i] = 0.5 * (avg.at(x, y + 1) - avg.at(x, y - 1));
                let it = warped.data[i] - a.data[i];
                c[i] = it - ix[i] * u0[i] - iy[i] * v0[i];
            }
        }
        Linearization { w, h, ix, iy, c }
    }

    fn terms(&self, u: &[f64], v: &[f64]) -> EnergyTerms {
        let data = (0..u.len())
            .map(|i| {
                let r = self.ix[i] * u[i] + self.iy[i] * v[i] + self.c[i];
                r * r
            })
            .sum();
        let mut smooth = 0.0;
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                if x + 1 < self.w {
                    smooth += (u[i + 1] - u[i]).powi(2) + (v[i + 1] - v[i]).powi(2);
                }
                if y + 1 < self.h {
                    let j = i + self.w;
                    smooth += (u[j] - u[i]).powi(2) + (v[j] - v[i]).powi(2);
                }
            }
        }
        let magnitude = u.iter().zip(v).map(|(a, b)| a * a + b * b).sum();
        EnergyTerms {
            data,
            smoothness: smooth,
            magnitude,
        }
    }

    /// Jacobi sweeps of the per-pixel exact minimizer with neighbors frozen.
    fn solve(&self, u: &mut Vec<f64>, v: &mut Vec<f64>, params: &FlowParams) {
        let alpha2 = params.smoothness_alpha * params.smoothness_alpha;
        let lambda = params.damping;
        let (w, h) = (self.w, self.h);
        let mut nu = vec![0.0; u.len()];
        let mut nv = vec![0.0; v.len()];
        for _ in 0..params.iterations_per_level {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
                    if x > 0 {
                        su += u[i - 1];
                        sv += v[i - 1];
                        n += 1.0;
                    }
                    if x + 1 < w {
                        su += u[i + 1];
                        sv += v[i + 1];
                        n += 1.0;
                    }
                    if y > 0 {
                        su += u[i - w];
                        sv += v[i - w];
                        n += 1.0;
                    }
                    if y + 1 < h {
                        su += u[i + w];
                        sv += v[i + w];
                        n += 1.0;
                    }
                    // neighbor mean shrunk toward zero by the damping term
                    let a = alpha2 * n + lambda;
                    let (ub, vb) = if a > 0.0 {
                        (alpha2 * su / a, alpha2 * sv / a)
                    } else {
                        (u[i], v[i])
                    };
                    let (gx, gy) = (self.ix[i], self.iy[i]);
                    let r = gx * ub + gy * vb + self.c[i];
                    let den = a + gx * gx + gy * gy;
                    if den > 0.0 {
                        nu[i] = ub - gx * r / den;
                        nv[i] = vb - gy * r / den;
                    } else {
                        nu[i] = ub;
                        nv[i] = vb;
                    }
                }
            }
            std::mem::swap(u, &mut nu);
            std::mem::swap(v, &mut nv);
        }
    }
}

fn planes(a: &Frame, b: &Frame) -> Result<(Plane, Plane)> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok((
        Plane::new(a.width, a.height, a.luma()),
        Plane::new(b.width, b.height, b.luma()),
    ))
}

fn pyramid(p: Plane, params: &FlowParams) -> Vec<Plane> {
    let s = params.pyramid_scale;
    let sigma = 0.6 * (1.0 / (s * s) - 1.0).sqrt();
    let mut levels = vec![p];
    while levels.len() < params.pyramid_levels {
        let top = levels.last().unwrap();
        let w = (top.w as f64 * s).round() as usize;
        let h = (top.h as f64 * s).round() as usize;
        if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
            break;
        }
        let next = top.gaussian_blur(sigma).resize(w, h);
        levels.push(next);
    }
    levels
}

fn upsample(u: &[f64], v: &[f64], from: (usize, usize), to: (usize, usize)) -> (Vec<f64>, Vec<f64>) {
    let pu = Plane::new(from.0, from.1, u.to_vec()).resize(to.0, to.1);
    let pv = Plane::new(from.0, from.1, v.to_vec()).resize(to.0, to.1);
    let kx = to.0 as f64 / from.0 as f64;
    let ky = to.1 as f64 / from.1 as f64;
    (
        pu.data.into_iter().map(|x| x * kx).collect(),
        pv.data.into_iter().map(|x| x * ky).collect(),
    )
}

fn run(a: &Frame, b: &Frame, params: &FlowParams, mut trace: Option<&mut Vec<WarpTrace>>) -> Result<FlowField> {
    params.validate()?;
    let (pa, pb) = planes(a, b)?;
    let pa = pyramid(pa, params);
    let pb = pyramid(pb, params);
    let top = pa.len() - 1;
    let mut dims = (pa[top].w, pa[top].h);
    let mut u = vec![0.0; dims.0 * dims.1];
    let mut v = u.clone();
    for level in (0..=top).rev() {
        let here = (pa[level].w, pa[level].h);
        if here != dims {
            (u, v) = upsample(&u, &v, dims, here);
            dims = here;
        }
        for warp in 0..params.warp_steps_per_level {
            let lin = Linearization::new(&pa[level], &pb[level], &u, &v);
            let before = (level == 0 && trace.is_some()).then(|| lin.terms(&u, &v).total(params));
            lin.solve(&mut u, &mut v, params);
            if let (Some(t), Some(energy_before)) = (trace.as_deref_mut(), before) {
                t.push(WarpTrace {
                    warp,
                    energy_before,
                    energy_after: lin.terms(&u, &v).total(params),
                });
            }
        }
    }
    FlowField::new(a.width, a.height, u, v)
}

/// Flow carrying `frame_a` onto `frame_b`: `b(x + f(x)) ≈ a(x)`.
pub fn estimate_flow(frame_a: &Frame, frame_b: &Frame, params: &FlowParams) -> Result<FlowField> {
    run(frame_a, frame_b, params, None)
}

/// As [`estimate_flow`], also returning the linearized energy before and after
/// the solver at every warp step of the finest level.
pub fn estimate_flow_traced(
    frame_a: &Frame,
    frame_b: &Frame,
    params: &FlowParams,
) -> Result<(FlowField, Vec<WarpTrace>)> {
    let mut trace = Vec::new();
    let flow = run(frame_a, frame_b, params, Some(&mut trace))?;
    Ok((flow, trace))
}

/// Terms of the Horn–Schunck energy linearized about zero flow: derivatives
/// are central differences of the frame average, the temporal derivative is
/// `b - a`, and smoothness sums squared forward differences of both
/// components.
pub fn flow_energy_terms(flow: &FlowField, frame_a: &Frame, frame_b: &Frame) -> Result<EnergyTerms> {
    let (pa, pb) = planes(frame_a, frame_b)?;
    if flow.width != pa.w || flow.height != pa.h {
        return Err(Error::invalid("flow and frame sizes differ"));
    }
    let zero = vec![0.0; flow.len()];
    Ok(Linearization::new(&pa, &pb, &zero, &zero).terms(&flow.u, &flow.v))
}

pub fn flow_energy(flow: &FlowField, frame_a: &Frame, frame_b: &Frame, params: &FlowParams) -> Result<f64> {
    Ok(flow_energy_terms(flow, frame_a, frame_b)?.total(params))
}
