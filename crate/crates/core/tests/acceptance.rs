//! Acceptance criteria 1-12. Every criterion runs, prints one PASS/FAIL line
//! to stderr (bypassing output capture) and the test fails if any failed.

mod common;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use synthact::dataset::{generate_dataset, plan_dataset, tree_checksum, GenerationConfig, SourceKind};
use synthact::experiment::{
    run_e2_synthetic_augmentation, run_e3_real_reduction, ExperimentConfig, ExperimentId, ExperimentReport, Workbench,
};
use synthact::flow::{
    decode_value, encode_value, estimate_flow, estimate_flow_traced, flow_energy, FlowField, FlowParams,
};
use synthact::render::{render_clip, Background, CameraMode, Frame, VideoTensor};
use synthact::seed;
use synthact::skeleton::generate_procedural_clip;
use synthact::tsn::{sample_segments, segment_bounds, ModelKind, SamplingMode, SegmentSampler, StreamModel};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Suite {
    results: Vec<(usize, bool)>,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, f: impl FnOnce() -> Check) {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (ok, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let line = format!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s]\n",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        let _ = std::io::stderr().write_all(line.as_bytes());
        self.results.push((id, ok));
    }
}

fn flow_shift_oracle() -> Check {
    let n = 128;
    let base = common::textured(n, 42);
    let a = common::to_frame(n, &base);
    let mut worst: (f64, f64) = (0.0, 0.0);
    for d in 1..=3i64 {
        for (dx, dy) in [(d, 0), (0, d), (-d, 0), (0, -d), (d, d)] {
            let b = common::to_frame(n, &common::shifted(n, &base, dx, dy));
            let t = Instant::now();
            let f = estimate_flow(&a, &b, &FlowParams::default()).map_err(|e| e.to_string())?;
            let secs = t.elapsed().as_secs_f64();
            let epe = common::interior_epe(n, &f.u, &f.v, dx as f64, dy as f64);
            ensure(epe < 0.25, format!("shift ({dx},{dy}) EPE {epe:.3} px"))?;
            ensure(secs < 10.0, format!("shift ({dx},{dy}) took {secs:.1} s"))?;
            worst = (worst.0.max(epe), worst.1.max(secs));
        }
    }
    Ok(format!(
        "15 shifts, worst EPE {:.3} px, slowest pair {:.2} s",
        worst.0, worst.1
    ))
}

fn noise_frame(w: usize, h: usize, s: u64) -> Frame {
    let mut rng = seed::rng(s);
    Frame::gray(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
}

/// Double loop over the linearized energy: central differences of the frame
/// mean, temporal difference b - a, squared forward differences for smoothness.
fn brute_energy(flow: &FlowField, a: &Frame, b: &Frame, p: &FlowParams) -> f64 {
    let (w, h) = (a.width as i64, a.height as i64);
    let px = |f: &Frame, x: i64, y: i64| f.pixels[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize] as f64;
    let m = |x: i64, y: i64| 0.5 * (px(a, x, y) + px(b, x, y));
    let (u, v) = (&flow.u, &flow.v);
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let r = (m(x + 1, y) - m(x - 1, y)) / 2.0 * u[i] + (m(x, y + 1) - m(x, y - 1)) / 2.0 * v[i] + px(b, x, y)
                - px(a, x, y);
            e += r * r + p.damping * (u[i] * u[i] + v[i] * v[i]);
            let a2 = p.smoothness_alpha.powi(2);
            for (ok, j) in [(x + 1 < w, i + 1), (y + 1 < h, i + w as usize)] {
                if ok {
                    e += a2 * ((u[j] - u[i]).powi(2) + (v[j] - v[i]).powi(2));
                }
            }
        }
    }
    e
}

fn flow_energy_checks() -> Check {
    let mut worst_rel: f64 = 0.0;
    for s in 0..5u64 {
        let a = noise_frame(16, 16, 100 + s);
        let b = noise_frame(16, 16, 200 + s);
        let mut rng = seed::rng(300 + s);
        let mut g = || -> Vec<f64> { (0..256).map(|_| rng.random_range(-1.5..1.5)).collect() };
        let flow = FlowField::new(16, 16, g(), g()).unwrap();
        for damping in [0.0, 50.0] {
            let p = FlowParams {
                damping,
                ..FlowParams::default()
            };
            let got = flow_energy(&flow, &a, &b, &p).map_err(|e| e.to_string())?;
            let want = brute_energy(&flow, &a, &b, &p);
            let rel = ((got - want) / want).abs();
            ensure(rel < 1e-6, format!("energy {got} vs brute force {want}"))?;
            worst_rel = worst_rel.max(rel);
        }
    }
    let mut steps = 0;
    for s in 0..4u64 {
        let a = noise_frame(32, 24, 400 + s);
        let b = noise_frame(32, 24, 500 + s);
        for damping in [0.0, 50.0] {
            let p = FlowParams {
                damping,
                ..FlowParams::default()
            };
            let (_, trace) = estimate_flow_traced(&a, &b, &p).map_err(|e| e.to_string())?;
            ensure(trace.len() == p.warp_steps_per_level, "missing warp trace")?;
            for t in &trace {
                ensure(
                    t.energy_after <= t.energy_before * (1.0 + 1e-12),
                    format!(
                        "warp {} raised energy {} -> {}",
                        t.warp, t.energy_before, t.energy_after
                    ),
                )?;
                steps += 1;
            }
        }
    }
    Ok(format!(
        "max relative energy error {worst_rel:.1e}; {steps} warp steps non-increasing"
    ))
}

/// Ten real_like plans spread over the classes, camera fixed and still.
fn still_plans(g: &GenerationConfig) -> Vec<synthact::dataset::VideoPlan> {
    plan_dataset(g)
        .unwrap()
        .into_iter()
        .filter(|p| p.record.source_kind == SourceKind::RealLike)
        .step_by(32)
        .take(10)
        .map(|mut p| {
            p.camera.mode = CameraMode::Fixed;
            p.camera.shake_amplitude = 0.0;
            p
        })
        .collect()
}

fn render(p: &synthact::dataset::VideoPlan, camera: &synthact::render::CameraConfig, blank: bool) -> VideoTensor {
    let clip = generate_procedural_clip(&p.clip).unwrap();
    let mut scene = p.scene.clone();
    if blank {
        scene.background = Background::Blank;
    }
    render_clip(&clip, camera, &p.lighting, &scene, &p.record.video_id).unwrap()
}

/// Per frame pair: (flow, foreground mask of the first frame, background mask
/// of pixels outside both frames' figures).
fn flows(v: &VideoTensor, params: &FlowParams) -> Vec<(FlowField, Vec<bool>, Vec<bool>)> {
    (0..v.len() - 1)
        .map(|i| {
            let f = estimate_flow(&v.frames[i], &v.frames[i + 1], params).unwrap();
            let bg = v.masks[i].iter().zip(&v.masks[i + 1]).map(|(a, b)| !a && !b).collect();
            (f, v.masks[i].clone(), bg)
        })
        .collect()
}

fn mean_where(values: impl Iterator<Item = (f64, bool)>) -> f64 {
    let (s, n) = values
        .filter(|p| p.1)
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
    s / n.max(1) as f64
}

fn background_invariance() -> Check {
    let g = GenerationConfig::default();
    let (mut worst_epe, mut worst_bg): (f64, f64) = (0.0, 0.0);
    for p in still_plans(&g) {
        let blank = flows(&render(&p, &p.camera, true), &g.flow_params);
        let tex = flows(&render(&p, &p.camera, false), &g.flow_params);
        let mut epe = Vec::new();
        let mut bg = Vec::new();
        for ((fb, fg_mask, bg_mask), (ft, _, _)) in blank.iter().zip(&tex) {
            let d = (0..fb.len()).map(|i| ((fb.u[i] - ft.u[i]).hypot(fb.v[i] - ft.v[i]), fg_mask[i]));
            if fg_mask.iter().any(|&m| m) {
                epe.push(mean_where(d));
            }
            bg.push(mean_where((0..fb.len()).map(|i| (fb.u[i].hypot(fb.v[i]), bg_mask[i]))));
        }
        let epe = epe.iter().sum::<f64>() / epe.len() as f64;
        let bg = bg.iter().sum::<f64>() / bg.len() as f64;
        ensure(epe < 0.3, format!("{}: foreground EPE {epe:.3} px", p.record.video_id))?;
        ensure(
            bg < 0.05,
            format!("{}: blank background flow {bg:.4} px", p.record.video_id),
        )?;
        worst_epe = worst_epe.max(epe);
        worst_bg = worst_bg.max(bg);
    }
    Ok(format!(
        "10 clips, worst foreground EPE {worst_epe:.3} px, worst blank background flow {worst_bg:.4} px"
    ))
}

fn shake_sensitivity() -> Check {
    let g = GenerationConfig::default();
    let mut ratios = Vec::new();
    for p in still_plans(&g) {
        let mut shaky = p.camera.clone();
        shaky.shake_amplitude = 0.02;
        let bg_flow = |v: &VideoTensor| {
            let per: Vec<f64> = flows(v, &g.flow_params)
                .iter()
                .map(|(f, _, bg)| mean_where((0..f.len()).map(|i| (f.u[i].hypot(f.v[i]), bg[i]))))
                .collect();
            per.iter().sum::<f64>() / per.len() as f64
        };
        let still = bg_flow(&render(&p, &p.camera, false));
        let moved = bg_flow(&render(&p, &shaky, false));
        ensure(
            moved > still,
            format!("{}: shaken {moved:.4} <= still {still:.4}", p.record.video_id),
        )?;
        ratios.push(moved / still.max(1e-12));
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("10/10 clips increased, smallest ratio {min:.1}x"))
}

fn encoding() -> Check {
    let mut rng = seed::rng(77);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let bound = rng.random_range(0.5..40.0);
        let f = rng.random_range(-bound..=bound);
        let err = (decode_value(encode_value(f, bound), bound) - f).abs();
        ensure(err <= bound / 255.0, format!("value {f} bound {bound}: error {err}"))?;
        worst = worst.max(err / bound);
    }
    for bound in [1.0, 5.0, 20.0, 33.3] {
        ensure(
            encode_value(0.0, bound) == 128,
            format!("zero encodes to {}", encode_value(0.0, bound)),
        )?;
    }
    Ok(format!(
        "10^4 values, worst error {:.4} x bound/255; zero -> 128",
        worst * 255.0
    ))
}

fn gradient_checks() -> Check {
    let (d, c, n) = (5, 3, 8);
    let mut rng = seed::rng(91);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let bx: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let mut worst: f64 = 0.0;
    for kind in [
        ModelKind::SoftmaxLinear,
        ModelKind::Mlp {
            hidden_units: 7,
            dropout_p: 0.5,
        },
    ] {
        let mut model = StreamModel::new(kind, d, c, 13).unwrap();
        model.params.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
        let (_, grad) = model.loss_and_grad(&bx, &ys, None).map_err(|e| e.to_string())?;
        let h = 1e-6;
        for (k, &g) in grad.iter().enumerate() {
            let mut probe = model.clone();
            probe.params[k] += h;
            let up = probe.loss_and_grad(&bx, &ys, None).unwrap().0;
            probe.params[k] -= 2.0 * h;
            let down = probe.loss_and_grad(&bx, &ys, None).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
            ensure(
                rel < 1e-4,
                format!("{kind:?} param {k}: analytic {g} numeric {numeric}"),
            )?;
            worst = worst.max(rel);
        }
    }
    Ok(format!(
        "linear and 1-hidden-layer models, worst relative error {worst:.1e}"
    ))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_synthact"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn determinism(tmp: &Path) -> Check {
    let cfg = tmp.join("det.ini");
    fs::write(&cfg, "[generation]\nvideos_per_class = 3\n").unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (d1, d2) = (tmp.join("det1"), tmp.join("det2"));
    cli(&["gen", "--config", &s(&cfg), "--out", &s(&d1), "--seed", "11"])?;
    cli(&[
        "gen",
        "--config",
        &s(&cfg),
        "--out",
        &s(&d2),
        "--seed",
        "11",
        "--threads",
        "2",
    ])?;
    let (c1, c2) = (tree_checksum(&d1).unwrap(), tree_checksum(&d2).unwrap());
    ensure(c1 == c2, format!("gen checksums differ: {c1} vs {c2}"))?;

    let (k1, k2) = (tmp.join("a.ckpt"), tmp.join("b.ckpt"));
    for k in [&k1, &k2] {
        cli(&[
            "train",
            "--dataset",
            &s(&d1),
            "--split",
            "1",
            "--network",
            "net2",
            "--out",
            &s(k),
            "--seed",
            "5",
        ])?;
    }
    let (b1, b2) = (fs::read(&k1).unwrap(), fs::read(&k2).unwrap());
    ensure(b1 == b2, "train checkpoints differ")?;
    let loss = |k: &Path| fs::read(k.with_extension("real_syn_flow.loss.csv")).unwrap();
    ensure(loss(&k1) == loss(&k2), "loss histories differ")?;
    Ok(format!(
        "gen checksum {}..., checkpoints identical ({} bytes)",
        &c1[..12],
        b1.len()
    ))
}

fn split_means(rep: &ExperimentReport, conf: &str) -> Vec<(u8, f64)> {
    (1..=3u8)
        .map(|s| {
            let v: Vec<f64> = rep
                .rows
                .iter()
                .filter(|r| r.configuration == conf && r.split == s)
                .map(|r| r.fused_accuracy)
                .collect();
            (s, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

fn mean(rep: &ExperimentReport, conf: &str) -> Result<f64, String> {
    rep.mean_of(conf).ok_or_else(|| format!("no rows for {conf:?}"))
}

fn desk_classification(e2: &ExperimentReport) -> Check {
    let per_split = split_means(e2, "real+100% synthetic");
    let text: Vec<String> = per_split.iter().map(|(s, a)| format!("split {s} {a:.3}")).collect();
    for (s, a) in &per_split {
        ensure(*a >= 0.625, format!("split {s}: {a:.3} < 0.625 ({})", text.join(", ")))?;
    }
    Ok(format!(
        "Network-2 fused accuracy, mean of 3 seeds: {}",
        text.join(", ")
    ))
}

fn trend_e2(e2: &ExperimentReport) -> Check {
    let none = mean(e2, "real only")?;
    let half = mean(e2, "real+50% synthetic")?;
    let all = mean(e2, "real+100% synthetic")?;
    let text = format!("real only {none:.3}, +half {half:.3}, +all {all:.3}");
    ensure(none <= half && half <= all, format!("not monotone: {text}"))?;
    Ok(text)
}

fn trend_e3(e3: &ExperimentReport) -> Check {
    let none = mean(e3, "10% real + 0% synthetic")?;
    let all = mean(e3, "10% real + 100% synthetic")?;
    let syn = mean(e3, "0% real + 100% synthetic")?;
    let text = format!("10% real {none:.3} -> +all synthetic {all:.3}; synthetic only {syn:.3}");
    ensure(all > none, format!("no gain: {text}"))?;
    ensure(syn >= 0.25, format!("synthetic-only below 2x chance: {text}"))?;
    Ok(text)
}

fn sampler_property() -> Check {
    let mut rng = seed::rng(2024);
    let mut checked = 0usize;
    for t in 0..100_000u64 {
        let k = rng.random_range(1..=8usize);
        let l = rng.random_range(1..=12usize);
        let n = rng.random_range(1..=400usize);
        let mode = if t % 2 == 0 {
            SamplingMode::TrainRandom
        } else {
            SamplingMode::TestCenter
        };
        let sampler = SegmentSampler {
            num_segments: k,
            mode,
            stack_length: l,
        };
        let starts = match sample_segments(n, &sampler, t) {
            Ok(s) => s,
            Err(_) => {
                ensure(n < k * l, format!("n={n} k={k} l={l} rejected"))?;
                continue;
            }
        };
        ensure(n >= k * l, format!("n={n} k={k} l={l} accepted though too short"))?;
        let bounds = segment_bounds(n, k);
        ensure(bounds.len() == k && starts.len() == k, "wrong segment count")?;
        ensure(
            bounds[0].0 == 0 && bounds[k - 1].1 == n,
            format!("segments do not cover 0..{n}"),
        )?;
        for w in bounds.windows(2) {
            ensure(w[0].1 == w[1].0, "segments not contiguous")?;
        }
        for (&s, &(b, e)) in starts.iter().zip(&bounds) {
            ensure(b < e, "empty segment")?;
            ensure(
                s >= b && s + l <= e,
                format!("snippet {s}..{} outside segment {b}..{e}", s + l),
            )?;
        }
        checked += 1;
    }
    Ok(format!("10^5 trials ({checked} valid, rest correctly rejected)"))
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut suite = Suite { results: Vec::new() };

    suite.run(1, "flow shift oracle", flow_shift_oracle);
    suite.run(2, "flow energy", flow_energy_checks);
    suite.run(3, "background invariance", background_invariance);
    suite.run(4, "shake sensitivity", shake_sensitivity);
    suite.run(5, "flow encoding", encoding);
    suite.run(6, "gradient checks", gradient_checks);
    suite.run(7, "determinism", || determinism(tmp.path()));

    let data = tmp.path().join("desk");
    let prepared = catch_unwind(AssertUnwindSafe(|| {
        generate_dataset(&GenerationConfig::default(), &data).unwrap();
        let cfg = ExperimentConfig::default();
        let bench = Workbench::open(&data, &cfg.network.features).unwrap();
        let e2 = run_e2_synthetic_augmentation(&cfg, &bench).unwrap();
        let e3_cfg = ExperimentConfig {
            experiment_id: ExperimentId::E3,
            keep_fractions: vec![0.1, 0.0],
            synthetic_counts: vec![1.0],
            ..ExperimentConfig::default()
        };
        let e3 = run_e3_real_reduction(&e3_cfg, &bench).unwrap();
        (e2, e3)
    }));
    match &prepared {
        Ok((e2, e3)) => {
            suite.run(8, "desk-scale classification", || desk_classification(e2));
            suite.run(9, "trend E2", || trend_e2(e2));
            suite.run(10, "trend E3", || trend_e3(e3));
        }
        Err(_) => {
            for (id, name) in [(8, "desk-scale classification"), (9, "trend E2"), (10, "trend E3")] {
                suite.run(id, name, || Err("desk dataset or experiment failed".into()));
            }
        }
    }
    suite.run(11, "segment sampler", sampler_property);

    let total = started.elapsed().as_secs_f64();
    suite.run(12, "suite wall-clock", || {
        ensure(total < 1800.0, format!("{total:.0} s >= 30 min"))?;
        Ok(format!("{:.1} min", total / 60.0))
    });

    let failed: Vec<usize> = suite.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
