use log::info;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp { hidden_units: usize, dropout_p: f64 },
}

impl ModelKind {
    pub fn validate(&self) -> Result<()> {
        if let ModelKind::Mlp {
            hidden_units,
            dropout_p,
        } = *self
        {
            if hidden_units == 0 {
                return Err(Error::invalid("hidden_units must be positive"));
            }
            if !(0.0..1.0).contains(&dropout_p) {
                return Err(Error::invalid(format!("dropout {dropout_p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// A per-stream classifier. Parameters are one flat vector:
/// linear `[W (C x D), b (C)]`, MLP `[W1 (H x D), b1 (H), W2 (C x H), b2 (C)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (o, (row, bi)) in out.iter_mut().zip(w.chunks_exact(d).zip(b)) {
        *o = bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

impl StreamModel {
    /// Linear models start at zero; MLP weights use Xavier-uniform init.
    pub fn new(kind: ModelKind, input_dim: usize, num_classes: usize, seed_value: u64) -> Result<Self> {
        kind.validate()?;
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::invalid(
                "a model needs a positive input dimension and at least 2 classes",
            ));
        }
        let (d, c) = (input_dim, num_classes);
        let params = match kind {
            ModelKind::SoftmaxLinear => vec![0.0; c * d + c],
            ModelKind::Mlp { hidden_units: h, .. } => {
                let mut rng = seed::rng(seed_value);
                let mut xavier = |fan_in: usize, fan_out: usize, n: usize| -> Vec<f64> {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                };
                let mut p = xavier(d, h, h * d);
                p.extend(vec![0.0; h]);
                p.extend(xavier(h, c, c * h));
                p.extend(vec![0.0; c]);
                p
            }
        };
        Ok(StreamModel {
            kind,
            input_dim,
            num_classes,
            params,
        })
    }

    pub fn param_count(kind: ModelKind, input_dim: usize, num_classes: usize) -> usize {
        match kind {
            ModelKind::SoftmaxLinear => num_classes * input_dim + num_classes,
            ModelKind::Mlp { hidden_units: h, .. } => h * input_dim + h + num_classes * h + num_classes,
        }
    }

    pub fn hidden_units(&self) -> usize {
        match self.kind {
            ModelKind::SoftmaxLinear => 0,
            ModelKind::Mlp { hidden_units, .. } => hidden_units,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "feature of length {} for a model expecting {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Hidden activations after ReLU and the optional dropout mask.
    fn hidden(&self, x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden_units());
        let mut a = vec![0.0; h];
        affine(&self.params[..h * d], &self.params[h * d..h * d + h], x, &mut a);
        for (j, v) in a.iter_mut().enumerate() {
            *v = v.max(0.0) * mask.map_or(1.0, |m| m[j]);
        }
        a
    }

    fn logits(&self, x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
        let (d, c) = (self.input_dim, self.num_classes);
        let mut z = vec![0.0; c];
        match self.kind {
            ModelKind::SoftmaxLinear => affine(&self.params[..c * d], &self.params[c * d..], x, &mut z),
            ModelKind::Mlp { hidden_units: h, .. } => {
                let hid = self.hidden(x, mask);
                let off = h * d + h;
                affine(
                    &self.params[off..off + c * h],
                    &self.params[off + c * h..],
                    &hid,
                    &mut z,
                );
            }
        }
        z
    }

    /// Class probabilities with dropout off.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(softmax(&self.logits(x, None)))
    }

    /// Mean cross-entropy over the batch and its gradient. `masks` holds one
    /// hidden-layer multiplier vector per example (already inverse-scaled);
    /// `None` runs without dropout.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize], masks: Option<&[Vec<f64>]>) -> Result<(f64, Vec<f64>)> {
        if xs.is_empty() || xs.len() != ys.len() || masks.is_some_and(|m| m.len() != xs.len()) {
            return Err(Error::invalid("batch features, labels and masks must align"));
        }
        let (d, c) = (self.input_dim, self.num_classes);
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let inv_n = 1.0 / xs.len() as f64;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            self.check_input(x)?;
            if y >= c {
                return Err(Error::invalid(format!("label {y} with {c} classes")));
            }
            let mask = masks.map(|m| m[i].as_slice());
            match self.kind {
                ModelKind::SoftmaxLinear => {
                    let p = softmax(&self.logits(x, None));
                    loss -= p[y].max(f64::MIN_POSITIVE).ln();
                    for k in 0..c {
                        let g = (p[k] - (k == y) as u8 as f64) * inv_n;
                        grad[k * d..(k + 1) * d]
                            .iter_mut()
                            .zip(x.iter())
                            .for_each(|(gw, xv)| *gw += g * xv);
                        grad[c * d + k] += g;
                    }
                }
                ModelKind::Mlp { hidden_units: h, .. } => {
                    let hid = self.hidden(x, mask);
                    let off = h * d + h;
                    let mut z = vec![0.0; c];
                    affine(
                        &self.params[off..off + c * h],
                        &self.params[off + c * h..],
                        &hid,
                        &mut z,
                    );
                    let p = softmax(&z);
                    loss -= p[y].max(f64::MIN_POSITIVE).ln();
                    let mut dh = vec![0.0; h];
                    for k in 0..c {
                        let g = (p[k] - (k == y) as u8 as f64) * inv_n;
                        let row = off + k * h;
                        for j in 0..h {
                            grad[row + j] += g * hid[j];
                            dh[j] += g * self.params[row + j];
                        }
                        grad[off + c * h + k] += g;
                    }
                    // back through mask and ReLU; hid > 0 iff the unit was active and kept
                    for j in 0..h {
                        if hid[j] <= 0.0 {
                            continue;
                        }
                        let g = dh[j] * mask.map_or(1.0, |m| m[j]);
                        grad[j * d..(j + 1) * d]
                            .iter_mut()
                            .zip(x.iter())
                            .for_each(|(gw, xv)| *gw += g * xv);
                        grad[h * d + j] += g;
                    }
                }
            }
        }
        Ok((loss * inv_n, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    /// Multiplier applied once the decay epoch is reached.
    pub lr_decay: f64,
    /// Fraction of `epochs` after which `lr_decay` applies.
    pub lr_decay_at: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            momentum: 0.9,
            learning_rate: 0.05,
            lr_decay: 0.1,
            lr_decay_at: 2.0 / 3.0,
            epochs: 60,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be non-negative"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::invalid("lr_decay must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_at) {
            return Err(Error::invalid("lr_decay_at must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decay_epoch = (self.lr_decay_at * self.epochs as f64).ceil() as usize;
        if epoch >= decay_epoch && self.lr_decay_at < 1.0 {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }
}

/// Mini-batch SGD with classical momentum. Returns the mean loss of each epoch.
pub fn train_stream(
    mut model: StreamModel,
    xs: &[Vec<f64>],
    ys: &[usize],
    cfg: &TrainConfig,
) -> Result<(StreamModel, Vec<f64>)> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid(
            "training needs equally many (nonzero) features and labels",
        ));
    }
    for x in xs {
        model.check_input(x)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite training feature".into()));
        }
    }
    let batch = cfg.batch_size.min(xs.len());
    if batch < cfg.batch_size {
        info!(
            "batch size {} exceeds {} training examples; using {batch}",
            cfg.batch_size,
            xs.len()
        );
    }
    let keep = match model.kind {
        ModelKind::Mlp { dropout_p, .. } => 1.0 - dropout_p,
        ModelKind::SoftmaxLinear => 1.0,
    };
    let h = model.hidden_units();
    let mut velocity = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng_for(cfg.seed, &[epoch as u64]);
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        for idx in order.chunks(batch) {
            let bx: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<usize> = idx.iter().map(|&i| ys[i]).collect();
            let masks: Option<Vec<Vec<f64>>> = (h > 0 && keep < 1.0).then(|| {
                idx.iter()
                    .map(|_| {
                        (0..h)
                            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect()
                    })
                    .collect()
            });
            let (loss, grad) = model.loss_and_grad(&bx, &by, masks.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became {loss} in epoch {epoch}")));
            }
            total += loss * idx.len() as f64;
            for ((w, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - lr * g;
                *w += *v;
            }
        }
        history.push(total / xs.len() as f64);
    }
    if model.params.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("non-finite weights after training".into()));
    }
    Ok((model, history))
}
