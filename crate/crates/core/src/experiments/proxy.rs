// SPDX-License-Identifier: MIT OR Apache-2.0

//! Step classification: can a small CNN tell which diffusion step a noisy
//! window came from?
//!
//! The classifier is `Conv1D(1 -> 4, kernel 3) -> ReLU -> Flatten ->
//! Linear -> softmax` over `T` classes, trained with cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::denoiser::WindowSampler;
use crate::diffusion::forward_closed;
use crate::error::{Error, Result};
use crate::nn::{Adam, Dense};
use crate::schedule::Schedule;
use crate::seed::{self, tag};

pub const CONV_CHANNELS: usize = 4;
pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub window: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            window: 32,
            train_per_class: 64,
            test_per_class: 32,
            epochs: 30,
            batch: 32,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// `counts[true][predicted]` over the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    /// Builds the matrix from `(true, predicted)` class indices.
    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut counts = vec![vec![0u64; classes]; classes];
        for (truth, pred) in pairs {
            counts[truth][pred] += 1;
        }
        let total: u64 = counts.iter().flatten().sum();
        let diag: u64 = (0..classes).map(|i| counts[i][i]).sum();
        let accuracy = if total == 0 { 0.0 } else { diag as f64 / total as f64 };
        Self { counts, accuracy }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyParams {
    pub window: usize,
    pub classes: usize,
    /// `CONV_CHANNELS x KERNEL`, row-major.
    pub conv_weights: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub head: Dense,
}

/// Post-rectifier convolution features: `conv_features(...)[c][j]`.
pub type Features = Vec<Vec<f64>>;

impl ProxyParams {
    pub fn init<R: Rng + ?Sized>(window: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if window < KERNEL {
            return Err(Error::domain(format!("window {window} is shorter than the kernel")));
        }
        if classes == 0 {
            return Err(Error::domain("at least one class is required"));
        }
        let scale = (2.0 / KERNEL as f64).sqrt();
        let conv_weights = (0..CONV_CHANNELS * KERNEL)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            window,
            classes,
            conv_weights,
            conv_bias: vec![0.0; CONV_CHANNELS],
            head: Dense::he(CONV_CHANNELS * (window - KERNEL + 1), classes, rng),
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            window: self.window,
            classes: self.classes,
            conv_weights: vec![0.0; self.conv_weights.len()],
            conv_bias: vec![0.0; CONV_CHANNELS],
            head: Dense::zeros(self.head.inputs, self.head.outputs),
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv_weights.len() + self.conv_bias.len() + self.head.param_count()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.conv_weights.iter().chain(&self.conv_bias).chain(self.head.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.conv_weights
            .iter_mut()
            .chain(self.conv_bias.iter_mut())
            .chain(self.head.params_mut())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    fn conv_pre(&self, x: &[f64]) -> Features {
        let out_len = self.window - KERNEL + 1;
        (0..CONV_CHANNELS)
            .map(|c| {
                let w = &self.conv_weights[c * KERNEL..(c + 1) * KERNEL];
                (0..out_len)
                    .map(|j| self.conv_bias[c] + (0..KERNEL).map(|k| w[k] * x[j + k]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    pub fn conv_features(&self, x: &[f64]) -> Features {
        self.conv_pre(x)
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let flat: Vec<f64> = self.conv_features(x).concat();
        self.head.forward(&flat)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// A corrupted window labelled with its zero-based class `t - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub class: usize,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// Mean cross-entropy over `examples` and its gradient.
pub fn loss_and_grads(params: &ProxyParams, examples: &[Example]) -> Result<(f64, ProxyParams)> {
    if examples.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let n = examples.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for ex in examples {
        if ex.x.len() != params.window || ex.class >= params.classes {
            return Err(Error::Shape("example does not match the classifier".into()));
        }
        let pre = params.conv_pre(&ex.x);
        let flat: Vec<f64> = pre.iter().flatten().map(|v| v.max(0.0)).collect();
        let logp = log_softmax(&params.head.forward(&flat));
        loss -= logp[ex.class] / n;
        let upstream: Vec<f64> = logp
            .iter()
            .enumerate()
            .map(|(k, lp)| (lp.exp() - if k == ex.class { 1.0 } else { 0.0 }) / n)
            .collect();
        let dflat = params.head.backward(&flat, &upstream, &mut grads.head);
        let out_len = params.window - KERNEL + 1;
        for c in 0..CONV_CHANNELS {
            for j in 0..out_len {
                if pre[c][j] <= 0.0 {
                    continue;
                }
                let g = dflat[c * out_len + j];
                grads.conv_bias[c] += g;
                for k in 0..KERNEL {
                    grads.conv_weights[c * KERNEL + k] += g * ex.x[j + k];
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            message: "non-finite classifier loss".into(),
        });
    }
    Ok((loss, grads))
}

/// Balanced examples: `per_class` windows corrupted to each step `1..=T`.
pub fn make_examples<R: Rng + ?Sized>(
    sampler: &WindowSampler,
    schedule: &Schedule,
    per_class: usize,
    rng: &mut R,
) -> Vec<Example> {
    let mut out = Vec::with_capacity(per_class * schedule.steps());
    for t in 1..=schedule.steps() {
        for _ in 0..per_class {
            let x0 = sampler.draw(rng);
            let x = forward_closed(&x0, t, schedule, rng).expect("t within 1..=T");
            out.push(Example { x, class: t - 1 });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub example: usize,
    pub t: usize,
    pub channel: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyOutcome {
    pub confusion: ConfusionMatrix,
    pub params: ProxyParams,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Convolution features of every test example, for external embedding.
    pub features: Vec<FeatureRow>,
}

/// Splits series into train and test pools: the last fifth (at least one)
/// is held out.
fn split(dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::domain("step classification needs at least two series"));
    }
    let n_test = (n / 5).max(1);
    let series = dataset.series();
    Ok((
        Dataset::new(format!("{}-train", dataset.name), series[..n - n_test].to_vec())?,
        Dataset::new(format!("{}-test", dataset.name), series[n - n_test..].to_vec())?,
    ))
}

pub fn proxy_step_classification(dataset: &Dataset, schedule: &Schedule, cfg: &ProxyConfig) -> Result<ProxyOutcome> {
    let shortest = dataset.series().iter().map(|s| s.len()).min().unwrap_or(0);
    if cfg.window < KERNEL || cfg.window > shortest {
        return Err(Error::domain(format!(
            "window {} must lie in [{KERNEL}, {shortest}]",
            cfg.window
        )));
    }
    if cfg.batch == 0 || cfg.train_per_class == 0 || cfg.test_per_class == 0 {
        return Err(Error::domain("batch and per-class counts must be positive"));
    }
    let (train_set, test_set) = split(dataset)?;
    let mut rng = seed::stream(cfg.seed, &[tag::PROXY]);
    let train = make_examples(&WindowSampler::new(&train_set, cfg.window)?, schedule, cfg.train_per_class, &mut rng);
    let test = make_examples(&WindowSampler::new(&test_set, cfg.window)?, schedule, cfg.test_per_class, &mut rng);

    let mut params = ProxyParams::init(cfg.window, schedule.steps(), &mut seed::stream(cfg.seed, &[tag::PROXY, tag::INIT]))?;
    let mut opt = Adam::new(params.param_count(), cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, grads) = loss_and_grads(&params, &batch)?;
            total += loss * batch.len() as f64;
            opt.update(params.params_mut(), grads.params());
        }
        losses.push(total / train.len() as f64);
    }

    let confusion = ConfusionMatrix::from_pairs(schedule.steps(), test.iter().map(|ex| (ex.class, params.predict(&ex.x))));
    let features = test
        .iter()
        .enumerate()
        .flat_map(|(i, ex)| {
            params
                .conv_features(&ex.x)
                .into_iter()
                .enumerate()
                .map(move |(channel, values)| FeatureRow {
                    example: i,
                    t: ex.class + 1,
                    channel,
                    values,
                })
        })
        .collect();
    Ok(ProxyOutcome {
        confusion,
        params,
        losses,
        features,
    })
}
