// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small epsilon-prediction MLP with hand-written backprop.
//!
//! Architecture: `[x_t (++ step embedding)] -> Dense -> ReLU -> Dense ->
//! ReLU -> Dense -> eps_hat`. Without the embedding the network never sees
//! `t` and must infer the noise level from `x_t` alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diffusion::{forward_closed_with_noise, standard_normal, NoisePredictor};
use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, Adam, Dense};
use crate::schedule::Schedule;
use crate::seed::{self, tag};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EMBEDDING_DIM: usize = 32;
const DIVERGENCE_LOSS: f64 = 1e6;

/// Sinusoidal step embedding: `sin(t / 10000^(2i/dim))` at `2i`, `cos` at `2i + 1`.
pub fn step_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::domain(format!("embedding dimension {dim} must be even and positive")));
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-((2 * i) as f64) / dim as f64);
        let angle = t as f64 * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub enabled: bool,
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl EmbeddingConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }

    fn width(&self) -> usize {
        if self.enabled {
            self.dim
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserParams {
    pub window: usize,
    pub hidden: usize,
    pub embedding: EmbeddingConfig,
    pub layers: [Dense; 3],
}

/// Activations kept for the backward pass.
struct Cache {
    input: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
}

impl DenoiserParams {
    pub fn zeros(window: usize, hidden: usize, embedding: EmbeddingConfig) -> Self {
        let inputs = window + embedding.width();
        Self {
            window,
            hidden,
            embedding,
            layers: [
                Dense::zeros(inputs, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, window),
            ],
        }
    }

    pub fn init<R: Rng + ?Sized>(window: usize, hidden: usize, embedding: EmbeddingConfig, rng: &mut R) -> Result<Self> {
        if window == 0 || hidden == 0 {
            return Err(Error::domain("window and hidden width must be positive"));
        }
        if embedding.enabled {
            step_embedding(0, embedding.dim)?;
        }
        let inputs = window + embedding.width();
        Ok(Self {
            window,
            hidden,
            embedding,
            layers: [
                Dense::he(inputs, hidden, rng),
                Dense::he(hidden, hidden, rng),
                Dense::he(hidden, window, rng),
            ],
        })
    }

    /// Zeroed parameters of the same shape, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.window, self.hidden, self.embedding)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    fn input(&self, x: &[f64], t: usize) -> Vec<f64> {
        let mut input = x.to_vec();
        if self.embedding.enabled {
            input.extend(step_embedding(t, self.embedding.dim).expect("validated at init"));
        }
        input
    }

    fn forward_cached(&self, x: &[f64], t: usize) -> (Vec<f64>, Cache) {
        let input = self.input(x, t);
        let pre1 = self.layers[0].forward(&input);
        let h1 = relu(&pre1);
        let pre2 = self.layers[1].forward(&h1);
        let h2 = relu(&pre2);
        let out = self.layers[2].forward(&h2);
        (
            out,
            Cache {
                input,
                pre1,
                h1,
                pre2,
                h2,
            },
        )
    }

    /// Back-propagates `upstream = dL/d eps_hat`, accumulating into `grads`
    /// when given, and returns `dL/dx`.
    fn backward(&self, cache: &Cache, upstream: &[f64], grads: Option<&mut DenoiserParams>) -> Vec<f64> {
        let dinput = match grads {
            Some(g) => {
                let [g0, g1, g2] = &mut g.layers;
                let dh2 = self.layers[2].backward(&cache.h2, upstream, g2);
                let dh1 = self.layers[1].backward(&cache.h1, &relu_backward(&cache.pre2, &dh2), g1);
                self.layers[0].backward(&cache.input, &relu_backward(&cache.pre1, &dh1), g0)
            }
            None => {
                let dh2 = self.layers[2].backward_input(upstream);
                let dh1 = self.layers[1].backward_input(&relu_backward(&cache.pre2, &dh2));
                self.layers[0].backward_input(&relu_backward(&cache.pre1, &dh1))
            }
        };
        dinput[..self.window].to_vec()
    }

    pub fn forward(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if x.len() != self.window {
            return Err(Error::Shape(format!(
                "denoiser expects a window of {}, got {}",
                self.window,
                x.len()
            )));
        }
        Ok(self.forward_cached(x, t).0)
    }
}

impl NoisePredictor for DenoiserParams {
    fn predict(&self, x: &[f64], t: usize) -> Vec<f64> {
        self.forward(x, t).expect("window length checked by caller")
    }

    fn vjp(&self, x: &[f64], t: usize, upstream: &[f64]) -> Vec<f64> {
        let (_, cache) = self.forward_cached(x, t);
        self.backward(&cache, upstream, None)
    }
}

/// One training example with its step and noise fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedExample {
    pub x0: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
}

/// Draws `t ~ U{1..T}` and `eps ~ N(0, I)` for each window.
pub fn draw_examples<R: Rng + ?Sized>(batch: &[Vec<f64>], schedule: &Schedule, rng: &mut R) -> Vec<NoisedExample> {
    batch
        .iter()
        .map(|x0| {
            let t = rng.random_range(1..=schedule.steps());
            let eps = standard_normal(rng, x0.len());
            NoisedExample {
                x0: x0.clone(),
                t,
                eps,
            }
        })
        .collect()
}

/// Mean squared noise-prediction error over fixed examples, with gradients.
pub fn loss_and_grads_fixed(
    params: &DenoiserParams,
    examples: &[NoisedExample],
    schedule: &Schedule,
) -> Result<(f64, DenoiserParams)> {
    if examples.is_empty() {
        return Err(Error::domain("training batch is empty"));
    }
    let mut grads = params.zeros_like();
    let norm = (examples.len() * params.window) as f64;
    let mut loss = 0.0;
    for ex in examples {
        if ex.x0.len() != params.window {
            return Err(Error::Shape(format!(
                "window of {} does not match denoiser width {}",
                ex.x0.len(),
                params.window
            )));
        }
        let xt = forward_closed_with_noise(&ex.x0, ex.t, schedule, &ex.eps);
        let (pred, cache) = params.forward_cached(&xt, ex.t);
        let upstream: Vec<f64> = pred
            .iter()
            .zip(&ex.eps)
            .map(|(p, e)| {
                loss += (p - e).powi(2);
                2.0 * (p - e) / norm
            })
            .collect();
        params.backward(&cache, &upstream, Some(&mut grads));
    }
    let loss = loss / norm;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            message: "non-finite training loss".into(),
        });
    }
    Ok((loss, grads))
}

/// Noise-prediction loss on a batch of clean windows; steps and noise are
/// drawn from `rng`.
pub fn loss_and_grads<R: Rng + ?Sized>(
    params: &DenoiserParams,
    batch: &[Vec<f64>],
    schedule: &Schedule,
    rng: &mut R,
) -> Result<(f64, DenoiserParams)> {
    let examples = draw_examples(batch, schedule, rng);
    loss_and_grads_fixed(params, &examples, schedule)
}

/// Noise-prediction loss for any predictor (no gradients).
pub fn epsilon_loss<P: NoisePredictor + ?Sized>(model: &P, examples: &[NoisedExample], schedule: &Schedule) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let xt = forward_closed_with_noise(&ex.x0, ex.t, schedule, &ex.eps);
        let pred = model.predict(&xt, ex.t);
        total += pred.iter().zip(&ex.eps).map(|(p, e)| (p - e).powi(2)).sum::<f64>();
        count += ex.eps.len();
    }
    total / count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window: usize,
    pub hidden: usize,
    pub embedding: EmbeddingConfig,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 32,
            hidden: DEFAULT_HIDDEN,
            embedding: EmbeddingConfig::default(),
            lr: 1e-3,
            steps: 2000,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: DenoiserParams,
    /// Batch loss at every iteration.
    pub losses: Vec<f64>,
}

impl Trained {
    /// Mean of the last `min(len, 10%)` losses, at least one.
    pub fn smoothed_final_loss(&self) -> f64 {
        smoothed_tail(&self.losses)
    }
}

pub fn smoothed_tail(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return f64::NAN;
    }
    let w = (losses.len() / 10).max(1);
    losses[losses.len() - w..].iter().sum::<f64>() / w as f64
}

/// Mean-scaled windows of length `window` drawn uniformly from every channel
/// of every series.
pub struct WindowSampler {
    channels: Vec<Vec<f64>>,
    window: usize,
}

impl WindowSampler {
    pub fn new(dataset: &Dataset, window: usize) -> Result<Self> {
        let scaled = dataset.mean_scaled()?;
        let channels: Vec<Vec<f64>> = scaled
            .series()
            .iter()
            .flat_map(|s| s.channels().map(<[f64]>::to_vec).collect::<Vec<_>>())
            .filter(|c| c.len() >= window)
            .collect();
        if window == 0 || channels.is_empty() {
            return Err(Error::domain(format!(
                "no series is long enough for windows of {window}"
            )));
        }
        Ok(Self { channels, window })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = &self.channels[rng.random_range(0..self.channels.len())];
        let start = rng.random_range(0..=c.len() - self.window);
        c[start..start + self.window].to_vec()
    }

    pub fn batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Adam on the noise-prediction objective. Deterministic in `config.seed`.
pub fn train(dataset: &Dataset, schedule: &Schedule, config: &TrainConfig) -> Result<Trained> {
    let mut init_rng = seed::stream(config.seed, &[tag::INIT]);
    let mut params = DenoiserParams::init(config.window, config.hidden, config.embedding, &mut init_rng)?;
    if config.steps == 0 {
        return Ok(Trained {
            params,
            losses: Vec::new(),
        });
    }
    if config.batch == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    let sampler = WindowSampler::new(dataset, config.window)?;
    let mut rng = seed::stream(config.seed, &[tag::TRAIN]);
    let mut opt = Adam::new(params.param_count(), config.lr);
    let mut losses = Vec::with_capacity(config.steps);
    for iteration in 0..config.steps {
        let batch = sampler.batch(config.batch, &mut rng);
        let (loss, grads) = loss_and_grads(&params, &batch, schedule, &mut rng)?;
        losses.push(loss);
        if loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                iteration,
                loss,
                trace: losses,
            });
        }
        opt.update(params.params_mut(), grads.params());
    }
    Ok(Trained { params, losses })
}
