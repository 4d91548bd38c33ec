// SPDX-License-Identifier: MIT OR Apache-2.0

//! Step-embedding ablation: the same denoiser trained with and without the
//! step embedding.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::denoiser::{train, EmbeddingConfig, TrainConfig, Trained, WindowSampler};
use crate::diffusion::sample;
use crate::error::Result;
use crate::schedule::Schedule;
use crate::seed::{self, tag};
use crate::stats::{StatConfig, Statistic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// `train.embedding.enabled` is overridden per arm.
    pub train: TrainConfig,
    /// Generated windows per arm for the sample-quality proxy.
    pub samples: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub embedding: bool,
    pub final_loss: f64,
    pub sample_iaat: f64,
    /// `|sample_iaat - real_iaat|`.
    pub iaat_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub real_iaat: f64,
    pub with_embedding: ArmReport,
    pub without_embedding: ArmReport,
}

impl AblationReport {
    /// `loss(without) - loss(with)`; positive when the embedding helps.
    pub fn loss_gap(&self) -> f64 {
        self.without_embedding.final_loss - self.with_embedding.final_loss
    }
}

fn mean_iaat(windows: &[Vec<f64>]) -> f64 {
    let stats = StatConfig::default();
    windows
        .iter()
        .map(|w| stats.evaluate_channel(Statistic::Iaat, w).value)
        .sum::<f64>()
        / windows.len() as f64
}

fn arm(dataset: &Dataset, schedule: &Schedule, cfg: &AblationConfig, enabled: bool, real_iaat: f64) -> Result<(Trained, ArmReport)> {
    let train_cfg = TrainConfig {
        embedding: EmbeddingConfig {
            enabled,
            ..cfg.train.embedding
        },
        ..cfg.train.clone()
    };
    let trained = train(dataset, schedule, &train_cfg)?;
    // Both arms sample from the same noise stream.
    let mut rng = seed::stream(cfg.train.seed, &[tag::SAMPLE]);
    let windows = (0..cfg.samples)
        .map(|_| sample(&trained.params, schedule, cfg.train.window, &mut rng, None))
        .collect::<Result<Vec<_>>>()?;
    let sample_iaat = mean_iaat(&windows);
    let report = ArmReport {
        embedding: enabled,
        final_loss: trained.smoothed_final_loss(),
        sample_iaat,
        iaat_distance: (sample_iaat - real_iaat).abs(),
    };
    Ok((trained, report))
}

/// Trains both arms on identical batches and noise draws.
pub fn de_ablation(dataset: &Dataset, schedule: &Schedule, cfg: &AblationConfig) -> Result<AblationReport> {
    let sampler = WindowSampler::new(dataset, cfg.train.window)?;
    let mut rng = seed::stream(cfg.train.seed, &[tag::SAMPLE, 1]);
    let real = sampler.batch(cfg.samples.max(1), &mut rng);
    let real_iaat = mean_iaat(&real);
    let (_, with_embedding) = arm(dataset, schedule, cfg, true, real_iaat)?;
    let (_, without_embedding) = arm(dataset, schedule, cfg, false, real_iaat)?;
    Ok(AblationReport {
        real_iaat,
        with_embedding,
        without_embedding,
    })
}
