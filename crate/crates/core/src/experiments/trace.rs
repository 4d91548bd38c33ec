// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::diffusion::{sample_observed, NoisePredictor};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::seed::{self, tag};
use crate::stats::{StatConfig, Statistic};

/// Mean statistic of a sample population along the reverse chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub statistic: Statistic,
    /// `T, T-1, ..., 0`.
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
}

impl GenerationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", self.statistic);
        for (t, v) in self.steps.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

pub fn generation_trace<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &Schedule,
    statistic: Statistic,
    stats: &StatConfig,
    window: usize,
    n_samples: usize,
    seed: u64,
) -> Result<GenerationTrace> {
    if n_samples == 0 || window < 2 {
        return Err(Error::domain("need at least one sample and a window of 2"));
    }
    let steps = schedule.steps();
    let mut sums = vec![0.0; steps + 1];
    for i in 0..n_samples {
        let mut rng = seed::stream(seed, &[tag::SAMPLE, i as u64]);
        sample_observed(model, schedule, window, &mut rng, None, |t, x| {
            sums[steps - t] += stats.evaluate_channel(statistic, x).value;
        })?;
    }
    Ok(GenerationTrace {
        statistic,
        steps: (0..=steps).rev().collect(),
        values: sums.into_iter().map(|s| s / n_samples as f64).collect(),
    })
}
