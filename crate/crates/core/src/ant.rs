// SPDX-License-Identifier: MIT OR Apache-2.0

//! Non-stationarity curves, discrepancy metrics, the ANT score and
//! schedule ranking.
//!
//! A curve records, for every diffusion step, the mean statistic of the
//! corrupted dataset. The score multiplies three factors:
//!
//! * `lambda_linear`: discrepancy between the min-max normalized curve and
//!   the straight line from 1 to 0;
//! * `lambda_noise = 1 + l(T) / l(1)` on the raw curve;
//! * `lambda_step = 1 + 1 / T`.
//!
//! Lower scores are better.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diffusion::forward_step_in_place;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::schedule::{Schedule, ScheduleSpec};
use crate::seed::{self, tag};
use crate::stats::{StatConfig, Statistic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Mse,
    Mae,
    Corr,
    R2,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Auc, Metric::Mse, Metric::Mae, Metric::Corr, Metric::R2];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Corr => "corr",
            Metric::R2 => "r2",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::domain(format!("unknown metric `{s}`")))
    }
}

/// Settings for building a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveConfig {
    pub statistic: Statistic,
    pub stats: StatConfig,
    /// Corrupted trajectories per series.
    pub draws: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            statistic: Statistic::Iaat,
            stats: StatConfig::default(),
            draws: 1,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonStationarityCurve {
    /// `values[t - 1]` is the statistic aggregate at step `t`.
    pub values: Vec<f64>,
    pub statistic: Statistic,
    pub spec: ScheduleSpec,
    pub draws: usize,
}

impl NonStationarityCurve {
    pub fn steps(&self) -> usize {
        self.values.len()
    }
}

/// Corrupts every series `draws` times under `schedule` and averages the
/// statistic per step.
///
/// Series are mean-scaled first. The trajectory for `(series i, draw r)`
/// uses its own substream keyed by `(seed, i, r)`, and the per-step means
/// are reduced in index order, so the curve does not depend on how the
/// work is scheduled.
pub fn curve(dataset: &Dataset, schedule: &Schedule, cfg: &CurveConfig) -> Result<NonStationarityCurve> {
    if cfg.draws == 0 {
        return Err(Error::domain("draws must be at least 1"));
    }
    let scaled = dataset.mean_scaled()?;
    let series = scaled.series();
    let dim = scaled.dim();
    let steps = schedule.steps();
    let pairs = series.len() * cfg.draws;

    let per_pair = map_indexed(pairs, cfg.execution, |p| {
        let (i, r) = (p / cfg.draws, p % cfg.draws);
        let mut rng = seed::stream(cfg.seed, &[tag::CORRUPT, i as u64, r as u64]);
        let mut x = series[i].values().to_vec();
        (1..=steps)
            .map(|t| {
                forward_step_in_place(&mut x, t, schedule, &mut rng);
                cfg.stats.evaluate_values(cfg.statistic, &x, dim)
            })
            .collect::<Vec<_>>()
    });

    let mut values = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut sum = 0.0;
        let mut all_degenerate = true;
        for row in &per_pair {
            sum += row[t].value;
            all_degenerate &= row[t].degenerate;
        }
        if all_degenerate {
            return Err(Error::DegenerateCurve(t + 1));
        }
        values.push(sum / pairs as f64);
    }
    Ok(NonStationarityCurve {
        values,
        statistic: cfg.statistic,
        spec: schedule.spec.clone(),
        draws: cfg.draws,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Set when the curve was constant; `values` is then all zeros.
    pub degenerate: bool,
}

/// Min-max scaling to `[0, 1]`.
pub fn normalize(values: &[f64]) -> Result<Normalized> {
    if values.len() < 2 {
        return Err(Error::domain(format!(
            "normalizing a curve needs at least 2 points, got {}",
            values.len()
        )));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        return Ok(Normalized {
            values: vec![0.0; values.len()],
            degenerate: true,
        });
    }
    Ok(Normalized {
        values: values.iter().map(|v| (v - lo) / (hi - lo)).collect(),
        degenerate: false,
    })
}

/// `linspace(1, 0, n)`.
pub fn reference_line(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 1.0 - i as f64 / (n - 1) as f64).collect()
}

/// Trapezoidal area under `y` sampled uniformly on `[0, 1]`.
pub fn trapezoid_unit(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let dx = 1.0 / (y.len() - 1) as f64;
    y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (average ranks for ties); `None` if either
/// input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub value: f64,
    /// The metric was undefined for this input (constant curve).
    pub degenerate: bool,
}

/// Distance between a normalized curve and `linspace(1, 0, T)`.
pub fn discrepancy(normalized: &[f64], metric: Metric) -> Discrepancy {
    let n = normalized.len();
    let reference = reference_line(n);
    let ok = |value| Discrepancy {
        value,
        degenerate: false,
    };
    let undefined = Discrepancy {
        value: 1.0,
        degenerate: true,
    };
    let pointwise = normalized.iter().zip(&reference).map(|(a, b)| a - b);
    match metric {
        Metric::Auc => ok((trapezoid_unit(normalized) - trapezoid_unit(&reference)).abs()),
        Metric::Mse => ok(pointwise.map(|d| d * d).sum::<f64>() / n as f64),
        Metric::Mae => ok(pointwise.map(f64::abs).sum::<f64>() / n as f64),
        Metric::Corr => match pearson(normalized, &reference) {
            Some(r) => ok(1.0 - r),
            None => undefined,
        },
        Metric::R2 => {
            let mean = normalized.iter().sum::<f64>() / n as f64;
            let ss_tot: f64 = normalized.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = pointwise.map(|d| d * d).sum();
            if ss_tot > 0.0 {
                // 1 - R^2 with the reference line as the prediction.
                ok(ss_res / ss_tot)
            } else {
                undefined
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntScore {
    pub lambda_linear: f64,
    pub lambda_noise: f64,
    pub lambda_step: f64,
    pub score: f64,
    pub metric: Metric,
}

/// Scores a raw curve `l(1..T)`.
pub fn ant_score_values(values: &[f64], metric: Metric) -> Result<AntScore> {
    let normalized = normalize(values)?;
    let steps = values.len();
    let first = values[0];
    if first == 0.0 {
        return Err(Error::domain("curve starts at 0; lambda_noise is undefined"));
    }
    let lambda_linear = discrepancy(&normalized.values, metric).value;
    let lambda_noise = 1.0 + values[steps - 1] / first;
    let lambda_step = 1.0 + 1.0 / steps as f64;
    Ok(AntScore {
        lambda_linear,
        lambda_noise,
        lambda_step,
        score: lambda_linear * lambda_noise * lambda_step,
        metric,
    })
}

pub fn ant_score(curve: &NonStationarityCurve, metric: Metric) -> Result<AntScore> {
    ant_score_values(&curve.values, metric)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankConfig {
    pub curve: CurveConfig,
    pub metric: Metric,
    /// Drop candidates with more steps than this.
    pub max_steps: Option<usize>,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            curve: CurveConfig::default(),
            metric: Metric::Auc,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub spec: ScheduleSpec,
    pub score: AntScore,
    pub curve: NonStationarityCurve,
}

/// Scores every admissible candidate and sorts them best first. Equal
/// scores prefer fewer steps, then linear < cosine < sigmoid, then smaller
/// temperature.
pub fn rank(dataset: &Dataset, candidates: &[ScheduleSpec], cfg: &RankConfig) -> Result<Vec<Ranked>> {
    let kept: Vec<&ScheduleSpec> = candidates
        .iter()
        .filter(|s| cfg.max_steps.is_none_or(|m| s.steps() <= m))
        .collect();
    if kept.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut ranked = map_indexed(kept.len(), cfg.curve.execution, |i| {
        let spec = kept[i];
        let schedule = spec.build()?;
        let curve = curve(dataset, &schedule, &cfg.curve)?;
        let score = ant_score(&curve, cfg.metric)?;
        Ok(Ranked {
            spec: spec.clone(),
            score,
            curve,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        let (sa, fa, ta) = a.spec.tie_key();
        let (sb, fb, tb) = b.spec.tie_key();
        a.score
            .score
            .total_cmp(&b.score.score)
            .then(sa.cmp(&sb))
            .then(fa.cmp(&fb))
            .then(ta.total_cmp(&tb))
    });
    Ok(ranked)
}

/// One row of the ranking report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub spec: String,
    pub lambda_linear: f64,
    pub lambda_noise: f64,
    pub lambda_step: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub dataset: String,
    pub statistic: Statistic,
    pub metric: Metric,
    pub results: Vec<RankRow>,
}

impl RankReport {
    pub fn new(dataset: &str, statistic: Statistic, metric: Metric, ranked: &[Ranked]) -> Self {
        Self {
            dataset: dataset.to_string(),
            statistic,
            metric,
            results: ranked
                .iter()
                .map(|r| RankRow {
                    spec: r.spec.to_string(),
                    lambda_linear: r.score.lambda_linear,
                    lambda_noise: r.score.lambda_noise,
                    lambda_step: r.score.lambda_step,
                    score: r.score.score,
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,spec,lambda_linear,lambda_noise,lambda_step,score\n");
        for (i, r) in self.results.iter().enumerate() {
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{}\n",
                i + 1,
                r.spec,
                r.lambda_linear,
                r.lambda_noise,
                r.lambda_step,
                r.score
            ));
        }
        out
    }
}
