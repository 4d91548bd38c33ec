// SPDX-License-Identifier: MIT OR Apache-2.0

//! How much does a family's normalized curve move when only `T` changes?

use serde::{Deserialize, Serialize};

use crate::ant::{ant_score, curve, normalize, CurveConfig, Metric};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schedule::{posterior_variance_sum, ScheduleSpec};

/// Points on the shared progress axis `p = (t - 1) / (T - 1)`.
pub const PROGRESS_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub spec: String,
    pub steps: usize,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub score: f64,
    pub posterior_variance_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub template: String,
    /// Largest RMS distance between any two curves on the progress axis.
    pub dispersion: f64,
    /// `(max - min) / mean` of the posterior variance sums.
    pub posterior_variance_spread: f64,
    pub entries: Vec<ScanEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub dataset: String,
    pub statistic: String,
    pub metric: Metric,
    pub steps: Vec<usize>,
    pub families: Vec<FamilySummary>,
}

/// Linear interpolation of a curve sampled at `p = (t - 1) / (T - 1)` onto
/// `points` evenly spaced positions in `[0, 1]`. A single-point curve is
/// held constant.
pub fn on_progress_axis(values: &[f64], points: usize) -> Vec<f64> {
    let n = values.len();
    (0..points)
        .map(|k| {
            if n == 1 {
                return values[0];
            }
            let pos = k as f64 / (points - 1) as f64 * (n - 1) as f64;
            let lo = (pos.floor() as usize).min(n - 2);
            let frac = pos - lo as f64;
            values[lo] + frac * (values[lo + 1] - values[lo])
        })
        .collect()
}

/// Largest pairwise RMS distance between equally long curves.
pub fn dispersion(curves: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let ms = curves[i]
                .iter()
                .zip(&curves[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / curves[i].len() as f64;
            worst = worst.max(ms.sqrt());
        }
    }
    worst
}

pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean
}

/// Rebuilds each template at every `T` in `steps` and summarizes the spread.
pub fn robustness_scan(
    dataset: &Dataset,
    templates: &[ScheduleSpec],
    steps: &[usize],
    cfg: &CurveConfig,
    metric: Metric,
) -> Result<ScanReport> {
    if steps.is_empty() {
        return Err(Error::domain("the list of step counts is empty"));
    }
    let mut families = Vec::with_capacity(templates.len());
    for template in templates {
        let mut entries = Vec::with_capacity(steps.len());
        let mut axis_curves = Vec::with_capacity(steps.len());
        for &t in steps {
            let spec = template.with_steps(t);
            let schedule = spec.build()?;
            let c = curve(dataset, &schedule, cfg)?;
            let normalized = normalize(&c.values)?.values;
            axis_curves.push(on_progress_axis(&normalized, PROGRESS_POINTS));
            entries.push(ScanEntry {
                spec: spec.to_string(),
                steps: t,
                score: ant_score(&c, metric)?.score,
                posterior_variance_sum: posterior_variance_sum(&schedule),
                raw: c.values,
                normalized,
            });
        }
        let sums: Vec<f64> = entries.iter().map(|e| e.posterior_variance_sum).collect();
        families.push(FamilySummary {
            family: template.family().name().to_string(),
            template: template.to_string(),
            dispersion: dispersion(&axis_curves),
            posterior_variance_spread: relative_spread(&sums),
            entries,
        });
    }
    Ok(ScanReport {
        dataset: dataset.name.clone(),
        statistic: cfg.statistic.name().to_string(),
        metric,
        steps: steps.to_vec(),
        families,
    })
}

impl ScanReport {
    /// Long format: one row per `(template, T, t)`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("template,spec,T,t,progress,raw,normalized\n");
        for fam in &self.families {
            for e in &fam.entries {
                for (i, (raw, norm)) in e.raw.iter().zip(&e.normalized).enumerate() {
                    let progress = if e.steps == 1 { 0.0 } else { i as f64 / (e.steps - 1) as f64 };
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        fam.template,
                        e.spec,
                        e.steps,
                        i + 1,
                        progress,
                        raw,
                        norm
                    ));
                }
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("template,family,dispersion,posterior_variance_spread\n");
        for fam in &self.families {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fam.template, fam.family, fam.dispersion, fam.posterior_variance_spread
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_ar1;

    #[test]
    fn interpolation_endpoints_and_midpoints() {
        let v = on_progress_axis(&[1.0, 0.0], 5);
        assert_eq!(v, vec![1.0, 0.75, 0.5, 0.25, 0.0]);
        assert_eq!(on_progress_axis(&[0.3], 3), vec![0.3; 3]);
        let c = [1.0, 0.5, 0.2, 0.0];
        let g = on_progress_axis(&c, 4);
        for (a, b) in g.iter().zip(c) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dispersion_cases() {
        assert_eq!(dispersion(&[vec![1.0, 2.0]]), 0.0);
        assert_eq!(dispersion(&[vec![0.0; 4], vec![0.0; 4]]), 0.0);
        let d = dispersion(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]]);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_and_identical_have_zero_dispersion() {
        let ds = generate_ar1(0.9, 8, 128, 1).unwrap();
        let cfg = CurveConfig::default();
        let single = robustness_scan(&ds, &[ScheduleSpec::cosine(10, 1.0)], &[20], &cfg, Metric::Auc).unwrap();
        assert_eq!(single.families[0].dispersion, 0.0);
        assert_eq!(single.families[0].posterior_variance_spread, 0.0);
        let same = robustness_scan(&ds, &[ScheduleSpec::linear(10)], &[20, 20, 20], &cfg, Metric::Auc).unwrap();
        assert_eq!(same.families[0].dispersion, 0.0);
        assert!(robustness_scan(&ds, &[ScheduleSpec::linear(10)], &[], &cfg, Metric::Auc).is_err());
    }

    #[test]
    fn csv_row_count() {
        let ds = generate_ar1(0.9, 4, 64, 1).unwrap();
        let r = robustness_scan(&ds, &[ScheduleSpec::linear(10)], &[5, 10], &CurveConfig::default(), Metric::Auc).unwrap();
        assert_eq!(r.curves_csv().lines().count(), 1 + 15);
        assert_eq!(r.summary_csv().lines().count(), 2);
    }
}
