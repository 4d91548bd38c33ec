// SPDX-License-Identifier: MIT OR Apache-2.0

//! Noise schedules: candidate specifications and their realized tables.
//!
//! Every constructor funnels through [`Schedule::from_betas`], so `alpha_bar`
//! is always the running product of `1 - beta` and the posterior variances
//! follow from it with the `alpha_bar_0 = 1` convention.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.1;
pub const MAX_BETA: f64 = 0.999;
/// `sqrt(alpha_bar_T)` after the zero-terminal-SNR rescale.
pub const ZERO_SNR_FLOOR: f64 = 1e-6;

const COSINE_OFFSET: f64 = 0.008;
const SIGMOID_START: f64 = -3.0;
const SIGMOID_END: f64 = 3.0;

pub const GRID_STEPS: [usize; 5] = [10, 20, 50, 75, 100];
pub const GRID_COSINE_TAUS: [f64; 3] = [0.5, 1.0, 2.0];
pub const GRID_SIGMOID_TAUS: [f64; 3] = [0.3, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Cosine,
    Sigmoid,
    Tabulated,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Cosine => "cosine",
            Family::Sigmoid => "sigmoid",
            Family::Tabulated => "tabulated",
        }
    }
}

/// A candidate schedule before realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleSpec {
    Linear {
        steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
    Cosine {
        steps: usize,
        tau: f64,
    },
    Sigmoid {
        steps: usize,
        tau: f64,
    },
    Tabulated {
        betas: Vec<f64>,
        /// Where the table came from, kept for labels and spec strings.
        source: Option<String>,
    },
    /// The inner schedule after the zero-terminal-SNR rescale.
    ZeroSnr(Box<ScheduleSpec>),
}

impl ScheduleSpec {
    pub fn linear(steps: usize) -> Self {
        ScheduleSpec::Linear {
            steps,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }

    pub fn cosine(steps: usize, tau: f64) -> Self {
        ScheduleSpec::Cosine { steps, tau }
    }

    pub fn sigmoid(steps: usize, tau: f64) -> Self {
        ScheduleSpec::Sigmoid { steps, tau }
    }

    pub fn steps(&self) -> usize {
        match self {
            ScheduleSpec::Linear { steps, .. }
            | ScheduleSpec::Cosine { steps, .. }
            | ScheduleSpec::Sigmoid { steps, .. } => *steps,
            ScheduleSpec::Tabulated { betas, .. } => betas.len(),
            ScheduleSpec::ZeroSnr(inner) => inner.steps(),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ScheduleSpec::Linear { .. } => Family::Linear,
            ScheduleSpec::Cosine { .. } => Family::Cosine,
            ScheduleSpec::Sigmoid { .. } => Family::Sigmoid,
            ScheduleSpec::Tabulated { .. } => Family::Tabulated,
            ScheduleSpec::ZeroSnr(inner) => inner.family(),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            ScheduleSpec::Cosine { tau, .. } | ScheduleSpec::Sigmoid { tau, .. } => Some(*tau),
            ScheduleSpec::ZeroSnr(inner) => inner.tau(),
            _ => None,
        }
    }

    /// Same family and parameters with a different number of steps.
    /// Tabulated specs have a fixed length and are returned unchanged.
    pub fn with_steps(&self, steps: usize) -> Self {
        match self {
            ScheduleSpec::Linear {
                beta_start,
                beta_end,
                ..
            } => ScheduleSpec::Linear {
                steps,
                beta_start: *beta_start,
                beta_end: *beta_end,
            },
            ScheduleSpec::Cosine { tau, .. } => ScheduleSpec::Cosine { steps, tau: *tau },
            ScheduleSpec::Sigmoid { tau, .. } => ScheduleSpec::Sigmoid { steps, tau: *tau },
            ScheduleSpec::Tabulated { .. } => self.clone(),
            ScheduleSpec::ZeroSnr(inner) => ScheduleSpec::ZeroSnr(Box::new(inner.with_steps(steps))),
        }
    }

    pub fn build(&self) -> Result<Schedule> {
        match self {
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
            } => make_linear(*steps, *beta_start, *beta_end),
            ScheduleSpec::Cosine { steps, tau } => make_cosine(*steps, *tau),
            ScheduleSpec::Sigmoid { steps, tau } => make_sigmoid(*steps, *tau),
            ScheduleSpec::Tabulated { betas, source } => {
                let mut s = from_table(betas)?;
                s.spec = ScheduleSpec::Tabulated {
                    betas: betas.clone(),
                    source: source.clone(),
                };
                Ok(s)
            }
            ScheduleSpec::ZeroSnr(inner) => rescale_zero_terminal_snr(&inner.build()?),
        }
    }

    /// Short human label, e.g. `Lin(100)` or `Cos(75,2.0)`.
    pub fn label(&self) -> String {
        match self {
            ScheduleSpec::Linear { steps, .. } => format!("Lin({steps})"),
            ScheduleSpec::Cosine { steps, tau } => format!("Cos({steps},{tau:?})"),
            ScheduleSpec::Sigmoid { steps, tau } => format!("Sig({steps},{tau:?})"),
            ScheduleSpec::Tabulated { betas, .. } => format!("Table({})", betas.len()),
            ScheduleSpec::ZeroSnr(inner) => format!("Zero[{}]", inner.label()),
        }
    }

    /// Ordering key for ties: fewer steps, then family, then temperature.
    pub(crate) fn tie_key(&self) -> (usize, Family, f64) {
        (self.steps(), self.family(), self.tau().unwrap_or(0.0))
    }
}

/// Formats as the CLI spec-string syntax, e.g. `cos:T=75,tau=2.0`.
impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
            } => {
                write!(f, "lin:T={steps}")?;
                if *beta_start != DEFAULT_BETA_START || *beta_end != DEFAULT_BETA_END {
                    write!(f, ",b1={beta_start:?},bT={beta_end:?}")?;
                }
                Ok(())
            }
            ScheduleSpec::Cosine { steps, tau } => write!(f, "cos:T={steps},tau={tau:?}"),
            ScheduleSpec::Sigmoid { steps, tau } => write!(f, "sig:T={steps},tau={tau:?}"),
            ScheduleSpec::Tabulated { betas, source } => match source {
                Some(path) => write!(f, "table:@{path}"),
                None => write!(f, "table:T={}", betas.len()),
            },
            ScheduleSpec::ZeroSnr(inner) => write!(f, "{inner}+zero"),
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::domain(format!("expected key=value, got `{p}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn param<T: std::str::FromStr>(params: &[(String, String)], key: &str) -> Result<Option<T>> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| {
            v.parse()
                .map_err(|_| Error::domain(format!("invalid value `{v}` for `{key}`")))
        })
        .transpose()
}

fn required<T: std::str::FromStr>(params: &[(String, String)], key: &str, spec: &str) -> Result<T> {
    param(params, key)?.ok_or_else(|| Error::domain(format!("`{spec}` is missing `{key}`")))
}

/// Parses a spec string. `table:@file.json` reads the file, which holds
/// either a JSON array of betas or a schedule object with a `beta` field.
pub fn parse_spec(text: &str) -> Result<ScheduleSpec> {
    let text = text.trim();
    if let Some(inner) = text.strip_suffix("+zero") {
        return Ok(ScheduleSpec::ZeroSnr(Box::new(parse_spec(inner)?)));
    }
    let (kind, body) = text
        .split_once(':')
        .ok_or_else(|| Error::domain(format!("schedule spec `{text}` lacks a family prefix")))?;
    if kind == "table" {
        let path = body
            .strip_prefix('@')
            .ok_or_else(|| Error::domain("table specs take the form `table:@file.json`"))?;
        let betas = read_table(path)?;
        return Ok(ScheduleSpec::Tabulated {
            betas,
            source: Some(path.to_string()),
        });
    }
    let params = parse_params(body)?;
    let steps: usize = required(&params, "T", text)?;
    match kind {
        "lin" | "linear" => Ok(ScheduleSpec::Linear {
            steps,
            beta_start: param(&params, "b1")?.unwrap_or(DEFAULT_BETA_START),
            beta_end: param(&params, "bT")?.unwrap_or(DEFAULT_BETA_END),
        }),
        "cos" | "cosine" => Ok(ScheduleSpec::Cosine {
            steps,
            tau: param(&params, "tau")?.unwrap_or(1.0),
        }),
        "sig" | "sigmoid" => Ok(ScheduleSpec::Sigmoid {
            steps,
            tau: param(&params, "tau")?.unwrap_or(1.0),
        }),
        other => Err(Error::domain(format!("unknown schedule family `{other}`"))),
    }
}

impl std::str::FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_spec(s)
    }
}

fn read_table(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum TableFile {
        Bare(Vec<f64>),
        Object { beta: Vec<f64> },
    }
    Ok(match serde_json::from_str(&text)? {
        TableFile::Bare(b) => b,
        TableFile::Object { beta } => beta,
    })
}

/// Which variance the reverse transition uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReverseVariance {
    /// `((1 - abar_{t-1}) / (1 - abar_t)) * beta_t`.
    #[default]
    Posterior,
    /// Raw `beta_t`.
    Beta,
}

/// A realized schedule. Tables are indexed by step `t = 1..=T` through the
/// accessor methods; the raw vectors are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
    reverse_variance: ReverseVariance,
}

impl Schedule {
    fn from_betas(spec: ScheduleSpec, beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::domain("a schedule needs at least one step"));
        }
        if let Some((i, b)) = beta.iter().enumerate().find(|(_, b)| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::domain(format!("beta_{} = {b} is outside (0, 1)", i + 1)));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar: Vec<f64> = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let posterior_var = beta
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[i]) * b
            })
            .collect();
        Ok(Self {
            spec,
            beta,
            alpha,
            alpha_bar,
            posterior_var,
            reverse_variance: ReverseVariance::Posterior,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn posterior_vars(&self) -> &[f64] {
        &self.posterior_var
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `alpha_bar(0)` is 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn posterior_var(&self, t: usize) -> f64 {
        self.posterior_var[t - 1]
    }

    pub fn with_reverse_variance(mut self, kind: ReverseVariance) -> Self {
        self.reverse_variance = kind;
        self
    }

    pub fn reverse_variance(&self) -> ReverseVariance {
        self.reverse_variance
    }

    /// Variance of the reverse transition at step `t`, honouring the
    /// configured [`ReverseVariance`].
    pub fn sigma2(&self, t: usize) -> f64 {
        match self.reverse_variance {
            ReverseVariance::Posterior => self.posterior_var(t),
            ReverseVariance::Beta => self.beta(t),
        }
    }

    pub fn to_json(&self) -> ScheduleJson {
        ScheduleJson {
            family: self.spec.family(),
            tau: self.spec.tau(),
            steps: self.steps(),
            spec: self.spec.to_string(),
            beta: self.beta.clone(),
            alpha_bar: self.alpha_bar.clone(),
            posterior_var: self.posterior_var.clone(),
        }
    }
}

/// On-disk form of a realized schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub family: Family,
    pub tau: Option<f64>,
    #[serde(rename = "T")]
    pub steps: usize,
    pub spec: String,
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub posterior_var: Vec<f64>,
}

fn positive_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::domain("T must be at least 1"));
    }
    Ok(())
}

fn positive_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("temperature {tau} must be positive")));
    }
    Ok(())
}

/// Betas that realize a target `alpha_bar(t)` curve, clamped at [`MAX_BETA`].
fn betas_from_alpha_bar(steps: usize, alpha_bar: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut prev = alpha_bar(0);
    (1..=steps)
        .map(|t| {
            let cur = alpha_bar(t);
            let beta = (1.0 - cur / prev).min(MAX_BETA);
            prev = cur;
            beta
        })
        .collect()
}

pub fn make_linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Schedule> {
    positive_steps(steps)?;
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::domain(format!(
            "linear endpoints need 0 < beta_1 <= beta_T < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas = if steps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (steps - 1) as f64;
        (0..steps)
            .map(|i| if i == steps - 1 { beta_end } else { beta_start + step * i as f64 })
            .collect()
    };
    Schedule::from_betas(
        ScheduleSpec::Linear {
            steps,
            beta_start,
            beta_end,
        },
        betas,
    )
}

/// Squared-cosine `alpha_bar` raised to the power `tau`.
pub fn cosine_alpha_bar(u: f64, tau: f64) -> f64 {
    let f = |u: f64| ((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2).cos().powi(2);
    (f(u) / f(0.0)).powf(tau)
}

pub fn make_cosine(steps: usize, tau: f64) -> Result<Schedule> {
    positive_steps(steps)?;
    positive_tau(tau)?;
    let betas = betas_from_alpha_bar(steps, |t| cosine_alpha_bar(t as f64 / steps as f64, tau));
    Schedule::from_betas(ScheduleSpec::Cosine { steps, tau }, betas)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic `alpha_bar` normalized so that it runs from 1 at `u = 0` to 0 at `u = 1`.
pub fn sigmoid_alpha_bar(u: f64, tau: f64) -> f64 {
    let g = |u: f64| logistic(-(SIGMOID_START + u * (SIGMOID_END - SIGMOID_START)) / tau);
    (g(u) - g(1.0)) / (g(0.0) - g(1.0))
}

pub fn make_sigmoid(steps: usize, tau: f64) -> Result<Schedule> {
    positive_steps(steps)?;
    positive_tau(tau)?;
    let betas = betas_from_alpha_bar(steps, |t| sigmoid_alpha_bar(t as f64 / steps as f64, tau));
    Schedule::from_betas(ScheduleSpec::Sigmoid { steps, tau }, betas)
}

pub fn from_table(betas: &[f64]) -> Result<Schedule> {
    Schedule::from_betas(
        ScheduleSpec::Tabulated {
            betas: betas.to_vec(),
            source: None,
        },
        betas.to_vec(),
    )
}

/// Affinely rescales `sqrt(alpha_bar)` so the first step is kept and the last
/// step has (floored) zero signal.
pub fn rescale_zero_terminal_snr(schedule: &Schedule) -> Result<Schedule> {
    let steps = schedule.steps();
    let first = schedule.alpha_bar(1).sqrt();
    let last = schedule.alpha_bar(steps).sqrt();
    if last.is_nan() || last >= first {
        return Err(Error::domain(
            "zero-SNR rescale needs alpha_bar_T < alpha_bar_1",
        ));
    }
    let gain = first / (first - last);
    let rescaled: Vec<f64> = (1..=steps)
        .map(|t| {
            let r = if t == steps {
                ZERO_SNR_FLOOR
            } else {
                (schedule.alpha_bar(t).sqrt() - last) * gain
            };
            r * r
        })
        .collect();
    let mut prev = 1.0;
    let mut betas = Vec::with_capacity(steps);
    for ab in rescaled {
        betas.push(1.0 - ab / prev);
        prev = ab;
    }
    let spec = match &schedule.spec {
        ScheduleSpec::ZeroSnr(_) => schedule.spec.clone(),
        other => ScheduleSpec::ZeroSnr(Box::new(other.clone())),
    };
    let mut out = Schedule::from_betas(spec, betas)?;
    out.reverse_variance = schedule.reverse_variance;
    Ok(out)
}

pub fn posterior_variance_sum(schedule: &Schedule) -> f64 {
    schedule.posterior_var.iter().sum()
}

/// The 35 default candidates: linear, cosine and sigmoid families over
/// `T in {10, 20, 50, 75, 100}`.
pub fn candidate_grid() -> Vec<ScheduleSpec> {
    let mut grid: Vec<ScheduleSpec> = GRID_STEPS.iter().map(|&t| ScheduleSpec::linear(t)).collect();
    for &tau in &GRID_COSINE_TAUS {
        grid.extend(GRID_STEPS.iter().map(|&t| ScheduleSpec::cosine(t, tau)));
    }
    for &tau in &GRID_SIGMOID_TAUS {
        grid.extend(GRID_STEPS.iter().map(|&t| ScheduleSpec::sigmoid(t, tau)));
    }
    grid
}
