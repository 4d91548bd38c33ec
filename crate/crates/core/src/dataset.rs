// SPDX-License-Identifier: MIT OR Apache-2.0

//! Time-series containers, CSV ingestion, synthetic generators and scaling.
//!
//! Two CSV layouts are understood:
//!
//! * **wide** (canonical): header `id,v1,v2,...`, one series per row. Rows
//!   may be shorter than the header; trailing empty cells are padding. A
//!   multivariate record is written as `d` consecutive rows sharing an `id`,
//!   one per channel.
//! * **long**: header `id,index,value`, sorted by `(id, index)`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// A univariate or multivariate series. Multivariate values are stored
/// channel-major: channel `c` occupies `values[c * len .. (c + 1) * len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    dim: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::multivariate(id, vec![values])
    }

    pub fn multivariate(id: impl Into<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        let dim = channels.len();
        if dim == 0 {
            return Err(Error::Shape(format!("series `{id}` has no channels")));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape(format!(
                "series `{id}` has channels of unequal length"
            )));
        }
        if len < 2 {
            return Err(Error::Shape(format!(
                "series `{id}` has length {len}, need at least 2"
            )));
        }
        let values: Vec<f64> = channels.into_iter().flatten().collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "series `{id}` has a non-finite value at position {pos}"
            )));
        }
        Ok(Self { id, dim, values })
    }

    /// Number of observations per channel.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let len = self.len();
        &self.values[c * len..(c + 1) * len]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.len())
    }

    /// Same shape and id, new values. Used after corruption or scaling.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            id: self.id.clone(),
            dim: self.dim,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    dim: usize,
    series: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, series: Vec<TimeSeries>) -> Result<Self> {
        let name = name.into();
        let Some(first) = series.first() else {
            return Err(Error::Shape(format!("dataset `{name}` is empty")));
        };
        let dim = first.dim();
        if let Some(bad) = series.iter().find(|s| s.dim() != dim) {
            return Err(Error::Shape(format!(
                "series `{}` has {} channels, dataset `{name}` expects {dim}",
                bad.id,
                bad.dim()
            )));
        }
        Ok(Self { name, dim, series })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Scales every channel of every series by its own mean absolute value.
    pub fn mean_scaled(&self) -> Result<Dataset> {
        let series = self
            .series
            .iter()
            .map(|s| {
                let channels = s
                    .channels()
                    .map(|c| {
                        let scale = mean_abs(c);
                        if scale == 0.0 {
                            return Err(Error::DegenerateScale(s.id.clone()));
                        }
                        Ok(c.iter().map(|v| v / scale).collect::<Vec<_>>())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(s.with_values(channels.concat()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: self.name.clone(),
            dim: self.dim,
            series,
        })
    }

    /// Returns a dataset keeping only series with at least `len` observations,
    /// each truncated to its first `len` values.
    pub fn truncated(&self, len: usize) -> Result<Dataset> {
        let series = self
            .series
            .iter()
            .filter(|s| s.len() >= len)
            .map(|s| {
                let channels = s.channels().map(|c| c[..len].to_vec()).collect();
                TimeSeries::multivariate(s.id.clone(), channels)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.name.clone(), series)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Wide,
    Long,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::domain(format!("unknown CSV layout `{other}`"))),
        }
    }
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("`{cell}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            column,
            message: format!("`{cell}` is not finite"),
        });
    }
    Ok(value)
}

fn record_row(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

pub fn load_csv(path: impl AsRef<Path>, layout: Layout) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&name, &text, layout)
}

pub fn parse_csv(name: &str, text: &str, layout: Layout) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    match layout {
        Layout::Wide => parse_wide(name, &mut reader),
        Layout::Long => parse_long(name, &mut reader),
    }
}

/// Consecutive records sharing an id, in file order.
struct Group {
    id: String,
    first_row: usize,
    channels: Vec<Vec<f64>>,
}

fn push_channel(groups: &mut Vec<Group>, seen: &mut HashSet<String>, id: &str, row: usize, channel: Vec<f64>) -> Result<()> {
    match groups.last_mut() {
        Some(g) if g.id == id => g.channels.push(channel),
        _ => {
            if !seen.insert(id.to_string()) {
                return Err(Error::Parse {
                    row,
                    column: 1,
                    message: format!("id `{id}` appears in more than one block"),
                });
            }
            groups.push(Group {
                id: id.to_string(),
                first_row: row,
                channels: vec![channel],
            });
        }
    }
    Ok(())
}

fn groups_to_dataset(name: &str, groups: Vec<Group>) -> Result<Dataset> {
    let dim = groups.first().map_or(1, |g| g.channels.len());
    let mut series = Vec::with_capacity(groups.len());
    for g in groups {
        if g.channels.len() != dim {
            return Err(Error::Shape(format!(
                "record `{}` (row {}) has {} channels, expected {dim}",
                g.id,
                g.first_row,
                g.channels.len()
            )));
        }
        series.push(TimeSeries::multivariate(g.id, g.channels)?);
    }
    Dataset::new(name, series)
}

fn parse_wide(name: &str, reader: &mut csv::Reader<&[u8]>) -> Result<Dataset> {
    let mut groups = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let row = record_row(&record);
        let id = record.get(0).unwrap_or("").trim();
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "missing id".into(),
            });
        }
        let cells: Vec<&str> = record.iter().skip(1).collect();
        let used = cells
            .iter()
            .rposition(|c| !c.trim().is_empty())
            .map_or(0, |p| p + 1);
        let values = cells[..used]
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, row, j + 2))
            .collect::<Result<Vec<_>>>()?;
        push_channel(&mut groups, &mut seen, id, row, values)?;
    }
    groups_to_dataset(name, groups)
}

fn parse_long(name: &str, reader: &mut csv::Reader<&[u8]>) -> Result<Dataset> {
    let mut groups: Vec<Group> = Vec::new();
    let mut seen = HashSet::new();
    let mut last_index: Option<i64> = None;
    for record in reader.records() {
        let record = record?;
        let row = record_row(&record);
        if record.len() < 3 {
            return Err(Error::Parse {
                row,
                column: record.len() + 1,
                message: "expected columns id,index,value".into(),
            });
        }
        let id = record[0].trim();
        let index: i64 = record[1].trim().parse().map_err(|_| Error::Parse {
            row,
            column: 2,
            message: format!("`{}` is not an integer index", &record[1]),
        })?;
        let value = parse_cell(&record[2], row, 3)?;
        match groups.last_mut() {
            Some(g) if g.id == id => {
                if last_index.is_some_and(|prev| index <= prev) {
                    return Err(Error::Parse {
                        row,
                        column: 2,
                        message: format!("index {index} is not increasing for id `{id}`"),
                    });
                }
                g.channels[0].push(value);
            }
            _ => push_channel(&mut groups, &mut seen, id, row, vec![value])?,
        }
        last_index = Some(index);
    }
    groups_to_dataset(name, groups)
}

/// Serializes in the wide layout. Values are written with the shortest
/// representation that parses back to the same `f64`.
pub fn to_wide_csv(dataset: &Dataset) -> String {
    let width = dataset.series().iter().map(TimeSeries::len).max().unwrap_or(0);
    let mut out = String::from("id");
    for j in 1..=width {
        let _ = write!(out, ",v{j}");
    }
    out.push('\n');
    for s in dataset.series() {
        for channel in s.channels() {
            out.push_str(&s.id);
            for v in channel {
                let _ = write!(out, ",{v}");
            }
            for _ in channel.len()..width {
                out.push(',');
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_wide_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_wide_csv(dataset)).map_err(|e| Error::io(path, e))
}

/// AR(1) series `x_t = phi * x_{t-1} + e_t` started from the stationary law.
pub fn generate_ar1(phi: f64, n: usize, length: usize, seed: u64) -> Result<Dataset> {
    if phi.is_nan() || phi.abs() >= 1.0 {
        return Err(Error::domain(format!("AR(1) coefficient {phi} must satisfy |phi| < 1")));
    }
    let stationary_sd = (1.0 - phi * phi).sqrt().recip();
    let series = (0..n)
        .map(|i| {
            let mut rng = seed::stream(seed, &[tag::GENERATE, i as u64]);
            let mut x = stationary_sd * rng.sample::<f64, _>(StandardNormal);
            let values = (0..length)
                .map(|t| {
                    if t > 0 {
                        x = phi * x + rng.sample::<f64, _>(StandardNormal);
                    }
                    x
                })
                .collect();
            TimeSeries::new(format!("ar1_{i}"), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("ar1_phi{phi}"), series)
}

/// Sums of unit-amplitude sinusoids with random phases plus Gaussian noise.
pub fn generate_sine_mix(
    n: usize,
    length: usize,
    periods: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if periods.is_empty() {
        return Err(Error::domain("sine mixture needs at least one period"));
    }
    if let Some(p) = periods.iter().find(|&&p| p.is_nan() || p <= 1.0) {
        return Err(Error::domain(format!("period {p} must exceed 1")));
    }
    if noise_std.is_nan() || noise_std < 0.0 {
        return Err(Error::domain(format!("noise_std {noise_std} must be non-negative")));
    }
    let series = (0..n)
        .map(|i| {
            let mut rng = seed::stream(seed, &[tag::GENERATE, i as u64]);
            let phases: Vec<f64> = periods.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
            let values = (0..length)
                .map(|t| {
                    let signal: f64 = periods
                        .iter()
                        .zip(&phases)
                        .map(|(p, ph)| (2.0 * PI * t as f64 / p + ph).sin())
                        .sum();
                    let noise = if noise_std > 0.0 {
                        noise_std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    signal + noise
                })
                .collect();
            TimeSeries::new(format!("sine_{i}"), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new("sine_mix", series)
}

fn mean_abs(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
}

/// Divides a series by the mean of its absolute values; returns the scale.
pub fn mean_scale(series: &TimeSeries) -> Result<(TimeSeries, f64)> {
    let scale = mean_abs(series.values());
    if scale == 0.0 {
        return Err(Error::DegenerateScale(series.id.clone()));
    }
    let scaled = series.values().iter().map(|v| v / scale).collect();
    Ok((series.with_values(scaled), scale))
}
