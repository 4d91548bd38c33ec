// SPDX-License-Identifier: MIT OR Apache-2.0

//! Autocorrelation-based non-stationarity statistics.
//!
//! All autocorrelations use the biased estimator (full-series denominator),
//! so `|rho_k| <= 1` always holds. A constant series has no defined
//! autocorrelation; it yields an all-zero profile with `degenerate` set.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeries;
use crate::error::{Error, Result};

/// Upper bound on the number of lags used by default.
pub const DEFAULT_MAX_LAG: usize = 100;

/// Number of consecutive negligible lags that ends adaptive truncation.
const ADAPTIVE_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfProfile {
    /// `rho[k - 1]` is the autocorrelation at lag `k`.
    pub rho: Vec<f64>,
    pub n: usize,
    pub degenerate: bool,
}

impl AcfProfile {
    pub fn max_lag(&self) -> usize {
        self.rho.len()
    }
}

/// How many lags enter the integrated statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    /// Exactly `min(n - 1, lags)` lags.
    Fixed(usize),
    /// Stop at the first lag that opens a run of three lags with
    /// `|rho_k| < 2 / sqrt(n)`, keeping that lag; never beyond
    /// `min(n - 1, max_lag)`.
    Adaptive { max_lag: usize },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Adaptive {
            max_lag: DEFAULT_MAX_LAG,
        }
    }
}

impl Truncation {
    fn cap(&self, n: usize) -> usize {
        let lags = match *self {
            Truncation::Fixed(k) => k,
            Truncation::Adaptive { max_lag } => max_lag,
        };
        lags.min(n - 1).max(1)
    }
}

struct Centered {
    dev: Vec<f64>,
    sum_sq: f64,
}

fn center(x: &[f64]) -> Centered {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sum_sq = dev.iter().map(|d| d * d).sum();
    Centered { dev, sum_sq }
}

fn lagged_dot(a: &[f64], b: &[f64], k: usize) -> f64 {
    a[..a.len() - k].iter().zip(&b[k..]).map(|(x, y)| x * y).sum()
}

/// Lags `1..=cap` of a (cross-)correlation sequence, cut early by the
/// adaptive rule when requested.
fn truncated_sequence(cap: usize, n: usize, adaptive: bool, mut lag: impl FnMut(usize) -> f64) -> Vec<f64> {
    let threshold = 2.0 / (n as f64).sqrt();
    let mut rho = Vec::with_capacity(cap);
    let mut run = 0;
    for k in 1..=cap {
        let r = lag(k);
        rho.push(r);
        if adaptive {
            run = if r.abs() < threshold { run + 1 } else { 0 };
            if run == ADAPTIVE_RUN {
                rho.truncate(k + 1 - ADAPTIVE_RUN);
                break;
            }
        }
    }
    rho
}

fn check_lag(n: usize, max_lag: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("series length {n} is below 2")));
    }
    if max_lag == 0 || max_lag > n - 1 {
        return Err(Error::domain(format!(
            "max_lag {max_lag} must lie in 1..={}",
            n - 1
        )));
    }
    Ok(())
}

/// Sample autocorrelation at lags `1..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<AcfProfile> {
    check_lag(series.len(), max_lag)?;
    Ok(profile(series, Truncation::Fixed(max_lag)))
}

/// Autocorrelation profile under a truncation policy. Panics if the series
/// has fewer than two points.
pub fn profile(series: &[f64], truncation: Truncation) -> AcfProfile {
    let n = series.len();
    assert!(n >= 2, "autocorrelation needs at least two observations");
    let cap = truncation.cap(n);
    let c = center(series);
    if c.sum_sq == 0.0 {
        return AcfProfile {
            rho: vec![0.0; cap],
            n,
            degenerate: true,
        };
    }
    let adaptive = matches!(truncation, Truncation::Adaptive { .. });
    let rho = truncated_sequence(cap, n, adaptive, |k| lagged_dot(&c.dev, &c.dev, k) / c.sum_sq);
    AcfProfile {
        rho,
        n,
        degenerate: false,
    }
}

/// Integrated autocorrelation time `1 + 2 * sum(rho_k)`.
pub fn iat(profile: &AcfProfile) -> f64 {
    1.0 + 2.0 * profile.rho.iter().sum::<f64>()
}

/// Integrated absolute autocorrelation time `1 + 2 * sum(|rho_k|)`.
pub fn iaat(profile: &AcfProfile) -> f64 {
    1.0 + 2.0 * profile.rho.iter().map(|r| r.abs()).sum::<f64>()
}

/// Population variance of the autocorrelations across lags.
pub fn varac(profile: &AcfProfile) -> f64 {
    let k = profile.rho.len() as f64;
    if k == 0.0 {
        return 0.0;
    }
    let mean = profile.rho.iter().sum::<f64>() / k;
    profile.rho.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Lag-one autocorrelation; 0 with the degeneracy flag for constant input.
pub fn lag1ac(series: &[f64]) -> StatValue {
    let p = profile(series, Truncation::Fixed(1));
    StatValue {
        value: p.rho[0],
        degenerate: p.degenerate,
    }
}

/// Variance-weighted multichannel integrated autocorrelation time.
///
/// Each channel `i` gets `1 + 2 * sum_k sum_j rho_k^(i,j)` with the
/// cross-correlation normalized by both channels' sums of squares; channels
/// are then averaged with weights equal to their variances. `absolute`
/// takes `|rho|` inside the double sum. Constant channels contribute zero
/// cross terms and raise the degeneracy flag.
pub fn miaat(channels: &[&[f64]], truncation: Truncation, absolute: bool) -> Result<StatValue> {
    let Some(first) = channels.first() else {
        return Err(Error::Shape("mIAAT needs at least one channel".into()));
    };
    let n = first.len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("mIAAT channels must be aligned".into()));
    }
    check_lag(n, 1)?;
    let cap = truncation.cap(n);
    let adaptive = matches!(truncation, Truncation::Adaptive { .. });
    let centered: Vec<Centered> = channels.iter().map(|c| center(c)).collect();
    let degenerate = centered.iter().any(|c| c.sum_sq == 0.0);

    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for ci in &centered {
        let mut cross = 0.0;
        for cj in &centered {
            if ci.sum_sq == 0.0 || cj.sum_sq == 0.0 {
                continue;
            }
            let norm = (ci.sum_sq * cj.sum_sq).sqrt();
            let rho = truncated_sequence(cap, n, adaptive, |k| lagged_dot(&ci.dev, &cj.dev, k) / norm);
            cross += if absolute {
                rho.iter().map(|r| r.abs()).sum::<f64>()
            } else {
                rho.iter().sum::<f64>()
            };
        }
        let tau = 1.0 + 2.0 * cross;
        let var = ci.sum_sq / n as f64;
        weighted += var * tau;
        total_weight += var;
    }
    let value = if total_weight == 0.0 {
        1.0
    } else {
        weighted / total_weight
    };
    Ok(StatValue { value, degenerate })
}

/// A scalar non-stationarity statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Iaat,
    Iat,
    Lag1ac,
    Varac,
    Miaat,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Iaat,
        Statistic::Iat,
        Statistic::Lag1ac,
        Statistic::Varac,
        Statistic::Miaat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Iaat => "iaat",
            Statistic::Iat => "iat",
            Statistic::Lag1ac => "lag1ac",
            Statistic::Varac => "varac",
            Statistic::Miaat => "miaat",
        }
    }
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::domain(format!("unknown statistic `{s}`")))
    }
}

/// Settings shared by every statistic evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatConfig {
    pub truncation: Truncation,
    /// Use `|rho|` inside the mIAAT double sum.
    pub miaat_absolute: bool,
}

impl StatConfig {
    /// Evaluates `stat` on one series. Univariate statistics applied to a
    /// multivariate series are averaged over channels.
    pub fn evaluate(&self, stat: Statistic, series: &TimeSeries) -> StatValue {
        self.evaluate_values(stat, series.values(), series.dim())
    }

    /// As [`StatConfig::evaluate`] for channel-major `values` with `dim`
    /// channels of equal length.
    pub fn evaluate_values(&self, stat: Statistic, values: &[f64], dim: usize) -> StatValue {
        let len = values.len() / dim;
        if stat == Statistic::Miaat {
            let channels: Vec<&[f64]> = values.chunks(len).collect();
            return miaat(&channels, self.truncation, self.miaat_absolute)
                .expect("channels are aligned and of length >= 2");
        }
        let mut sum = 0.0;
        let mut degenerate = false;
        for channel in values.chunks(len) {
            let v = self.evaluate_channel(stat, channel);
            sum += v.value;
            degenerate |= v.degenerate;
        }
        StatValue {
            value: sum / dim as f64,
            degenerate,
        }
    }

    pub fn evaluate_channel(&self, stat: Statistic, x: &[f64]) -> StatValue {
        if stat == Statistic::Lag1ac {
            return lag1ac(x);
        }
        if stat == Statistic::Miaat {
            return miaat(&[x], self.truncation, self.miaat_absolute).expect("single channel");
        }
        let p = profile(x, self.truncation);
        let value = match stat {
            Statistic::Iaat => iaat(&p),
            Statistic::Iat => iat(&p),
            Statistic::Varac => varac(&p),
            Statistic::Lag1ac | Statistic::Miaat => unreachable!(),
        };
        StatValue {
            value,
            degenerate: p.degenerate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn brute_acf(x: &[f64], k: usize) -> f64 {
        let n = x.len();
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        for t in 0..n - k {
            num += (x[t] - mean) * (x[t + k] - mean);
        }
        let mut den = 0.0;
        for v in x {
            den += (v - mean) * (v - mean);
        }
        num / den
    }

    fn noise(n: usize, s: u64) -> Vec<f64> {
        let mut rng = seed::stream(s, &[]);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn alternating_series_lag_one() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let p = autocorrelation(&x, 1).unwrap();
        assert!((p.rho[0] + 0.75).abs() < 1e-15);
        assert!((lag1ac(&x).value + 0.75).abs() < 1e-15);
        let full = autocorrelation(&x, 3).unwrap();
        for k in 1..=3 {
            assert!((full.rho[k - 1] - brute_acf(&x, k)).abs() < 1e-15);
        }
        // Brute-force double loop: rho = [-0.75, 0.5, -0.25].
        assert!((iat(&full) - (1.0 + 2.0 * (-0.5))).abs() < 1e-15);
        assert!((iaat(&full) - (1.0 + 2.0 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn constant_series_is_flagged() {
        let p = autocorrelation(&[2.0; 6], 3).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.rho, vec![0.0; 3]);
        let v = lag1ac(&[2.0; 6]);
        assert_eq!(v.value, 0.0);
        assert!(v.degenerate);
    }

    #[test]
    fn bad_lags_are_rejected() {
        assert!(autocorrelation(&[1.0, 2.0, 3.0], 3).is_err());
        assert!(autocorrelation(&[1.0, 2.0, 3.0], 0).is_err());
        assert!(autocorrelation(&[1.0], 1).is_err());
    }

    #[test]
    fn integrated_times_by_hand() {
        let zero = AcfProfile { rho: vec![0.0; 5], n: 10, degenerate: false };
        assert_eq!(iat(&zero), 1.0);
        let p = AcfProfile { rho: vec![0.5, 0.25], n: 10, degenerate: false };
        assert!((iat(&p) - 2.5).abs() < 1e-15);
        let q = AcfProfile { rho: vec![-0.5, 0.25], n: 10, degenerate: false };
        assert!((iaat(&q) - 2.5).abs() < 1e-15);
        assert!(iaat(&q) >= iat(&q));
    }

    #[test]
    fn varac_by_hand() {
        let p = AcfProfile { rho: vec![0.2, 0.4], n: 10, degenerate: false };
        assert!((varac(&p) - 0.01).abs() < 1e-15);
        let c = AcfProfile { rho: vec![0.3; 4], n: 10, degenerate: false };
        assert_eq!(varac(&c), 0.0);
    }

    #[test]
    fn varac_matches_brute_force() {
        for s in 0..10 {
            let x = noise(64, s);
            let p = autocorrelation(&x, 20).unwrap();
            let mut mean = 0.0;
            for k in 1..=20 {
                mean += brute_acf(&x, k);
            }
            mean /= 20.0;
            let mut var = 0.0;
            for k in 1..=20 {
                var += (brute_acf(&x, k) - mean).powi(2);
            }
            var /= 20.0;
            assert!((varac(&p) - var).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_iaat_small_sample() {
        // 1000 white-noise series of length 512; the mean sits near the floor.
        let cfg = StatConfig::default();
        let mean = (0..1000)
            .map(|s| cfg.evaluate_channel(Statistic::Iaat, &noise(512, s)).value)
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 1.0).abs() < 0.6, "{mean}");
    }

    #[test]
    fn ar1_profile_decays_like_phi() {
        let ds = crate::dataset::generate_ar1(0.9, 1, 4096, 2).unwrap();
        let p = autocorrelation(ds.series()[0].values(), 5).unwrap();
        assert!((p.rho[0] - 0.9).abs() < 0.05);
    }

    #[test]
    fn adaptive_truncation_stops_on_noise() {
        let x = noise(4096, 3);
        let p = profile(&x, Truncation::default());
        assert!(p.max_lag() < 20, "{}", p.max_lag());
        let fixed = profile(&x, Truncation::Fixed(100));
        assert_eq!(fixed.max_lag(), 100);
        assert_eq!(&fixed.rho[..p.max_lag()], &p.rho[..]);
    }

    fn brute_miaat(ch: &[Vec<f64>], k_max: usize) -> f64 {
        let n = ch[0].len();
        let means: Vec<f64> = ch.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let ss: Vec<f64> = ch
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum())
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..ch.len() {
            let mut tau = 1.0;
            for k in 1..=k_max {
                for j in 0..ch.len() {
                    let mut s = 0.0;
                    for l in 0..n - k {
                        s += (ch[i][l] - means[i]) * (ch[j][l + k] - means[j]);
                    }
                    tau += 2.0 * s / (ss[i] * ss[j]).sqrt();
                }
            }
            let var = ss[i] / n as f64;
            num += var * tau;
            den += var;
        }
        num / den
    }

    #[test]
    fn miaat_single_channel_is_iat() {
        let x = noise(200, 9);
        let m = miaat(&[&x], Truncation::Fixed(30), false).unwrap();
        let p = autocorrelation(&x, 30).unwrap();
        assert!((m.value - iat(&p)).abs() < 1e-12);
    }

    #[test]
    fn miaat_identical_channels_match_brute_force() {
        let x = crate::dataset::generate_ar1(0.7, 1, 150, 4).unwrap().series()[0].values().to_vec();
        let m = miaat(&[&x, &x], Truncation::Fixed(10), false).unwrap();
        let single = autocorrelation(&x, 10).unwrap();
        let expected = 1.0 + 2.0 * 2.0 * single.rho.iter().sum::<f64>();
        assert!((m.value - expected).abs() < 1e-12);
        assert!((m.value - brute_miaat(&[x.clone(), x.clone()], 10)).abs() < 1e-12);
    }

    #[test]
    fn miaat_weights_follow_variance() {
        let a = crate::dataset::generate_ar1(0.8, 1, 300, 1).unwrap().series()[0].values().to_vec();
        let b = noise(300, 2);
        let b2: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let trunc = Truncation::Fixed(8);
        let ma = miaat(&[&a], trunc, false).unwrap().value;
        let m1 = miaat(&[&a, &b], trunc, false).unwrap().value;
        let m2 = miaat(&[&a, &b2], trunc, false).unwrap().value;
        assert!((m1 - brute_miaat(&[a.clone(), b.clone()], 8)).abs() < 1e-12);
        assert!((m2 - brute_miaat(&[a.clone(), b2.clone()], 8)).abs() < 1e-12);
        // Doubling channel b quadruples its weight, pulling the average toward it.
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!((var(&b2) / var(&b) - 4.0).abs() < 1e-12);
        assert!((m2 - ma).abs() > (m1 - ma).abs());
    }

    #[test]
    fn miaat_flags_constant_channel() {
        let x = noise(50, 1);
        let c = vec![3.0; 50];
        let v = miaat(&[&x, &c], Truncation::Fixed(5), true).unwrap();
        assert!(v.degenerate);
        assert!(v.value.is_finite());
    }

    #[test]
    fn statistic_names_round_trip() {
        for s in Statistic::ALL {
            assert_eq!(s.name().parse::<Statistic>().unwrap(), s);
        }
        assert!("foo".parse::<Statistic>().is_err());
    }
}
