// SPDX-License-Identifier: MIT OR Apache-2.0

//! DDPM forward corruption, reverse steps and self-guided sampling.
//!
//! Steps are 1-based: `t = 1` is the first corruption step and `t = T` the
//! last. All randomness comes from the caller's rng; standard-normal draws
//! are taken one per coordinate, in coordinate order.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// A noise-prediction network `eps(x, t)` that can also back-propagate.
pub trait NoisePredictor {
    fn predict(&self, x: &[f64], t: usize) -> Vec<f64>;

    /// Gradient with respect to `x` of `<upstream, predict(x, t)>`.
    fn vjp(&self, x: &[f64], t: usize, upstream: &[f64]) -> Vec<f64>;
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, x: &[f64], _t: usize) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn vjp(&self, x: &[f64], _t: usize, _upstream: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// Observations that steer a reverse trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceTarget {
    pub observed: Vec<f64>,
    /// `true` marks an observed coordinate.
    pub mask: Vec<bool>,
    pub scale: f64,
}

impl GuidanceTarget {
    pub fn new(observed: Vec<f64>, mask: Vec<bool>, scale: f64) -> Result<Self> {
        if observed.len() != mask.len() {
            return Err(Error::Shape(format!(
                "guidance has {} observations but a mask of length {}",
                observed.len(),
                mask.len()
            )));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("guidance scale {scale} must be >= 0")));
        }
        Ok(Self {
            observed,
            mask,
            scale,
        })
    }

    fn is_inert(&self) -> bool {
        self.scale == 0.0 || !self.mask.iter().any(|&m| m)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_step(t: usize, schedule: &Schedule) -> Result<()> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::domain(format!(
            "step {t} is outside 1..={}",
            schedule.steps()
        )));
    }
    Ok(())
}

/// One corruption step `x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) z`.
pub fn forward_step<R: Rng + ?Sized>(x_prev: &[f64], t: usize, schedule: &Schedule, rng: &mut R) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    let mut x = x_prev.to_vec();
    forward_step_in_place(&mut x, t, schedule, rng);
    Ok(x)
}

pub(crate) fn forward_step_in_place<R: Rng + ?Sized>(x: &mut [f64], t: usize, schedule: &Schedule, rng: &mut R) {
    let beta = schedule.beta(t);
    let keep = (1.0 - beta).sqrt();
    let noise = beta.sqrt();
    for v in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = keep * *v + noise * z;
    }
}

/// Closed-form corruption `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`
/// with a caller-supplied `eps`. `t = 0` returns `x0`.
pub fn forward_closed_with_noise(x0: &[f64], t: usize, schedule: &Schedule, eps: &[f64]) -> Vec<f64> {
    let ab = schedule.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.iter().zip(eps).map(|(x, e)| signal * x + noise * e).collect()
}

/// Samples `q(x_t | x_0)` directly. `t = 0` returns `x0` unchanged.
pub fn forward_closed<R: Rng + ?Sized>(x0: &[f64], t: usize, schedule: &Schedule, rng: &mut R) -> Result<Vec<f64>> {
    if t == 0 {
        return Ok(x0.to_vec());
    }
    check_step(t, schedule)?;
    let eps = standard_normal(rng, x0.len());
    Ok(forward_closed_with_noise(x0, t, schedule, &eps))
}

/// `x^1 .. x^T`, each obtained by one [`forward_step`] from the previous.
pub fn corrupt_trajectory<R: Rng + ?Sized>(x0: &[f64], schedule: &Schedule, rng: &mut R) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    (1..=schedule.steps())
        .map(|t| {
            forward_step_in_place(&mut x, t, schedule, rng);
            x.clone()
        })
        .collect()
}

/// Reconstruction `x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)`.
pub fn predict_x0(x_t: &[f64], eps_hat: &[f64], t: usize, schedule: &Schedule) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    let ab = schedule.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    let x0: Vec<f64> = x_t
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| (x - noise * e) / signal)
        .collect();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            step: t,
            message: format!("non-finite x0 reconstruction (alpha_bar = {ab:e})"),
        });
    }
    Ok(x0)
}

/// Reverse mean `(x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)`.
pub fn backward_mean(x_t: &[f64], eps_hat: &[f64], t: usize, schedule: &Schedule) -> Vec<f64> {
    let alpha = schedule.alpha(t);
    let coef = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = alpha.sqrt().recip();
    x_t.iter()
        .zip(eps_hat)
        .map(|(x, e)| inv * (x - coef * e))
        .collect()
}

fn add_reverse_noise<R: Rng + ?Sized>(mut mean: Vec<f64>, t: usize, schedule: &Schedule, rng: &mut R) -> Vec<f64> {
    if t > 1 {
        let sigma = schedule.sigma2(t).sqrt();
        for v in mean.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    mean
}

/// One ancestral step. The final step (`t = 1`) returns the mean.
pub fn backward_step<R: Rng + ?Sized>(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    Ok(add_reverse_noise(backward_mean(x_t, eps_hat, t, schedule), t, schedule, rng))
}

fn masked_residual(x0_hat: &[f64], target: &GuidanceTarget) -> Vec<f64> {
    x0_hat
        .iter()
        .zip(&target.observed)
        .zip(&target.mask)
        .map(|((x, o), &m)| if m { o - x } else { 0.0 })
        .collect()
}

/// `-0.5 * || mask * (x_obs - x0_hat(x_t)) ||^2`.
pub fn guidance_log_density<P: NoisePredictor + ?Sized>(
    x_t: &[f64],
    model: &P,
    t: usize,
    schedule: &Schedule,
    target: &GuidanceTarget,
) -> Result<f64> {
    let x0_hat = predict_x0(x_t, &model.predict(x_t, t), t, schedule)?;
    let r = masked_residual(&x0_hat, target);
    Ok(-0.5 * r.iter().map(|v| v * v).sum::<f64>())
}

/// Gradient of [`guidance_log_density`] with respect to `x_t`, taken
/// through the noise predictor.
pub fn guidance_gradient<P: NoisePredictor + ?Sized>(
    x_t: &[f64],
    model: &P,
    t: usize,
    schedule: &Schedule,
    target: &GuidanceTarget,
) -> Result<Vec<f64>> {
    if x_t.len() != target.observed.len() {
        return Err(Error::Shape(format!(
            "window of length {} does not match guidance of length {}",
            x_t.len(),
            target.observed.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    let x0_hat = predict_x0(x_t, &model.predict(x_t, t), t, schedule)?;
    let r = masked_residual(&x0_hat, target);
    // d x0_hat / d x_t = (I - noise * J_eps) / signal
    let back = model.vjp(x_t, t, &r);
    let grad: Vec<f64> = r
        .iter()
        .zip(&back)
        .map(|(ri, bi)| (ri - noise * bi) / signal)
        .collect();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            step: t,
            message: "non-finite guidance gradient".into(),
        });
    }
    Ok(grad)
}

/// Reverse step with the self-guidance shift `s * sigma_t^2 * grad log p`
/// added to the mean before the noise.
pub fn guided_backward_step<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    x_t: &[f64],
    model: &P,
    t: usize,
    schedule: &Schedule,
    target: &GuidanceTarget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_step(t, schedule)?;
    let eps = model.predict(x_t, t);
    let mut mean = backward_mean(x_t, &eps, t, schedule);
    if !target.is_inert() {
        let grad = guidance_gradient(x_t, model, t, schedule, target)?;
        let shift = target.scale * schedule.sigma2(t);
        for (m, g) in mean.iter_mut().zip(&grad) {
            *m += shift * g;
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: t,
                message: "guided mean is not finite".into(),
            });
        }
    }
    Ok(add_reverse_noise(mean, t, schedule, rng))
}

/// Runs the reverse chain from `x^T ~ N(0, I)` to `x^0`, calling `observe`
/// with `(t, x^t)` for `t = T, T-1, ..., 0`.
pub fn sample_observed<P, R, F>(
    model: &P,
    schedule: &Schedule,
    window_len: usize,
    rng: &mut R,
    target: Option<&GuidanceTarget>,
    mut observe: F,
) -> Result<Vec<f64>>
where
    P: NoisePredictor + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let mut x = standard_normal(rng, window_len);
    observe(schedule.steps(), &x);
    for t in (1..=schedule.steps()).rev() {
        x = match target {
            Some(target) => guided_backward_step(&x, model, t, schedule, target, rng)?,
            None => {
                let eps = model.predict(&x, t);
                backward_step(&x, &eps, t, schedule, rng)?
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: t,
                message: "sample diverged".into(),
            });
        }
        observe(t - 1, &x);
    }
    Ok(x)
}

pub fn sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    model: &P,
    schedule: &Schedule,
    window_len: usize,
    rng: &mut R,
    target: Option<&GuidanceTarget>,
) -> Result<Vec<f64>> {
    sample_observed(model, schedule, window_len, rng, target, |_, _| {})
}
