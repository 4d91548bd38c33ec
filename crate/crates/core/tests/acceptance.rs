// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Criterion 10 needs real M4 hourly data and
//! is skipped unless `ANT_M4_PATH` points at a CSV (layout from
//! `ANT_M4_LAYOUT`, default wide).

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use ant_core::ant::{ant_score_values, rank, spearman, CurveConfig, Metric, RankConfig};
use ant_core::dataset::{generate_ar1, load_csv, Dataset, Layout};
use ant_core::denoiser::{draw_examples, loss_and_grads_fixed, DenoiserParams, EmbeddingConfig};
use ant_core::diffusion::{forward_closed, guidance_gradient, guidance_log_density, GuidanceTarget};
use ant_core::experiments::proxy::{self, Example, ProxyConfig, ProxyParams};
use ant_core::experiments::robustness_scan;
use ant_core::nn::relative_error;
use ant_core::schedule::{candidate_grid, ScheduleSpec};
use ant_core::seed;
use ant_core::stats::{autocorrelation, iaat, iat, lag1ac, profile, varac, Truncation, DEFAULT_MAX_LAG};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn ar1() -> Dataset {
    generate_ar1(0.95, 32, 256, 2024).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c1_score_chain() -> Outcome {
    let s = ant_score_values(&[8.0, 4.0, 1.0], Metric::Auc).unwrap();
    let want = [(s.lambda_linear, 1.0 / 28.0), (s.lambda_noise, 1.125), (s.lambda_step, 4.0 / 3.0), (s.score, 3.0 / 56.0)];
    let worst = want.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        worst <= 1e-9,
        format!(
            "lambda_linear={:.7} lambda_noise={:.7} lambda_step={:.7} score={:.7} (max err {worst:.1e})",
            s.lambda_linear, s.lambda_noise, s.lambda_step, s.score
        ),
    )
}

fn c2_grid() -> Outcome {
    let grid = candidate_grid();
    let labels: Vec<String> = grid.iter().map(ScheduleSpec::label).collect();
    let ok = grid.len() == 35 && labels.iter().any(|l| l == "Lin(100)") && labels.iter().any(|l| l == "Cos(75,2.0)");
    check(ok, format!("{} specs; Lin(100) and Cos(75,2.0) present: {ok}", grid.len()))
}

fn c3_forward_moments() -> Outcome {
    const DRAWS: usize = 10_000;
    let x0 = [1.5, -0.7, 0.3, 2.0];
    let mut comparisons = 0;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for spec in candidate_grid() {
        let s = spec.build().unwrap();
        let steps = s.steps();
        for t in [1, steps.div_ceil(2), steps] {
            // One shared noise stream for every (schedule, t).
            let mut rng = seed::stream(31, &[]);
            let mut sum = [0.0; 4];
            let mut sq = [0.0; 4];
            for _ in 0..DRAWS {
                let x = forward_closed(&x0, t, &s, &mut rng).unwrap();
                for j in 0..4 {
                    sum[j] += x[j];
                    sq[j] += x[j] * x[j];
                }
            }
            let ab = s.alpha_bar(t);
            let n = DRAWS as f64;
            for j in 0..4 {
                let mean = sum[j] / n;
                let var = (sq[j] - n * mean * mean) / (n - 1.0);
                let z_mean = (mean - ab.sqrt() * x0[j]) / ((1.0 - ab) / n).sqrt();
                let z_var = (var - (1.0 - ab)) / ((1.0 - ab) * (2.0 / (n - 1.0)).sqrt());
                comparisons += 2;
                worst = worst.max(z_mean.abs()).max(z_var.abs());
                if z_mean.abs() > 3.0 || z_var.abs() > 3.0 {
                    failures.push(format!("{} t={t} coord {j}", spec.label()));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{comparisons} comparisons, max |z| = {worst:.2}, failures: {failures:?}"),
    )
}

fn perturbed_params(window: usize, hidden: usize, emb: EmbeddingConfig, point: u64) -> DenoiserParams {
    let mut rng = seed::stream(404, &[point]);
    let mut p = DenoiserParams::init(window, hidden, emb, &mut rng).unwrap();
    for layer in &mut p.layers {
        for b in &mut layer.bias {
            *b = 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

fn c4_gradients() -> Outcome {
    const POINTS: u64 = 20;
    const H: f64 = 1e-5;
    let schedule = ScheduleSpec::cosine(50, 1.0).build().unwrap();
    let emb = EmbeddingConfig { enabled: true, dim: 4 };

    let mut worst_loss: f64 = 0.0;
    for point in 0..POINTS {
        let p = perturbed_params(4, 8, emb, point);
        let mut rng = seed::stream(405, &[point]);
        let batch: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let examples = draw_examples(&batch, &schedule, &mut rng);
        let (_, g) = loss_and_grads_fixed(&p, &examples, &schedule).unwrap();
        let flat = p.flat();
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let mut q = p.clone();
                let mut v = flat.clone();
                v[i] += H;
                q.set_flat(&v);
                let lp = loss_and_grads_fixed(&q, &examples, &schedule).unwrap().0;
                v[i] -= 2.0 * H;
                q.set_flat(&v);
                let lm = loss_and_grads_fixed(&q, &examples, &schedule).unwrap().0;
                (lp - lm) / (2.0 * H)
            })
            .collect();
        worst_loss = worst_loss.max(relative_error(&g.flat(), &fd));
    }

    let mut worst_guidance: f64 = 0.0;
    for point in 0..POINTS {
        let p = perturbed_params(6, 16, emb, 100 + point);
        let mut rng = seed::stream(406, &[point]);
        let x: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let observed: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let mask = vec![true, true, false, true, false, true];
        let target = GuidanceTarget::new(observed, mask, 1.0).unwrap();
        let t = rng.random_range(1..=40);
        let g = guidance_gradient(&x, &p, t, &schedule, &target).unwrap();
        let fd: Vec<f64> = (0..6)
            .map(|i| {
                let mut xp = x.clone();
                xp[i] += H;
                let mut xm = x.clone();
                xm[i] -= H;
                let lp = guidance_log_density(&xp, &p, t, &schedule, &target).unwrap();
                let lm = guidance_log_density(&xm, &p, t, &schedule, &target).unwrap();
                (lp - lm) / (2.0 * H)
            })
            .collect();
        worst_guidance = worst_guidance.max(relative_error(&g, &fd));
    }

    let mut worst_proxy: f64 = 0.0;
    for point in 0..POINTS {
        let mut rng = seed::stream(407, &[point]);
        let mut p = ProxyParams::init(10, 6, &mut rng).unwrap();
        for b in p.conv_bias.iter_mut().chain(p.head.bias.iter_mut()) {
            *b = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        let examples: Vec<Example> = (0..5)
            .map(|i| Example {
                x: (0..10).map(|_| rng.sample(StandardNormal)).collect(),
                class: i % 6,
            })
            .collect();
        let (_, g) = proxy::loss_and_grads(&p, &examples).unwrap();
        let flat = p.flat();
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let mut q = p.clone();
                let mut v = flat.clone();
                v[i] += H;
                q.set_flat(&v);
                let lp = proxy::loss_and_grads(&q, &examples).unwrap().0;
                v[i] -= 2.0 * H;
                q.set_flat(&v);
                let lm = proxy::loss_and_grads(&q, &examples).unwrap().0;
                (lp - lm) / (2.0 * H)
            })
            .collect();
        worst_proxy = worst_proxy.max(relative_error(&g.flat(), &fd));
    }
    let ok = worst_loss < 1e-4 && worst_guidance < 1e-4 && worst_proxy < 1e-4;
    check(
        ok,
        format!("max relative error: denoiser {worst_loss:.1e}, guidance {worst_guidance:.1e}, proxy {worst_proxy:.1e}"),
    )
}

fn c5_statistics() -> Outcome {
    let mut rng = seed::stream(505, &[]);
    // Brute-force double loop.
    let mut acf_err: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(20..300);
        let x: Vec<f64> = (0..n).map(|_| 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let lags = (n - 1).min(DEFAULT_MAX_LAG);
        let got = autocorrelation(&x, lags).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut c0 = 0.0;
        for v in &x {
            c0 += (v - mean) * (v - mean);
        }
        for k in 1..=lags {
            let mut ck = 0.0;
            for t in 0..n - k {
                ck += (x[t] - mean) * (x[t + k] - mean);
            }
            acf_err = acf_err.max((got.rho[k - 1] - ck / c0).abs());
        }
    }

    let mut total = 0.0;
    for i in 0..1000u64 {
        let mut r = seed::stream(506, &[i]);
        let x: Vec<f64> = (0..4096).map(|_| r.sample(StandardNormal)).collect();
        total += iaat(&profile(&x, Truncation::default()));
    }
    let white_mean = total / 1000.0;

    let mut affine_err: f64 = 0.0;
    for i in 0..20u64 {
        let base = generate_ar1(0.8, 1, 500, 600 + i).unwrap();
        let x = base.series()[0].values().to_vec();
        let stats = |v: &[f64]| {
            let p = profile(v, Truncation::default());
            [iaat(&p), iat(&p), lag1ac(v).value, varac(&p)]
        };
        let reference = stats(&x);
        for (a, b) in [(3.7, 12.0), (-0.01, -5.0), (250.0, 1e3)] {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            for (p, q) in reference.iter().zip(stats(&y)) {
                affine_err = affine_err.max((p - q).abs());
            }
        }
    }
    let ok = acf_err <= 1e-10 && (white_mean - 1.0).abs() <= 0.2 && affine_err <= 1e-10;
    check(
        ok,
        format!("acf err {acf_err:.1e}; white-noise IAAT mean {white_mean:.4}; affine err {affine_err:.1e}"),
    )
}

fn c6_linearization() -> Outcome {
    let ds = ar1();
    let ranked = rank(&ds, &candidate_grid(), &RankConfig::default()).unwrap();
    let winner = &ranked[0];
    let lin100 = ranked.iter().find(|r| r.spec == ScheduleSpec::linear(100)).unwrap();
    let steps: Vec<f64> = (1..=winner.curve.steps()).map(|t| t as f64).collect();
    let rho = spearman(&winner.curve.values, &steps).unwrap_or(0.0);
    let ok = winner.score.lambda_linear < lin100.score.lambda_linear && rho <= -0.9;
    check(
        ok,
        format!(
            "winner {} lambda_linear {:.5} vs Lin(100) {:.5}; Spearman {rho:.4}",
            winner.spec.label(),
            winner.score.lambda_linear,
            lin100.score.lambda_linear
        ),
    )
}

fn c7_robustness() -> Outcome {
    let ds = ar1();
    let templates = [ScheduleSpec::linear(100), ScheduleSpec::cosine(100, 1.0)];
    let report = robustness_scan(&ds, &templates, &[10, 20, 50, 75, 100], &CurveConfig::default(), Metric::Auc).unwrap();
    let (lin, cos) = (&report.families[0], &report.families[1]);
    let ok = cos.dispersion < lin.dispersion && cos.posterior_variance_spread < lin.posterior_variance_spread;
    check(
        ok,
        format!(
            "dispersion cos {:.4} < lin {:.4}; sum-sigma2 spread cos {:.4} < lin {:.4}",
            cos.dispersion, lin.dispersion, cos.posterior_variance_spread, lin.posterior_variance_spread
        ),
    )
}

fn c8_proxy() -> Outcome {
    let ds = ar1();
    let accuracy = |spec: ScheduleSpec| -> Vec<f64> {
        let s = spec.build().unwrap();
        (0..5)
            .map(|seed| {
                let cfg = ProxyConfig { seed, ..ProxyConfig::default() };
                proxy::proxy_step_classification(&ds, &s, &cfg).unwrap().confusion.accuracy
            })
            .collect()
    };
    let lin = accuracy(ScheduleSpec::linear(20));
    let cos = accuracy(ScheduleSpec::cosine(20, 2.0));
    let (ml, mc) = (median(lin.clone()), median(cos.clone()));
    check(
        ml > mc,
        format!("median accuracy Lin(20) {ml:.4} vs Cos(20,2.0) {mc:.4}; per seed lin {lin:.3?} cos {cos:.3?}"),
    )
}

fn run_rank(dir: &Path, jobs: usize) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_ant"))
        .args(["rank", "--gen", "ar1:phi=0.95,n=32,len=256", "--seed", "9", "--jobs"])
        .arg(jobs.to_string())
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let json = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with("rank_") && name.ends_with("seed9.json")
        })
        .unwrap();
    std::fs::read(json).unwrap()
}

fn c9_determinism() -> Outcome {
    let runs: Vec<Vec<u8>> = [1, 4, 1, 4]
        .into_iter()
        .map(|jobs| run_rank(tempfile::tempdir().unwrap().path(), jobs))
        .collect();
    let ok = runs.windows(2).all(|w| w[0] == w[1]);
    check(ok, format!("4 runs (--jobs 1, 4, 1, 4), {} bytes each, identical: {ok}", runs[0].len()))
}

fn c10_m4() -> Outcome {
    let Ok(path) = std::env::var("ANT_M4_PATH") else {
        return Skip("ANT_M4_PATH not set; non-gating".into());
    };
    let layout: Layout = std::env::var("ANT_M4_LAYOUT")
        .unwrap_or_else(|_| "wide".into())
        .parse()
        .unwrap();
    let ds = load_csv(&path, layout).unwrap();
    let best = |max_steps| rank(&ds, &candidate_grid(), &RankConfig { max_steps, ..RankConfig::default() }).unwrap()[0].spec.label();
    let (full, capped) = (best(None), best(Some(50)));
    check(
        full == "Cos(100,1.0)" && capped == "Cos(50,1.0)",
        format!("default winner {full} (expected Cos(100,1.0)); --max-steps 50 winner {capped} (expected Cos(50,1.0))"),
    )
}

fn main() {
    // Let `cargo test -- <filter>` runs of other targets skip this harness.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let criteria: [Criterion; 10] = [
        ("1 score chain", Duration::from_secs(1), c1_score_chain),
        ("2 candidate grid", Duration::from_secs(1), c2_grid),
        ("3 forward moments", Duration::from_secs(60), c3_forward_moments),
        ("4 gradient suite", Duration::from_secs(30), c4_gradients),
        ("5 statistics oracles", Duration::from_secs(60), c5_statistics),
        ("6 linearization", Duration::from_secs(120), c6_linearization),
        ("7 robustness ordering", Duration::from_secs(120), c7_robustness),
        ("8 proxy ordering", Duration::from_secs(300), c8_proxy),
        ("9 rank determinism", Duration::from_secs(60), c9_determinism),
        ("10 M4 selection", Duration::from_secs(600), c10_m4),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (mut status, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => ("FAIL", d),
            Skip(d) => ("SKIP", d),
        };
        if status == "PASS" && elapsed > budget {
            status = "FAIL";
        }
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {name}: {status} [{:.2}s of {}s] {detail}", elapsed.as_secs_f64(), budget.as_secs());
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
