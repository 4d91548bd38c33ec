// SPDX-License-Identifier: MIT OR Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ant_core::ant::{curve, rank, CurveConfig, RankConfig};
use ant_core::dataset::generate_ar1;
use ant_core::par::Execution;
use ant_core::schedule::{candidate_grid, ScheduleSpec};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_curve(c: &mut Criterion) {
    let ds = generate_ar1(0.95, 64, 256, 1).unwrap();
    let schedule = ScheduleSpec::linear(100).build().unwrap();
    let mut group = c.benchmark_group("curve");
    for (name, execution) in MODES {
        let cfg = CurveConfig { execution, ..CurveConfig::default() };
        group.bench_with_input(BenchmarkId::new(name, "lin100_64x256"), &cfg, |b, cfg| {
            b.iter(|| curve(&ds, &schedule, cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_rank(c: &mut Criterion) {
    let ds = generate_ar1(0.95, 16, 256, 1).unwrap();
    let grid = candidate_grid();
    let mut group = c.benchmark_group("rank");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = RankConfig {
            curve: CurveConfig { execution, ..CurveConfig::default() },
            ..RankConfig::default()
        };
        group.bench_with_input(BenchmarkId::new(name, "grid35_16x256"), &cfg, |b, cfg| {
            b.iter(|| rank(&ds, &grid, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_curve, bench_rank);
criterion_main!(benches);
