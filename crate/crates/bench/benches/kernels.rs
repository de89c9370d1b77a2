use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fbcv_core::analyze::{complete_linkage, score_to_distance};
use fbcv_core::compare::{ccf_max, compare_set, score_pair, CompareParams};
use fbcv_core::signal::{LoessFit, LoessParams};
use fbcv_core::synth::{SynthParams, SynthStudy};
use fbcv_core::LagSearchParams;

fn study(bullets: usize, len: usize) -> SynthStudy {
    SynthStudy::generate(&SynthParams {
        barrels: 1,
        bullets_per_barrel: bullets,
        signal_len: len,
        ..SynthParams::default()
    })
}

fn lag_search(c: &mut Criterion) {
    let s = study(2, 2000);
    let (x, y) = (s.land_signal(0, 0), s.land_signal(1, 0));
    let mut group = c.benchmark_group("ccf_max");
    for max_lag in [50, 500] {
        let params = LagSearchParams::with_max_lag(max_lag);
        group.bench_with_input(BenchmarkId::from_parameter(max_lag), &params, |b, p| {
            b.iter(|| ccf_max(black_box(&x), black_box(&y), p))
        });
    }
    group.finish();

    let params = CompareParams::default();
    let (b1, b2) = (s.bullet_lands(0), s.bullet_lands(1));
    c.bench_function("bullet_pair_m500", |b| {
        b.iter(|| score_pair(black_box(&b1), black_box(&b2), &params))
    });
}

fn loess(c: &mut Criterion) {
    let s = study(1, 2000);
    let truth = s.land_truth(0, 0);
    let xs: Vec<f64> = (0..truth.len()).map(|i| i as f64 * 0.645).collect();
    let ys: Vec<f64> = xs
        .iter()
        .zip(&truth)
        .map(|(x, t)| 1e-4 * (x - 700.0).powi(2) + t)
        .collect();
    let mask = vec![true; xs.len()];
    let mut group = c.benchmark_group("loess_2000");
    for robust_iterations in [0, 2] {
        let params = LoessParams {
            span: 0.75,
            degree: 2,
            robust_iterations,
        };
        group.bench_with_input(
            BenchmarkId::new("robust_iterations", robust_iterations),
            &params,
            |b, p| b.iter(|| LoessFit::new(black_box(&xs), black_box(&ys), &mask, p).unwrap()),
        );
    }
    group.finish();
}

fn linkage(c: &mut Criterion) {
    let s = study(40, 300);
    let params = CompareParams {
        lag: LagSearchParams::with_max_lag(20),
        ..CompareParams::default()
    };
    let table = compare_set(s.all_bullet_lands(), &params)
        .unwrap()
        .score_table();
    let distances = score_to_distance(&table);
    c.bench_function("complete_linkage_40", |b| {
        b.iter(|| complete_linkage(black_box(&distances)))
    });
}

criterion_group!(benches, lag_search, loess, linkage);
criterion_main!(benches);
