//! Hot-path benchmarks: backbone forward passes, spectral normalization,
//! signal scoring, rank metrics, and pseudo-OOD generation.

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use std::hint::black_box;

use spectre_core::linalg::sample_covariance;
use spectre_core::metrics::{aupr, auroc};
use spectre_core::nn::{ArchDescriptor, Backbone};
use spectre_core::nn::gauss_reg_loss;
use spectre_core::seeding::rng_from_seed;
use spectre_core::spectre::gen_pseudo_ood;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((rows, cols), |_| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    })
}

fn bench_forward(c: &mut Criterion) {
    let arch = ArchDescriptor::gauss_encoder(20, 2);
    let mut rng = rng_from_seed(1);
    let model = Backbone::init(&arch, &mut rng);
    let batch = random_matrix(256, 20, 2);
    c.bench_function("forward_gauss_encoder_256x20", |b| {
        b.iter(|| model.forward(&black_box(&batch).view()).unwrap())
    });

    let wide_arch = ArchDescriptor::baseline(512, 10);
    let wide = Backbone::init(&wide_arch, &mut rng);
    let wide_batch = random_matrix(256, 512, 3);
    c.bench_function("forward_baseline_256x512", |b| {
        b.iter(|| wide.forward(&black_box(&wide_batch).view()).unwrap())
    });
}

fn bench_spectral(c: &mut Criterion) {
    let mut rng = rng_from_seed(4);
    let mut layer = spectre_core::nn::DenseLayer::init(512, 256, true, &mut rng);
    c.bench_function("power_iteration_step_256x512", |b| {
        b.iter(|| {
            layer.power_iteration_step();
            black_box(layer.spectral_geometry().unwrap().sigma)
        })
    });
}

fn bench_signals(c: &mut Criterion) {
    let batch = random_matrix(256, 128, 5);
    c.bench_function("gauss_reg_loss_256x128", |b| {
        b.iter(|| gauss_reg_loss(&black_box(&batch).view()).unwrap())
    });

    let train = random_matrix(2000, 6, 6);
    c.bench_function("sample_covariance_2000x6", |b| {
        b.iter(|| sample_covariance(&black_box(&train).view()))
    });
    c.bench_function("pseudo_ood_2000x6", |b| {
        b.iter(|| gen_pseudo_ood(&black_box(&train).view(), 2000, 7).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    use rand::Rng as _;
    let mut rng = rng_from_seed(8);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    c.bench_function("auroc_20k", |b| {
        b.iter(|| auroc(black_box(&scores), black_box(&labels)).unwrap())
    });
    c.bench_function("aupr_20k", |b| {
        b.iter(|| aupr(black_box(&scores), black_box(&labels)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_forward,
    bench_spectral,
    bench_signals,
    bench_metrics
);
criterion_main!(benches);
