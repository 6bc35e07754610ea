use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use prnu_bench::{textured_capture, textured_set};
use prnu_core::attack::{block_attack, conventional_attack, AttackParams, StolenSet};
use prnu_core::wavelet::{dwt2, idwt2};
use prnu_core::{correlation, denoise, estimate_fingerprint, residual, DenoiseParams};

const SIDE: usize = 128;

fn wavelet(c: &mut Criterion) {
    let img = textured_capture(SIDE, 0).to_raster().to_f64();
    c.bench_function("dwt2+idwt2 128x128 4 levels", |b| {
        b.iter(|| idwt2(&dwt2(black_box(&img), SIDE, SIDE, 4).unwrap()))
    });
}

fn denoising(c: &mut Criterion) {
    let img = textured_capture(SIDE, 0);
    let p = DenoiseParams::extraction();
    let raster = img.to_raster();
    c.bench_function("denoise 128x128", |b| b.iter(|| denoise(black_box(&raster), &p).unwrap()));
    c.bench_function("residual 128x128", |b| b.iter(|| residual(black_box(&img), &p).unwrap()));
}

fn fingerprint(c: &mut Criterion) {
    let images = textured_set(SIDE, 8);
    let p = DenoiseParams::extraction();
    c.bench_function("estimate_fingerprint 8x128x128", |b| {
        b.iter(|| estimate_fingerprint(black_box(&images), &p).unwrap())
    });
    let k = estimate_fingerprint(&images, &p).unwrap();
    let w = residual(&images[0], &p).unwrap();
    c.bench_function("correlation 128x128", |b| {
        b.iter(|| correlation(black_box(&w), black_box(k.raster())).unwrap())
    });
}

fn attacks(c: &mut Criterion) {
    let p = DenoiseParams::extraction();
    let stolen = StolenSet::new(textured_set(SIDE, 20), &p).unwrap();
    let target = textured_capture(SIDE, 999);
    let mut group = c.benchmark_group("attack 128x128 N=20 A=50");
    group.sample_size(10);
    group.bench_function("conventional", |b| {
        b.iter(|| conventional_attack(black_box(&target), &stolen, 50.0, 1.0, &p).unwrap())
    });
    let params = AttackParams::new(32, 10, 50.0, 7);
    group.bench_function("block l=32 r=10", |b| {
        b.iter(|| block_attack(black_box(&target), &stolen, &params, &p).unwrap())
    });
    group.finish();
}

criterion_group!(benches, wavelet, denoising, fingerprint, attacks);
criterion_main!(benches);
