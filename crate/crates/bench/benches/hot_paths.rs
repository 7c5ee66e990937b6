use std::hint::black_box;

use cfd_core::denoiser::{AnalyticDenoiser, Conditioning, Denoiser, TinyDenoiser, TinyDenoiserWeights};
use cfd_core::editing::{mededit, Triplet};
use cfd_core::metrics::{extract_features, frechet_distance};
use cfd_core::phantom::{generate, ConditionalPrior, PhantomParams};
use cfd_core::{dilate, Image, Mask, NoiseSchedule, SeededRng, SigmaMode};
use criterion::{criterion_group, criterion_main, Criterion};

fn random_mask(size: usize, density: f64, seed: u64) -> Mask {
    let mut rng = SeededRng::new(seed);
    Mask::from_fn(size, size, |_, _| rng.uniform() < density)
}

fn bench_dilate(c: &mut Criterion) {
    let small = random_mask(32, 0.05, 1);
    let large = random_mask(128, 0.02, 2);
    c.bench_function("dilate 32x32 k=7", |b| b.iter(|| dilate(black_box(&small), 7).unwrap()));
    c.bench_function("dilate 128x128 k=25", |b| b.iter(|| dilate(black_box(&large), 25).unwrap()));
}

fn bench_denoisers(c: &mut Criterion) {
    let params = PhantomParams::default();
    let schedule = NoiseSchedule::linear(200, 5e-4, 0.1, SigmaMode::Ddpm).unwrap();
    let s = generate(&params, true, &mut SeededRng::new(3)).unwrap();
    let cond = Conditioning::new(s.brain.clone(), s.pathology.clone());
    let x_t = Image::from_fn(32, 32, |y, x| ((y * 32 + x) as f64).sin());
    let analytic = AnalyticDenoiser::new(ConditionalPrior { params }, schedule.clone());
    let tiny = TinyDenoiser::new(TinyDenoiserWeights::init(3, 8, 16, 200, &mut SeededRng::new(4)));
    c.bench_function("analytic eps 32x32", |b| {
        b.iter(|| analytic.predict(&cond.input(black_box(&x_t), 100)).unwrap())
    });
    c.bench_function("tiny cnn eps 32x32", |b| {
        b.iter(|| tiny.predict(&cond.input(black_box(&x_t), 100)).unwrap())
    });
}

fn bench_mededit(c: &mut Criterion) {
    let params = PhantomParams::default();
    let schedule = NoiseSchedule::linear(50, 2e-3, 0.4, SigmaMode::Ddpm).unwrap();
    let mut rng = SeededRng::new(5);
    let healthy = generate(&params, false, &mut rng).unwrap();
    let lesioned = generate(&params, true, &mut rng).unwrap();
    let p = lesioned.pathology.intersect(&healthy.brain).unwrap();
    let den = AnalyticDenoiser::new(ConditionalPrior { params }, schedule.clone());
    let tri = Triplet {
        prior: &healthy.image,
        brain: &healthy.brain,
        pathology: &p,
    };
    c.bench_function("mededit T=50 U=4 k=7", |b| {
        b.iter(|| mededit(&tri, &den, &schedule, 7, 4, &mut SeededRng::new(6)).unwrap())
    });
}

fn bench_frechet(c: &mut Criterion) {
    let params = PhantomParams::default();
    let mut rng = SeededRng::new(7);
    let images: Vec<Image> = (0..200).map(|_| generate(&params, true, &mut rng).unwrap().image).collect();
    let a = extract_features(&images[..100], 8).unwrap();
    let b = extract_features(&images[100..], 8).unwrap();
    c.bench_function("frechet 64-d", |bench| bench.iter(|| frechet_distance(black_box(&a), black_box(&b)).unwrap()));
}

criterion_group!(benches, bench_dilate, bench_denoisers, bench_mededit, bench_frechet);
criterion_main!(benches);
