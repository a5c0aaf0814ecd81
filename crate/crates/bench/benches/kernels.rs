use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use derev_core::dsp::{lps, stft, FrameConfig, MfccExtractor, SAMPLE_RATE};
use derev_core::nn::{LstmpConfig, LstmpNet};
use derev_core::numeric::{Parameterized, Tensor};
use derev_core::reverb::{convolve_rir, generate_rir, pseudo_speech, RoomCategory};
use std::hint::black_box;

fn front_end(c: &mut Criterion) {
    let cfg = FrameConfig::default();
    let wave = pseudo_speech(2.0, SAMPLE_RATE, 1).unwrap();
    let mfcc = MfccExtractor::new(&cfg).unwrap();
    let mut g = c.benchmark_group("front-end");
    g.throughput(Throughput::Elements(wave.len() as u64));
    g.bench_function("stft-2s", |b| b.iter(|| stft(black_box(&wave), &cfg).unwrap()));
    let spec = stft(&wave, &cfg).unwrap();
    g.bench_function("lps-2s", |b| b.iter(|| lps(black_box(&spec)).unwrap()));
    g.bench_function("mfcc-2s", |b| {
        b.iter(|| mfcc.from_spectrogram(black_box(&spec)).unwrap())
    });
    g.finish();
}

fn reverberation(c: &mut Criterion) {
    let wave = pseudo_speech(2.0, SAMPLE_RATE, 2).unwrap();
    let mut g = c.benchmark_group("reverb");
    for t60 in [0.3, 0.8] {
        let len = (t60 * SAMPLE_RATE as f64).ceil() as usize;
        let rir = generate_rir(t60, len, RoomCategory::Medium, 3).unwrap();
        g.bench_with_input(BenchmarkId::new("convolve-2s", t60), &rir, |b, rir| {
            b.iter(|| convolve_rir(black_box(&wave), rir))
        });
    }
    g.finish();
}

fn lstm(c: &mut Criterion) {
    let (steps, batch) = (200, 8);
    let cfg = LstmpConfig {
        input_dim: 257,
        output_dim: 40,
        layers: 2,
        cells: 256,
        proj: 128,
        ..LstmpConfig::default()
    };
    let mut net: LstmpNet<f32> = LstmpNet::new("lstm", cfg, 4).unwrap();
    let x = Tensor::full(&[steps * batch, 257], 0.1f32);
    let dy = Tensor::full(&[steps * batch, 40], 0.01f32);
    let mut g = c.benchmark_group("lstmp-2x256-128");
    g.sample_size(10);
    g.throughput(Throughput::Elements((steps * batch) as u64));
    g.bench_function("forward", |b| {
        b.iter(|| net.forward_seq(black_box(&x), steps, batch).unwrap())
    });
    let (_, cache) = net.forward_seq(&x, steps, batch).unwrap();
    g.bench_function("backward", |b| {
        b.iter(|| {
            net.zero_grads();
            net.backward_seq(black_box(&cache), &dy).unwrap()
        })
    });
    g.finish();
}

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm-f32");
    for n in [128usize, 512] {
        let a = Tensor::full(&[n, n], 0.5f32);
        let b = Tensor::full(&[n, n], 0.25f32);
        g.throughput(Throughput::Elements((2 * n * n * n) as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(&a).matmul(false, &b, false).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, front_end, reverberation, lstm, gemm);
criterion_main!(benches);
