//! Criterion benchmarks for the training engine: scalar kernels, moment
//! propagation at experiment shapes, online updates, whole epochs, and the
//! two test-time readouts.
//!
//! Run with `cargo bench -p ebp-bench`. Appending `-- --test` exercises
//! every benchmark once without measuring, as a smoke test.

use std::hint::black_box;
use std::time::Duration;

use criterion::{
    criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput,
};
use ebp_bench::{dense_arch, spatial_arch, synthetic_dataset};
use ebp_core::engine::{self, DropoutConfig, DropoutPlan, EpochDropout, ForwardState, Phase};
use ebp_core::kernels::{gaussian_cdf, pdf_cdf_ratio, sech2};
use ebp_core::mnist::DatasetView;
use ebp_core::model::{BinaryPosterior, RealPosterior};
use ebp_core::predict::{evaluate_deterministic, evaluate_probabilistic, ExpectationModel};
use ebp_core::rng;

// ---------------------------------------------------------------------------
// Scalar kernels
// ---------------------------------------------------------------------------

fn kernel_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    let n = 1024usize;
    // Central arguments cover the direct-quotient branch of the ratio; tail
    // arguments force its continued-fraction branch (below z = -5).
    let central: Vec<f64> =
        (0..n).map(|i| -5.0 + 13.0 * i as f64 / (n - 1) as f64).collect();
    let tail: Vec<f64> =
        (0..n).map(|i| -40.0 + 34.0 * i as f64 / (n - 1) as f64).collect();
    group.throughput(Throughput::Elements(n as u64));

    group.bench_function("gaussian_cdf", |b| {
        b.iter(|| central.iter().map(|&z| gaussian_cdf(black_box(z))).sum::<f64>())
    });
    group.bench_function("pdf_cdf_ratio_central", |b| {
        b.iter(|| central.iter().map(|&z| pdf_cdf_ratio(black_box(z))).sum::<f64>())
    });
    group.bench_function("pdf_cdf_ratio_tail", |b| {
        b.iter(|| tail.iter().map(|&z| pdf_cdf_ratio(black_box(z))).sum::<f64>())
    });
    group.bench_function("sech2", |b| {
        b.iter(|| central.iter().map(|&z| sech2(black_box(z))).sum::<f64>())
    });
    group.finish();
}

// ---------------------------------------------------------------------------
// Forward moment propagation
// ---------------------------------------------------------------------------

fn forward_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    let data = synthetic_dataset(1, 784);
    let x = data.input(0);

    // Binary family with reused buffers: the per-presentation hot path.
    for hidden in [200usize, 800] {
        let arch = dense_arch(&[hidden]);
        let post = BinaryPosterior::init(&arch, 1);
        let mut fs = ForwardState::new_for(&arch);
        group.throughput(Throughput::Elements(arch.connected_weight_count() as u64));
        group.bench_with_input(BenchmarkId::new("binary_dense", hidden), &hidden, |b, _| {
            b.iter(|| {
                engine::forward_into(&post, black_box(x), Phase::Train, None, &mut fs).unwrap();
                black_box(fs.output_activations()[0])
            })
        });
    }

    // Masked level: 15x15 map of 14x14 windows, then the dense readout.
    let arch = spatial_arch(14);
    let post = BinaryPosterior::init(&arch, 2);
    let mut fs = ForwardState::new_for(&arch);
    group.throughput(Throughput::Elements(arch.connected_weight_count() as u64));
    group.bench_function("binary_spatial_14", |b| {
        b.iter(|| {
            engine::forward_into(&post, black_box(x), Phase::Train, None, &mut fs).unwrap();
            black_box(fs.output_activations()[0])
        })
    });

    // Real family (fresh small buffers each call; the mean matrices are the
    // posterior's own and are not copied).
    let arch = dense_arch(&[200]);
    let real = RealPosterior::init(&arch, 3);
    group.throughput(Throughput::Elements(arch.connected_weight_count() as u64));
    group.bench_function("real_dense_200", |b| {
        b.iter(|| {
            let fs = engine::forward_real(&real, black_box(x), Phase::Train, None).unwrap();
            black_box(fs.output_activations()[0])
        })
    });

    // Test-time readout model: weight means are precomputed once, so the
    // per-image pass skips the tanh evaluations entirely.
    let post = BinaryPosterior::init(&arch, 4);
    let model = ExpectationModel::from_binary(&post, 1.0).unwrap();
    let mut fs = ForwardState::new_for(&arch);
    group.bench_function("expectation_model_dense_200", |b| {
        b.iter(|| {
            model.forward_into(black_box(x), &mut fs).unwrap();
            black_box(fs.output_activations()[0])
        })
    });
    group.finish();
}

// ---------------------------------------------------------------------------
// Online updates (forward + backward + parameter step)
// ---------------------------------------------------------------------------

fn update_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("update");
    let data = synthetic_dataset(1, 784);
    let (x, y) = (data.input(0), data.target(0));

    // Each sample clones the initial posterior (outside the timed routine)
    // so every measured step starts from the same parameter state.
    let arch = dense_arch(&[200]);
    group.throughput(Throughput::Elements(arch.connected_weight_count() as u64));

    let post = BinaryPosterior::init(&arch, 5);
    group.bench_function("binary_step_dense_200", |b| {
        b.iter_batched(
            || post.clone(),
            |mut p| {
                engine::update_step(&mut p, black_box(x), black_box(y), None).unwrap();
                p
            },
            BatchSize::LargeInput,
        )
    });

    let plan = DropoutPlan::sample(&arch, DropoutConfig::new(0.8).unwrap(), &mut rng::seeded(6));
    group.bench_function("binary_step_dense_200_dropout", |b| {
        b.iter_batched(
            || post.clone(),
            |mut p| {
                engine::update_step(&mut p, black_box(x), black_box(y), Some(&plan)).unwrap();
                p
            },
            BatchSize::LargeInput,
        )
    });

    let real = RealPosterior::init(&arch, 7);
    group.bench_function("real_step_dense_200", |b| {
        b.iter_batched(
            || real.clone(),
            |mut p| {
                engine::update_step_real(&mut p, black_box(x), black_box(y), None).unwrap();
                p
            },
            BatchSize::LargeInput,
        )
    });

    let spatial = spatial_arch(14);
    let post = BinaryPosterior::init(&spatial, 8);
    group.throughput(Throughput::Elements(spatial.connected_weight_count() as u64));
    group.bench_function("binary_step_spatial_14", |b| {
        b.iter_batched(
            || post.clone(),
            |mut p| {
                engine::update_step(&mut p, black_box(x), black_box(y), None).unwrap();
                p
            },
            BatchSize::LargeInput,
        )
    });

    // Mask refresh before each presentation: one draw per input and hidden
    // unit of the deep dropout architecture.
    let deep = dense_arch(&[800, 800]);
    let mut plan = DropoutPlan::all_kept(&deep, DropoutConfig::new(0.8).unwrap());
    let mut mask_rng = rng::seeded(9);
    group.throughput(Throughput::Elements((784 + 800 + 800) as u64));
    group.bench_function("dropout_resample_784_800_800", |b| {
        b.iter(|| plan.resample(&mut mask_rng))
    });
    group.finish();
}

// ---------------------------------------------------------------------------
// Whole epochs
// ---------------------------------------------------------------------------

fn epoch_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    group.warm_up_time(Duration::from_secs(1));
    group.measurement_time(Duration::from_secs(10));

    let arch = dense_arch(&[200]);
    let data = synthetic_dataset(32, 784);
    let view = DatasetView::full(&data);
    group.throughput(Throughput::Elements(32));

    let post = BinaryPosterior::init(&arch, 10);
    group.bench_function("binary_32_dense_200", |b| {
        b.iter_batched(
            || post.clone(),
            |mut p| {
                let m = engine::train_epoch(&mut p, &view, 11, None).unwrap();
                black_box(m.error_rate());
                p
            },
            BatchSize::LargeInput,
        )
    });

    group.bench_function("binary_32_dense_200_dropout", |b| {
        let dropout =
            EpochDropout { config: DropoutConfig::new(0.8).unwrap(), mask_seed: 12 };
        b.iter_batched(
            || post.clone(),
            |mut p| {
                let m = engine::train_epoch(&mut p, &view, 11, Some(dropout)).unwrap();
                black_box(m.error_rate());
                p
            },
            BatchSize::LargeInput,
        )
    });

    let real = RealPosterior::init(&arch, 13);
    group.bench_function("real_32_dense_200", |b| {
        b.iter_batched(
            || real.clone(),
            |mut p| {
                let m = engine::train_epoch_real(&mut p, &view, 11, None).unwrap();
                black_box(m.error_rate());
                p
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

// ---------------------------------------------------------------------------
// Test-time readouts over a held-out set
// ---------------------------------------------------------------------------

fn readout_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("readout");
    group.sample_size(20);
    group.measurement_time(Duration::from_secs(8));

    let arch = dense_arch(&[200]);
    let post = BinaryPosterior::init(&arch, 14);
    let data = synthetic_dataset(128, 784);
    let view = DatasetView::full(&data);
    group.throughput(Throughput::Elements(128));

    let model = ExpectationModel::from_binary(&post, 1.0).unwrap();
    group.bench_function("probabilistic_128_dense_200", |b| {
        b.iter(|| black_box(evaluate_probabilistic(&model, &view).unwrap()))
    });

    let clipped = post.clip();
    group.bench_function("deterministic_128_dense_200", |b| {
        b.iter(|| black_box(evaluate_deterministic(&clipped, &view).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    kernel_benchmarks,
    forward_benchmarks,
    update_benchmarks,
    epoch_benchmarks,
    readout_benchmarks,
);
criterion_main!(benches);
