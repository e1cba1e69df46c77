use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mapcd_core::ccl::Connectivity;
use mapcd_core::synth::ChangeFractions;
use mapcd_core::{
    detect_changes_noprompt, detect_changes_prompt, generate_scene, label_components,
    AggregationParams, BinaryMask, LabelParams, Scene, SceneParams,
};

fn scene(size: u32, objects: u32) -> Scene {
    generate_scene(&SceneParams {
        seed: 11,
        width: size,
        height: size,
        n_objects: objects,
        change_fractions: ChangeFractions::new(0.2, 0.2, 0.1),
        split_k: 3,
        boundary_noise: 1,
    })
    .expect("bench scene")
}

fn bench_ccl(c: &mut Criterion) {
    let mut group = c.benchmark_group("ccl");
    for (size, objects) in [(256, 12), (512, 48), (1024, 160)] {
        let s = scene(size, objects);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let params = LabelParams {
                connectivity: conn,
                ..Default::default()
            };
            let id = BenchmarkId::new(format!("{}-conn", conn.neighbors()), size);
            group.bench_with_input(id, &s.raster, |b, r| {
                b.iter(|| label_components(black_box(r), &params).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_rle(c: &mut Criterion) {
    let s = scene(512, 48);
    let bits = s.truth.bits().to_vec();
    let mask = s.truth.to_mask();
    let other = s.masks.masks()[0].clone();
    let mut group = c.benchmark_group("rle");
    group.bench_function("encode-512", |b| {
        b.iter(|| BinaryMask::encode(black_box(&bits), 512, 512).unwrap())
    });
    group.bench_function("decode-512", |b| b.iter(|| black_box(&mask).decode()));
    group.bench_function("iou-512", |b| {
        b.iter(|| black_box(&mask).iou(&other).unwrap())
    });
    group.bench_function("union-512", |b| {
        b.iter(|| black_box(&mask).union(&other).unwrap())
    });
    group.finish();
}

fn bench_detect(c: &mut Criterion) {
    let mut group = c.benchmark_group("detect");
    group.sample_size(20);
    for (size, objects) in [(256, 12), (512, 48)] {
        let s = scene(size, objects);
        let (_, instances) = label_components(&s.raster, &LabelParams::default()).unwrap();
        let agg = AggregationParams::default();
        group.bench_with_input(BenchmarkId::new("noprompt", size), &instances, |b, inst| {
            b.iter(|| detect_changes_noprompt(black_box(inst), &s.masks, &agg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("prompt", size), &instances, |b, inst| {
            b.iter(|| detect_changes_prompt(black_box(inst), &s.prompted, &s.legend, 16).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ccl, bench_rle, bench_detect);
criterion_main!(benches);
