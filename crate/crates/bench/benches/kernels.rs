use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use simstex_core::colorfield::{ColorField, FieldConfig};
use simstex_core::denoiser::ZeroDenoiser;
use simstex_core::geometry::{make_cameras, prepare_mesh, primitives, CameraPreset, PresetKind};
use simstex_core::raster::{inverse_render, rasterize, render_texture};
use simstex_core::rng;
use simstex_core::sims::{run_pipeline, SimsConfig};
use simstex_core::Grid;

fn raster(c: &mut Criterion) {
    let mesh = prepare_mesh(&primitives::uv_sphere(0.5, 32, 16)).unwrap();
    let preset = CameraPreset::from_kind(PresetKind::Default9);
    let cam = make_cameras(&preset, &mesh, 0)[1];
    let mut group = c.benchmark_group("raster");
    for side in [64, 256] {
        let cam = cam.with_image_size(side, side);
        group.bench_with_input(BenchmarkId::new("rasterize", side), &cam, |b, cam| {
            b.iter(|| rasterize(black_box(&mesh), cam, 128, 128))
        });
        let r = rasterize(&mesh, &cam, 128, 128);
        let tex = Grid::from_fn(128, 128, 4, |row, col, ch| (row * 3 + col * 7 + ch) as f32 * 1e-3);
        group.bench_with_input(BenchmarkId::new("render_inverse", side), &r, |b, r| {
            b.iter(|| {
                let img = render_texture(black_box(&tex), r).unwrap();
                inverse_render(&img, r).unwrap()
            })
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mesh = prepare_mesh(&primitives::uv_sphere(0.5, 24, 12)).unwrap();
    let preset = CameraPreset::from_kind(PresetKind::Default9);
    let mut cfg = SimsConfig {
        rounds: 1,
        coarse_resolution: Some(64),
        ..SimsConfig::default()
    };
    cfg.schedule.steps = 5;
    c.bench_function("sims_round_5_steps_64", |b| {
        b.iter(|| run_pipeline(&mesh, "", &preset, &ZeroDenoiser, black_box(&cfg), &mut ()).unwrap())
    });
}

fn field(c: &mut Criterion) {
    let field = ColorField::new(FieldConfig::default(), &mut rng::stream(0, &[0])).unwrap();
    let xyz = [0.31, -0.12, 0.77];
    c.bench_function("hash_encode", |b| b.iter(|| field.encode(black_box(xyz))));
    c.bench_function("field_forward", |b| b.iter(|| field.forward(black_box(xyz))));
}

criterion_group!(benches, raster, sampler, field);
criterion_main!(benches);
