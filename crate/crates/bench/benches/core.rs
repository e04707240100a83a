use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nlos_core::metrics::{dtw, pcm};
use nlos_core::nn::Params;
use nlos_core::pacnet::{InputNorm, ModelConfig, Network, Tracker};
use nlos_core::scenesim::{difference_stream, render_clip, sample_scene, ImageShape, Renderer};
use nlos_core::trajgen::{generate_trajectory, TrajectoryParams};
use nlos_core::{ModelKind, Point2};

fn curve(n: usize, phase: f64) -> Vec<Point2> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            Point2::new(0.5 + 0.3 * (6.0 * t + phase).cos(), 0.5 + 0.3 * (4.0 * t).sin())
        })
        .collect()
}

fn metrics(c: &mut Criterion) {
    let (a, b) = (curve(288, 0.0), curve(288, 0.2));
    c.bench_function("dtw 288x288", |bench| bench.iter(|| dtw(black_box(&a), black_box(&b)).unwrap()));
    c.bench_function("pcm 288x288", |bench| bench.iter(|| pcm(black_box(&a), black_box(&b)).unwrap()));
}

fn simulator(c: &mut Criterion) {
    let scene = sample_scene(3, ImageShape::new(3, 32, 32));
    let renderer = Renderer::new(&scene).unwrap();
    let p = scene.room.center();
    c.bench_function("render 3x32x32", |bench| bench.iter(|| renderer.render(black_box(p)).unwrap()));
    let traj = generate_trajectory(scene.room, &TrajectoryParams::with_frames(96), 3).unwrap();
    let clip = render_clip(&scene, &traj).unwrap();
    c.bench_function("difference stream 96x3x32x32", |bench| bench.iter(|| difference_stream(black_box(&clip)).unwrap()));
    c.bench_function("trajectory 320 frames", |bench| {
        bench.iter(|| generate_trajectory(scene.room, &TrajectoryParams::default(), black_box(7)).unwrap())
    });
}

fn tracking(c: &mut Criterion) {
    for (label, shape) in [("tiny 1x16x16", [1, 16, 16]), ("small 3x32x32", [3, 32, 32])] {
        let scene = sample_scene(5, ImageShape::new(shape[0], shape[1], shape[2]));
        let traj = generate_trajectory(scene.room, &TrajectoryParams::with_frames(64), 5).unwrap();
        let clip = render_clip(&scene, &traj).unwrap();
        let net = Network::<f32>::new(ModelConfig::new(ModelKind::Pacnet, shape, 0), InputNorm::default(), 0).unwrap();
        c.bench_function(&format!("pacnet streaming step, {label}"), |bench| {
            let mut tracker = Tracker::new(&net);
            let mut t = 0;
            bench.iter(|| {
                let out = tracker.push(clip.frame(t % clip.frames)).unwrap();
                t += 1;
                out
            })
        });
        c.bench_function(&format!("pacnet forward+backward 64 frames, {label}"), |bench| {
            let d_pos = vec![0.01f32; 2 * (clip.frames - 1)];
            bench.iter(|| {
                let (_, cache) = net.forward(&clip.data, clip.frames, None).unwrap();
                let mut grads = net.zeros_like();
                net.backward(&cache, &d_pos, None, &mut grads);
                grads
            })
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = metrics, simulator, tracking
}
criterion_main!(benches);
