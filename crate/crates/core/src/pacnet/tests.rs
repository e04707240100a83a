use std::cell::RefCell;

use rand::Rng;

use super::*;
use crate::seed;

fn random_clip(frames: usize, shape: [usize; 3], s: u64) -> Vec<f32> {
    let mut rng = seed::rng(s);
    (0..frames * shape.iter().product::<usize>()).map(|_| rng.random::<f32>()).collect()
}

fn stream(data: Vec<f32>, frames: usize, shape: [usize; 3]) -> FrameStream {
    FrameStream::new(data, frames, shape[0], shape[1], shape[2], StreamKind::Raw, 30.0).unwrap()
}

fn net(kind: ModelKind, shape: [usize; 3], w: usize, s: u64) -> Network<f32> {
    Network::new(ModelConfig::new(kind, shape, w), InputNorm::default(), s).unwrap()
}

const TINY: [usize; 3] = [1, 16, 16];

#[test]
fn kinds_round_trip_through_strings() {
    for k in ModelKind::ALL {
        assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
    }
    assert!(matches!("resnet".parse::<ModelKind>(), Err(Error::InvalidConfig(_))));
}

#[test]
fn pac_step_keeps_hidden_width_and_calibration_moves_state() {
    let n = net(ModelKind::Pacnet, TINY, 0, 1);
    let cell = NormalizedCell { net: &n, cell: &n.tracking };
    let mut changed = 0;
    for draw in 0..100u64 {
        let f = random_clip(2, TINY, 100 + draw);
        let (a, b) = f.split_at(256);
        let diff: Vec<f32> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let mut rng = seed::rng(draw);
        let state = TrackerState {
            h: (0..128).map(|_| rng.random_range(-0.5..0.5f32)).collect(),
            frames_seen: 1,
            stage: Stage::Tracking,
        };
        let (next, h_tilde) = pac_step(&state, &diff, b, &cell).unwrap();
        assert_eq!(next.h.len(), 128);
        assert_eq!(h_tilde.len(), 128);
        let (again, h_tilde_again) = pac_step(&state, &diff, b, &cell).unwrap();
        assert_eq!((next.h.clone(), h_tilde.clone()), (again.h, h_tilde_again));
        if next.h != h_tilde {
            changed += 1;
        }
    }
    assert_eq!(changed, 100);
}

#[test]
fn pac_step_rejects_wrong_shapes() {
    let n = net(ModelKind::Pacnet, TINY, 0, 1);
    let cell = NormalizedCell { net: &n, cell: &n.tracking };
    let state = TrackerState::zeros(128, Stage::Tracking);
    assert!(matches!(pac_step(&state, &[0.0; 10], &[0.0; 256], &cell), Err(Error::Contract(_))));
}

struct Recorder {
    calls: RefCell<Vec<&'static str>>,
}

impl FrameCell<f64> for Recorder {
    fn frame_len(&self) -> usize {
        1
    }

    fn propagate(&self, h: &[f64], diff: &[f64]) -> Vec<f64> {
        self.calls.borrow_mut().push("propagate");
        vec![h[0] + diff[0]]
    }

    fn calibrate(&self, h: &[f64], raw: &[f64]) -> Vec<f64> {
        self.calls.borrow_mut().push("calibrate");
        vec![0.5 * (h[0] + raw[0])]
    }
}

#[test]
fn propagate_runs_before_calibrate() {
    let rec = Recorder { calls: RefCell::new(Vec::new()) };
    let mut state = TrackerState::<f64>::zeros(1, Stage::Tracking);
    for t in 0..3 {
        let (next, h_tilde) = pac_step(&state, &[1.0], &[t as f64], &rec).unwrap();
        assert_eq!(h_tilde[0], state.h[0] + 1.0);
        assert_eq!(next.h[0], 0.5 * (h_tilde[0] + t as f64));
        state = next;
    }
    assert_eq!(*rec.calls.borrow(), ["propagate", "calibrate"].repeat(3));
    assert_eq!(state.frames_seen, 3);
}

#[test]
fn fresh_state_is_zero() {
    let n = net(ModelKind::Pacnet, TINY, 4, 1);
    let t = Tracker::new(&n);
    assert!(t.state().h.iter().all(|&v| v == 0.0));
    assert_eq!(t.state().h.len(), 128);
    assert_eq!(t.state().stage, Stage::Warmup);
}

#[test]
fn three_frame_clip_matches_hand_unrolled_steps() {
    let shape = [1, 8, 8];
    let n: Network<f64> = Network::new(ModelConfig::tiny(ModelKind::Pacnet, shape, 8, 0), InputNorm::default(), 3).unwrap();
    let f: Vec<f64> = (0..3 * 64).map(|i| 0.5 + 0.3 * (i as f64 * 0.37).sin()).collect();
    let (out, _) = n.forward(&f, 3, None).unwrap();
    assert_eq!(out.positions.len(), 2 * 2);
    let cell = NormalizedCell { net: &n, cell: &n.tracking };
    let frame = |t: usize| &f[t * 64..(t + 1) * 64];
    let mut h = vec![0.0; 8];
    for t in 1..3 {
        let diff: Vec<f64> = frame(t).iter().zip(frame(t - 1)).map(|(a, b)| a - b).collect();
        let h_tilde = cell.propagate(&h, &diff);
        h = cell.calibrate(&h_tilde, frame(t));
        let (y, _) = n.decoder.forward(&h, 1);
        let (yp, _) = n.decoder.forward(&h_tilde, 1);
        let k = 2 * (t - 1);
        assert!((y[0] - out.positions[k]).abs() < 1e-12 && (y[1] - out.positions[k + 1]).abs() < 1e-12);
        let pp = out.p_positions.as_ref().unwrap();
        assert!((yp[0] - pp[k]).abs() < 1e-12 && (yp[1] - pp[k + 1]).abs() < 1e-12);
    }
}

#[test]
fn output_counts_per_kind() {
    let t = 12;
    let s = stream(random_clip(t, TINY, 5), t, TINY);
    let pac = net(ModelKind::Pacnet, TINY, 0, 1).track(&s, None).unwrap();
    assert_eq!((pac.positions.len(), pac.emitted().len()), (t - 1, t - 1));
    let c = net(ModelKind::Cnet, TINY, 0, 1).track(&s, None).unwrap();
    assert_eq!(c.emitted().len(), t);
    let init = Point2::new(0.3, 0.6);
    let p = net(ModelKind::Pnet, TINY, 0, 1).track(&s, Some(init)).unwrap();
    assert_eq!(p.emitted().len(), t);
    assert!(p.first.unwrap().dist(init) < 1e-7);
    assert_eq!(net(ModelKind::Cnn, TINY, 0, 1).track(&s, None).unwrap().emitted().len(), t);
}

#[test]
fn pnet_requires_initial_position() {
    let t = 5;
    let s = stream(random_clip(t, TINY, 5), t, TINY);
    let n = net(ModelKind::Pnet, TINY, 0, 1);
    assert!(matches!(n.track(&s, None), Err(Error::Contract(_))));
    let mut tr = Tracker::new(&n);
    assert!(matches!(tr.push(&s.data[..256]), Err(Error::Contract(_))));
}

#[test]
fn pnet_trajectory_is_a_running_sum() {
    let t = 10;
    let s = stream(random_clip(t, TINY, 6), t, TINY);
    let n = net(ModelKind::Pnet, TINY, 0, 2);
    let init = Point2::new(0.25, 0.75);
    let (out, cache) = n.forward(&s.data, t, Some([0.25, 0.75])).unwrap();
    let _ = cache;
    let pos = TrackOutput::from_forward(&out).emitted();
    assert!(pos[0].dist(init) < 1e-7);
    // recompute the decoded displacements directly from the states
    let p = n.tracking.p.as_ref().unwrap();
    let mut h = vec![0.0f32; n.state_len()];
    for k in 1..t {
        let d = n.normalize_diff(&s.data[k * 256..(k + 1) * 256], &s.data[(k - 1) * 256..k * 256]);
        let (f, _) = p.encoder.forward(&d, 1);
        h = p.gru.step(&f, &h, 1).0;
        let (y, _) = n.decoder.forward(p.gru.top(&h, 1), 1);
        let step = pos[k].sub(pos[k - 1]);
        assert!((step.x - 0.01 * y[0] as f64).abs() < 1e-6 && (step.y - 0.01 * y[1] as f64).abs() < 1e-6);
    }
}

#[test]
fn pnet_zero_motion_stays_put() {
    let t = 8;
    let frame = random_clip(1, TINY, 7);
    let s = stream(frame.repeat(t), t, TINY);
    let mut n = net(ModelKind::Pnet, TINY, 0, 3);
    // a decoder that maps any feature to zero displacement
    n.decoder.l2.w.iter_mut().for_each(|v| *v = 0.0);
    n.decoder.l2.b.iter_mut().for_each(|v| *v = 0.0);
    let init = Point2::new(0.4, 0.2);
    let out = n.track(&s, Some(init)).unwrap();
    for p in out.emitted() {
        assert!((p.x - 0.4).abs() < 1e-6 && (p.y - 0.2).abs() < 1e-6);
    }
}

#[test]
fn cnn_is_stateless() {
    let t = 6;
    let data = random_clip(t, TINY, 8);
    let n = net(ModelKind::Cnn, TINY, 0, 4);
    let a = n.track(&stream(data.clone(), t, TINY), None).unwrap().emitted();
    let perm = [3, 0, 5, 1, 4, 2];
    let shuffled: Vec<f32> = perm.iter().flat_map(|&i| data[i * 256..(i + 1) * 256].to_vec()).collect();
    let b = n.track(&stream(shuffled, t, TINY), None).unwrap().emitted();
    for (k, &i) in perm.iter().enumerate() {
        assert!(a[i].dist(b[k]) < 1e-6);
    }
    let twice: Vec<f32> = [&data[..256], &data[..256]].concat();
    let c = n.track(&stream(twice, 2, TINY), None).unwrap().emitted();
    assert_eq!(c[0], c[1]);
}

#[test]
fn warmup_of_zero_uses_only_tracking_cell() {
    let n = net(ModelKind::Pacnet, TINY, 0, 1);
    assert!(n.warmup.is_none());
    assert!((0..50).all(|t| n.stage_of(t) == Stage::Tracking));
    let w = net(ModelKind::Pacnet, TINY, 3, 1);
    let stages: Vec<Stage> = (1..6).map(|t| w.stage_of(t)).collect();
    assert_eq!(stages, [Stage::Warmup, Stage::Warmup, Stage::Warmup, Stage::Tracking, Stage::Tracking]);
}

#[test]
fn too_short_stream_is_rejected() {
    let n = net(ModelKind::Pacnet, TINY, 4, 1);
    let s = stream(random_clip(5, TINY, 1), 5, TINY);
    assert!(matches!(n.track(&s, None), Err(Error::TooShort { .. })));
    let s = stream(random_clip(6, TINY, 1), 6, TINY);
    assert_eq!(n.track(&s, None).unwrap().positions.len(), 5);
}

#[test]
fn streaming_equals_batch() {
    for (kind, w) in [(ModelKind::Pacnet, 0), (ModelKind::Pacnet, 4), (ModelKind::Cnet, 3), (ModelKind::Pnet, 0), (ModelKind::Cnn, 0)] {
        let t = 14;
        let s = stream(random_clip(t, TINY, 9), t, TINY);
        let n = net(kind, TINY, w, 11);
        let init = Point2::new(0.5, 0.5);
        let batch = n.track(&s, Some(init)).unwrap().emitted();
        let mut tr = Tracker::with_initial_position(&n, init);
        let mut online = Vec::new();
        for k in 0..t {
            if let Some(o) = tr.push(s.frame(k)).unwrap() {
                online.push(o.position);
            }
        }
        assert_eq!(online.len(), batch.len(), "{kind}");
        for (a, b) in online.iter().zip(&batch) {
            assert!((a.x - b.x).abs() <= 1e-5 && (a.y - b.y).abs() <= 1e-5, "{kind}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn ablation_pathways_are_size_matched() {
    let shape = [3, 32, 32];
    let pac = net(ModelKind::Pacnet, shape, 0, 0).pathway_param_count() as f64;
    assert!((pac - 426_624.0).abs() < 1.0);
    for kind in [ModelKind::Cnet, ModelKind::Pnet, ModelKind::Cnn] {
        let n = net(kind, shape, 0, 0).pathway_param_count() as f64;
        assert!((n / pac - 1.0).abs() <= 0.10, "{kind}: {n} vs {pac}");
    }
}

#[test]
fn outputs_are_finite_for_random_parameters() {
    for s in 0..5 {
        let t = 8;
        let st = stream(random_clip(t, TINY, 20 + s), t, TINY);
        for kind in ModelKind::ALL {
            let w = if kind.supports_warmup() { 2 } else { 0 };
            let out = net(kind, TINY, w, s).track(&st, Some(Point2::new(0.5, 0.5))).unwrap();
            assert!(out.emitted().iter().all(|p| p.x.is_finite() && p.y.is_finite()));
        }
    }
}

#[test]
fn warmup_and_tracking_cells_are_independent() {
    let mut n = net(ModelKind::Pacnet, TINY, 2, 1);
    let warm = n.warmup.clone().unwrap();
    assert_ne!(warm.flat(), n.tracking.flat());
    let mut rng = seed::rng(0);
    n.tracking.visit_mut("", &mut |_, p| p.iter_mut().for_each(|v| *v = rng.random()));
    assert_eq!(n.warmup.as_ref().unwrap(), &warm);
}

/// d(sum w_i * out_i)/d(params) against central differences on a sample of parameters.
fn check_backward(kind: ModelKind, w: usize, shared: bool) {
    let shape = [2, 8, 8];
    let mut cfg = ModelConfig::tiny(kind, shape, 6, w);
    cfg.shared_decoder = shared;
    if kind == ModelKind::Cnet {
        cfg.gru_layers = 2;
    }
    let n: Network<f64> = Network::new(cfg, InputNorm::default(), 7).unwrap();
    let t = 5;
    let frames: Vec<f64> = (0..t * 128).map(|i| 0.5 + 0.4 * (i as f64 * 0.61).sin()).collect();
    let init = Some([0.4, 0.6]);
    let wts: Vec<f64> = (0..(t - 1) * 2).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.3).collect();
    let pw: Vec<f64> = wts.iter().map(|v| 0.5 - v).collect();
    let use_p = !shared && kind == ModelKind::Pacnet;
    let loss = |m: &Network<f64>| {
        let (o, _) = m.forward(&frames, t, init).unwrap();
        let mut l: f64 = o.positions.iter().zip(&wts).map(|(a, b)| a * b).sum();
        if use_p {
            l += o.p_positions.unwrap().iter().zip(&pw).map(|(a, b)| a * b).sum::<f64>();
        }
        l
    };
    let (_, cache) = n.forward(&frames, t, init).unwrap();
    let mut g = n.zeros_like();
    n.backward(&cache, &wts, use_p.then_some(pw.as_slice()), &mut g);
    let base = n.flat();
    let gf = g.flat();
    let names: Vec<String> = n.named_lengths().iter().flat_map(|(name, len)| std::iter::repeat_n(name.clone(), *len)).collect();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for i in (0..base.len()).step_by(7) {
        let mut m = n.clone();
        let mut v = base.clone();
        v[i] += eps;
        m.set_flat(&v);
        let lp = loss(&m);
        v[i] -= 2.0 * eps;
        m.set_flat(&v);
        let lm = loss(&m);
        let num = (lp - lm) / (2.0 * eps);
        let err = (num - gf[i]).abs() / (1e-6 + num.abs().max(gf[i].abs()));
        assert!((num - gf[i]).abs() < 1e-6 || err < 1e-4, "{kind} {}: numeric {num} analytic {}", names[i], gf[i]);
        worst = worst.max((num - gf[i]).abs());
    }
    assert!(worst < 1e-5);
}

#[test]
fn backward_matches_finite_differences_for_every_kind() {
    check_backward(ModelKind::Pacnet, 0, true);
    check_backward(ModelKind::Pacnet, 2, true);
    check_backward(ModelKind::Pacnet, 1, false);
    check_backward(ModelKind::Cnet, 2, true);
    check_backward(ModelKind::Pnet, 0, true);
    check_backward(ModelKind::Cnn, 0, true);
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut n = net(ModelKind::Pacnet, TINY, 2, 5);
    n.norm = InputNorm {
        raw_mean: 0.41,
        raw_std: 0.07,
        diff_std: 0.003,
    };
    save_checkpoint(&path, &n, serde_json::json!({"epoch": 3})).unwrap();
    let (back, header) = load_checkpoint(&path).unwrap();
    assert_eq!(back, n);
    assert_eq!(header.meta["epoch"], 3);
    assert_eq!(load_checkpoint_expecting(&path, &n.config).unwrap(), n);

    let other = ModelConfig::new(ModelKind::Pacnet, TINY, 0);
    assert!(matches!(load_checkpoint_expecting(&path, &other), Err(Error::CheckpointMismatch(_))));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptContainer { .. })));
    assert!(matches!(load_checkpoint(&dir.path().join("none.ckpt")), Err(Error::MissingFile(_))));
}
