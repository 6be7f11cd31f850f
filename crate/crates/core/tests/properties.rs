use std::collections::BTreeMap;

use nrff_core::codec::Raw16;
use nrff_core::fields::{posenc, Activation, CoordinateBatch, FieldNetwork, FieldNetworkSpec, Head};
use nrff_core::gop::{plan_gops, FrameRefs, RefMode};
use nrff_core::synth::Scene;
use nrff_core::trainer::{
    gop_targets, prepare_video, ArchConfig, EncodeConfig, Method, NetworkSet, Pipeline, PipelineSpec,
};
use nrff_core::warp::{bicubic, blend_multi, warp_frame, FlowMap};
use nrff_core::Frame;
use proptest::prelude::*;

fn frame_from_seed(seed: u64, w: usize, h: usize) -> Frame {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Frame::from_fn(w, h, |_, _| {
        core::array::from_fn(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 40) as f32 / (1u64 << 24) as f32
        })
    })
}

proptest! {
    #[test]
    fn partition_of_unity(t in 0.0f64..1.0) {
        let s: f64 = bicubic::weights(t).iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-6);
        let s32: f32 = bicubic::weights(t as f32).iter().sum();
        prop_assert!((s32 - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn linear_signals_shift_exactly(dx in -1.5f32..1.5, dy in -1.5f32..1.5, a in -0.02f32..0.02, b in -0.02f32..0.02) {
        let (w, h) = (16, 12);
        let img = Frame::from_fn(w, h, |x, y| {
            let v = 0.5 + a * x as f32 + b * y as f32;
            [v, 1.0 - v, 0.25 + 0.5 * v]
        });
        let out = warp_frame(&img, &FlowMap::uniform(w, h, dx, dy)).unwrap();
        for y in 4..h - 4 {
            for x in 4..w - 4 {
                let v = 0.5 + a * (x as f32 + dx) + b * (y as f32 + dy);
                let want = [v, 1.0 - v, 0.25 + 0.5 * v];
                let got = out.get(x, y);
                for c in 0..3 {
                    prop_assert!((got[c] - want[c]).abs() <= 1e-5, "{x},{y}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn sample_derivative_matches_differences(seed in any::<u64>(), x in 0.0f64..7.0, y in 0.0f64..5.0) {
        let near_knot = |v: f64| (v - v.round()).abs() < 1e-2;
        prop_assume!(!near_knot(x) && !near_knot(y));
        let img = frame_from_seed(seed, 8, 6);
        let data: Vec<f64> = img.data.iter().map(|v| *v as f64).collect();
        let (_, gx, gy) = bicubic::sample_with_gradient(&data, 8, 6, x, y);
        let h = 1e-6;
        let px = bicubic::sample(&data, 8, 6, x + h, y);
        let mx = bicubic::sample(&data, 8, 6, x - h, y);
        let py = bicubic::sample(&data, 8, 6, x, y + h);
        let my = bicubic::sample(&data, 8, 6, x, y - h);
        for c in 0..3 {
            let nx = (px[c] - mx[c]) / (2.0 * h);
            let ny = (py[c] - my[c]) / (2.0 * h);
            prop_assert!(nrff_core::autodiff::relative_error(gx[c], nx) <= 1e-4);
            prop_assert!(nrff_core::autodiff::relative_error(gy[c], ny) <= 1e-4);
        }
    }

    #[test]
    fn blend_of_equal_frames_is_identity(seed in any::<u64>(), w in 0.0f32..=1.0) {
        let a = frame_from_seed(seed, 5, 4);
        let out = blend_multi(&a, &a, &[w; 20]).unwrap();
        for (p, q) in out.data.iter().zip(&a.data) {
            prop_assert!((p - q).abs() <= 1e-6);
        }
    }

    #[test]
    fn plan_is_total_deterministic_and_acyclic(n in 1usize..60, g in 2usize..12, multi in any::<bool>()) {
        let mode = if multi { RefMode::MultiRef } else { RefMode::SingleRef };
        let plan = plan_gops(n, g, mode).unwrap();
        prop_assert_eq!(&plan, &plan_gops(n, g, mode).unwrap());
        prop_assert_eq!(plan.frame_count(), n);
        let keys = plan.keyframes();
        for (f, r) in plan.refs.iter().enumerate() {
            let gop = plan.gops[plan.gop_of(f).unwrap()];
            prop_assert_eq!(gop.key, (gop.first + gop.last) / 2);
            if f == gop.key {
                prop_assert_eq!(r.count(), 0);
                continue;
            }
            match *r {
                FrameRefs::Chain { reference } => {
                    prop_assert!(!multi);
                    // Each step moves one frame toward the key, so following
                    // references terminates at the keyframe.
                    prop_assert_eq!(reference.abs_diff(gop.key) + 1, f.abs_diff(gop.key));
                }
                FrameRefs::Keys { own, other } => {
                    prop_assert!(multi);
                    prop_assert_eq!(own, gop.key);
                    if let Some(o) = other {
                        prop_assert!(keys.contains(&o) && o != own);
                        prop_assert_eq!(o < own, f < own);
                    }
                }
                _ => prop_assert!(false, "frame {} has no reference", f),
            }
        }
    }

    #[test]
    fn posenc_is_injective(a in -1.0f32..=1.0, b in -1.0f32..=1.0, l in 0usize..8) {
        prop_assume!(a != b);
        let pa = posenc(&CoordinateBatch::from_points(&[[a, 0.0, 0.0]]).unwrap(), l);
        let pb = posenc(&CoordinateBatch::from_points(&[[b, 0.0, 0.0]]).unwrap(), l);
        prop_assert_eq!(pa.cols, 3 * (2 * l + 1));
        prop_assert_ne!(pa.data, pb.data);
    }

    #[test]
    fn evaluation_is_pure_and_shaped(seed in any::<u64>(), width in 1usize..12, sine in any::<bool>()) {
        let act = if sine { Activation::Sine } else { Activation::Swish };
        for head in [Head::FlowSingle, Head::FlowMulti, Head::Residual, Head::Color] {
            let spec = FieldNetworkSpec::new(head, act, width, 2).with_posenc(2);
            let net = FieldNetwork::init(spec, seed).unwrap();
            let c = CoordinateBatch::from_points(&[[0.1, -0.4, 0.9], [-1.0, 1.0, 0.0]]).unwrap();
            let a = net.eval_raw(&c).unwrap();
            prop_assert_eq!(a.cols, head.output_dim());
            prop_assert_eq!(a.rows, 2);
            prop_assert_eq!(a, net.eval_raw(&c).unwrap());
        }
    }
}

/// Multi-reference GOP 0 of a 6-frame video on a 4x4 grid with random
/// ground truth.
fn multi_pipeline<'a>(
    nets: &'a NetworkSet,
    keys: &'a BTreeMap<usize, Frame>,
    gts: &'a [Frame],
    sup: &[usize],
) -> Pipeline<f64> {
    let plan = plan_gops(6, 3, RefMode::MultiRef).unwrap();
    let (targets, _) = gop_targets(&plan.gops[0], &plan.refs, false).unwrap();
    let spec = PipelineSpec {
        gop: plan.gops[0],
        nets,
        grid: (4, 4),
        keyframes: keys,
        targets,
        detach_references: false,
    };
    let pairs: Vec<(usize, &Frame)> = sup.iter().map(|&i| (i, &gts[i])).collect();
    Pipeline::build(&spec, Some(&pairs)).unwrap()
}

fn multi_fixture() -> (NetworkSet, BTreeMap<usize, Frame>, Vec<Frame>, Vec<f64>) {
    let nets =
        NetworkSet::for_budget(Method::NrffMulti, true, &ArchConfig::for_method(Method::NrffMulti), 300).unwrap();
    let keys: BTreeMap<usize, Frame> = [(1, frame_from_seed(1, 4, 4)), (4, frame_from_seed(2, 4, 4))].into();
    let gts = vec![frame_from_seed(3, 4, 4), frame_from_seed(4, 4, 4)];
    let params = nets.init(5).unwrap().iter().map(|v| *v as f64).collect();
    (nets, keys, gts, params)
}

#[test]
fn adjoints_are_linear_in_the_loss() {
    let (nets, keys, gts, params) = multi_fixture();
    let grad = |sup: &[usize]| {
        let mut p = multi_pipeline(&nets, &keys, &gts, sup);
        p.forward(&params).unwrap();
        p.gradient().unwrap()
    };
    let both = grad(&[0, 1]);
    let (g0, g1) = (grad(&[0]), grad(&[1]));
    // Equal pixel counts, so the joint mean is the average of the two.
    for i in 0..both.len() {
        let want = 0.5 * (g0[i] + g1[i]);
        assert!((both[i] - want).abs() <= 1e-12 * (1.0 + want.abs()), "{i}");
    }
}

#[test]
fn forward_and_backward_are_bit_identical() {
    let (nets, keys, gts, params) = multi_fixture();
    let mut p = multi_pipeline(&nets, &keys, &gts, &[0, 1]);
    p.forward(&params).unwrap();
    let (l1, g1) = (p.loss_value().unwrap(), p.gradient().unwrap());
    let mut q = multi_pipeline(&nets, &keys, &gts, &[0, 1]);
    q.forward(&params).unwrap();
    p.forward(&params).unwrap();
    assert_eq!(l1.to_bits(), q.loss_value().unwrap().to_bits());
    assert_eq!(g1, q.gradient().unwrap());
    assert_eq!(g1, p.gradient().unwrap());
}

#[test]
fn ground_truth_keyframes_do_not_enter_the_loss() {
    for method in [Method::NrffSingle, Method::NrffMulti, Method::BaselineColor] {
        let frames = Scene::translating().render(8, 8, 6);
        let mut cfg = EncodeConfig::new(method);
        cfg.gop_size = 3;
        cfg.train.iterations = 4;
        let video = prepare_video(&frames, &cfg, &Raw16).unwrap();
        for job in &video.jobs {
            let mut perturbed = job.clone();
            let k = job.gop.key - job.gop.first;
            perturbed.frames[k] = Frame::filled(8, 8, [1.0, 0.0, 1.0]);
            let run = |j: &nrff_core::trainer::GopJob| {
                let mut p = j.initial_params().unwrap();
                let mut losses = Vec::new();
                j.optimize(&mut p, &mut losses).unwrap();
                (p, losses)
            };
            assert_eq!(run(job), run(&perturbed), "{method:?} GOP {}", job.index);
        }
    }
}
