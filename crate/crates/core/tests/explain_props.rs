mod common;

use cgait_core::cnn::{ArchConfig, Layer, LayerSpec, Network};
use cgait_core::explain::{
    explanation_pair, grad_cam_raw, grad_cam_signal, lrp_relevance, lrp_signal, upsample, GradCamOptions, Upsample,
    LRP_EPSILON,
};
use cgait_core::signal::{Window, WINDOW_LEN};
use cgait_core::Severity;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bias_free(seed: u64) -> (Network, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (specs, len) = common::random_stack(&mut rng, 4);
    let mut net = Network::new(specs, seed).unwrap();
    common::zero_biases(&mut net);
    let x = common::random_signal(&mut rng, len, 0.0, 1000.0);
    (net, x)
}

#[test]
fn relevance_tracks_gradient_times_input_without_biases() {
    // with zero biases the epsilon rule tends to gradient x input as eps -> 0
    for seed in 0..60 {
        let (net, x) = bias_free(seed);
        let trace = net.forward_signal(&x, None).unwrap();
        for target in Severity::ALL {
            let r = lrp_relevance(&net, &trace, target).unwrap();
            let g = net.backward(&trace, target).unwrap().input;
            let gx: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a * b).collect();
            let scale = gx.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            for (a, b) in r.iter().zip(&gx) {
                assert!((a - b).abs() <= 1e-6 * scale, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn relevance_shortfall_is_epsilon_order() {
    // bias-free nets lose relevance only to the stabilizer, a few eps in total
    for seed in 100..160 {
        let (net, x) = bias_free(seed);
        let trace = net.forward_signal(&x, None).unwrap();
        for target in Severity::ALL {
            let logit = trace.logits()[target.index()];
            let total: f64 = lrp_relevance(&net, &trace, target).unwrap().iter().sum();
            assert!((total - logit).abs() < 100.0 * LRP_EPSILON, "seed {seed}: {total} vs {logit}");
        }
    }
}

#[test]
fn stabilizer_absorbs_eps_over_logit_at_the_output() {
    // one dense unit: total = z^2 / (z + eps), so the relative shortfall is
    // eps / (|z| + eps) whatever the implementation
    for z in [2e-3, 0.1, 10.0] {
        let mut w = vec![0.0; 4];
        w[0] = z;
        let dense = Layer::with_params(
            LayerSpec::Dense {
                in_features: 1,
                out_features: 4,
            },
            w,
            vec![0.0; 4],
        )
        .unwrap();
        let net = Network::from_layers(vec![Layer::zeroed(LayerSpec::Flatten).unwrap(), dense]).unwrap();
        let trace = net.forward_signal(&[1.0], None).unwrap();
        let total: f64 = lrp_relevance(&net, &trace, Severity::Healthy).unwrap().iter().sum();
        let rel = (total - z).abs() / z;
        assert!((rel - LRP_EPSILON / (z + LRP_EPSILON)).abs() < 1e-12);
    }
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        conv_channels: vec![4, 6],
        kernel_size: 7,
        pool_size: 4,
        dense_widths: vec![16],
        input_len: WINDOW_LEN,
    }
}

#[test]
fn maps_are_normalized_full_resolution_and_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..8 {
        let net = small_arch().build(0.5, seed).unwrap();
        let values = common::random_signal(&mut rng, WINDOW_LEN, 0.0, 900.0);
        let w = Window::new("s", 0, values, None).unwrap();
        for target in Severity::ALL {
            let (a, b) = explanation_pair(&net, &w, target, &GradCamOptions::default()).unwrap();
            for m in [&a, &b] {
                assert_eq!(m.len(), WINDOW_LEN);
                assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));
                let max = m.values.iter().cloned().fold(f64::MIN, f64::max);
                let min = m.values.iter().cloned().fold(f64::MAX, f64::min);
                assert_eq!(min, 0.0);
                assert!(max == 1.0 || max == 0.0);
            }
            assert_eq!((a.clone(), b.clone()), explanation_pair(&net, &w, target, &GradCamOptions::default()).unwrap());
            let single = grad_cam_signal(&net, w.values(), target, &GradCamOptions::default()).unwrap();
            assert_eq!(single, a);
            assert_eq!(lrp_signal(&net, w.values(), target).unwrap(), b);
        }
    }
}

#[test]
fn grad_cam_scales_with_upstream_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = small_arch().build(0.5, 2).unwrap();
    for _ in 0..10 {
        let x = common::random_signal(&mut rng, WINDOW_LEN, 0.0, 900.0);
        let trace = net.forward_signal(&x, None).unwrap();
        let u: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = rng.random_range(0.01..100.0);
        let cu: Vec<f64> = u.iter().map(|v| v * c).collect();
        let a = grad_cam_raw(&net, &trace, &u, None).unwrap();
        let b = grad_cam_raw(&net, &trace, &cu, None).unwrap();
        assert!(a.iter().all(|&v| v >= 0.0));
        for (p, q) in a.iter().zip(&b) {
            assert!((p * c - q).abs() <= 1e-9 * q.abs().max(1e-12));
        }
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |m, (i, x)| if *x > v[m] { i } else { m });
        assert_eq!(argmax(&a), argmax(&b));
    }
}

proptest! {
    #[test]
    fn upsampled_maximum_stays_within_one_stride(src in prop::collection::vec(0.0f64..1.0, 2..200)) {
        let l = src.len();
        let up = upsample(&src, WINDOW_LEN, Upsample::Linear);
        let i = up.iter().enumerate().fold(0, |m, (i, x)| if *x > up[m] { i } else { m });
        let stride = WINDOW_LEN as f64 / l as f64;
        // the peak sits within one stride of a source cell at least as large
        let near = (0..l).any(|j| src[j] >= up[i] && (i as f64 + 0.5 - (j as f64 + 0.5) * stride).abs() <= stride);
        prop_assert!(near);
        let global = src.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(up[i] <= global);
        prop_assert_eq!(up.len(), WINDOW_LEN);
    }

    #[test]
    fn nearest_upsampling_copies_cells(src in prop::collection::vec(-5.0f64..5.0, 1..300)) {
        let up = upsample(&src, WINDOW_LEN, Upsample::Nearest);
        for (i, v) in up.iter().enumerate() {
            prop_assert_eq!(*v, src[i * src.len() / WINDOW_LEN]);
        }
    }
}
