mod common;

use cgait_core::cnn::{ActivationTrace, LayerSpec, Network, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

/// ReLU on/off pattern and maxpool winners; finite differences are only
/// meaningful when both probes see the same pattern as the base point.
fn pattern(net: &Network, trace: &ActivationTrace) -> Vec<usize> {
    let mut sig = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let x = trace.layer_input(i);
        let y = trace.output(i);
        match *layer.spec() {
            LayerSpec::Relu => sig.extend(x.data.iter().map(|&v| usize::from(v > 0.0))),
            LayerSpec::MaxPool1d { pool_size } => {
                let (channels, len) = match x.shape {
                    Shape::Seq { channels, len } => (channels, len),
                    Shape::Flat(_) => unreachable!(),
                };
                let out_len = len / pool_size;
                for c in 0..channels {
                    for t in 0..out_len {
                        let start = c * len + t * pool_size;
                        let win = &x.data[start..start + pool_size];
                        sig.push(win.iter().position(|&v| v == y.data[c * out_len + t]).unwrap());
                    }
                }
            }
            _ => {}
        }
    }
    sig
}

fn objective(trace: &ActivationTrace, u: &[f64]) -> f64 {
    trace.logits().iter().zip(u).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

struct Outcome {
    checked: usize,
    skipped: usize,
    worst: f64,
}

fn check_draw(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = rng.random_range(1..5);
    let (specs, len) = common::random_stack(&mut rng, out);
    let mut net = Network::new(specs, seed).unwrap();
    // random biases so bias gradients are exercised away from zero
    for i in 0..net.layers().len() {
        for b in net.layer_params_mut(i).1 {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let x = common::random_signal(&mut rng, len, -2.0, 2.0);
    let u: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask_seed = rng.random::<u64>();

    let base = net.forward_signal(&x, Some(mask_seed)).unwrap();
    let base_pattern = pattern(&net, &base);
    let grads = net.backward_from(&base, &u).unwrap();
    let mut res = Outcome {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };

    // parameters
    for li in 0..net.layers().len() {
        let (nw, nb) = (net.layers()[li].weights().len(), net.layers()[li].biases().len());
        for (is_bias, n) in [(false, nw), (true, nb)] {
            for _ in 0..n.min(12) {
                let j = rng.random_range(0..n);
                let analytic = if is_bias {
                    grads.params[li].biases[j]
                } else {
                    grads.params[li].weights[j]
                };
                let orig = {
                    let (w, b) = net.layer_params_mut(li);
                    if is_bias {
                        b[j]
                    } else {
                        w[j]
                    }
                };
                let mut eval_at = |v: f64| {
                    let (w, b) = net.layer_params_mut(li);
                    if is_bias {
                        b[j] = v
                    } else {
                        w[j] = v
                    }
                    let t = net.forward_signal(&x, Some(mask_seed)).unwrap();
                    (objective(&t, &u), pattern(&net, &t))
                };
                let (fp, pp) = eval_at(orig + H);
                let (fm, pm) = eval_at(orig - H);
                eval_at(orig);
                if pp != base_pattern || pm != base_pattern {
                    res.skipped += 1;
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * H);
                res.worst = res.worst.max(rel_err(analytic, numeric));
                res.checked += 1;
            }
        }
    }
    // input
    for _ in 0..12 {
        let j = rng.random_range(0..len);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += H;
        xm[j] -= H;
        let tp = net.forward_signal(&xp, Some(mask_seed)).unwrap();
        let tm = net.forward_signal(&xm, Some(mask_seed)).unwrap();
        if pattern(&net, &tp) != base_pattern || pattern(&net, &tm) != base_pattern {
            res.skipped += 1;
            continue;
        }
        let numeric = (objective(&tp, &u) - objective(&tm, &u)) / (2.0 * H);
        res.worst = res.worst.max(rel_err(grads.input[j], numeric));
        res.checked += 1;
    }
    res
}

#[test]
fn backward_matches_central_differences() {
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for seed in 0..40 {
        let o = check_draw(seed);
        checked += o.checked;
        skipped += o.skipped;
        worst = worst.max(o.worst);
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    assert!(checked > 20 * skipped.max(1), "checked {checked}, skipped {skipped}");
}

#[test]
fn cross_entropy_gradient_matches_differences() {
    use cgait_core::cnn::cross_entropy;
    use cgait_core::Severity;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-30.0..30.0)).collect();
        let target = Severity::ALL[rng.random_range(0..4)];
        let (_, g) = cross_entropy(&logits, target);
        for k in 0..4 {
            let mut p = logits.clone();
            let mut m = logits.clone();
            p[k] += H;
            m[k] -= H;
            let numeric = (cross_entropy(&p, target).0 - cross_entropy(&m, target).0) / (2.0 * H);
            assert!(rel_err(g[k], numeric) < 1e-4 || (g[k] - numeric).abs() < 1e-9);
        }
    }
}
