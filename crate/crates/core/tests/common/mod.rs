#![allow(dead_code)]

use cgait_core::cnn::{LayerSpec, Network, Shape};
use rand::Rng;

/// Random stack containing every layer kind at least once:
/// conv -> relu -> maxpool (repeated), flatten, dense -> relu -> dropout, dense.
pub fn random_stack<R: Rng>(rng: &mut R, out_features: usize) -> (Vec<LayerSpec>, usize) {
    loop {
        let input_len = rng.random_range(12..64);
        let mut specs = Vec::new();
        let mut shape = Shape::Seq {
            channels: 1,
            len: input_len,
        };
        let mut ok = true;
        for _ in 0..rng.random_range(1..3) {
            let (channels, len) = match shape {
                Shape::Seq { channels, len } => (channels, len),
                Shape::Flat(_) => unreachable!(),
            };
            let k = rng.random_range(1..6usize);
            let conv = LayerSpec::Conv1d {
                in_channels: channels,
                out_channels: rng.random_range(1..5),
                kernel_size: k,
                stride: rng.random_range(1..3),
                padding: rng.random_range(0..k),
            };
            let pool = LayerSpec::MaxPool1d {
                pool_size: rng.random_range(1..4),
            };
            if len < k {
                ok = false;
                break;
            }
            for spec in [conv, LayerSpec::Relu, pool] {
                match spec.output_shape(shape) {
                    Ok(s) if s.size() > 0 => {
                        shape = s;
                        specs.push(spec);
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
        }
        if !ok {
            continue;
        }
        specs.push(LayerSpec::Flatten);
        let features = shape.size();
        let hidden = rng.random_range(2..12);
        specs.push(LayerSpec::Dense {
            in_features: features,
            out_features: hidden,
        });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::Dropout {
            rate: rng.random_range(0.1..0.6),
        });
        specs.push(LayerSpec::Dense {
            in_features: hidden,
            out_features,
        });
        return (specs, input_len);
    }
}

pub fn zero_biases(net: &mut Network) {
    for i in 0..net.layers().len() {
        net.layer_params_mut(i).1.iter_mut().for_each(|b| *b = 0.0);
    }
}

pub fn random_signal<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}
