use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CnnError;

/// Layer kinds of the sequential network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool1d {
        pool_size: usize,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        rate: f64,
    },
}

/// Shape of an activation tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// Channel-major sequence, `data[c * len + t]`.
    Seq { channels: usize, len: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Seq { channels, len } => channels * len,
            Shape::Flat(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Tensor {
        Tensor {
            shape,
            data: alloc::vec![0.0; shape.size()],
        }
    }

    /// Row `c` of a sequence tensor.
    pub fn channel(&self, c: usize) -> &[f64] {
        match self.shape {
            Shape::Seq { len, .. } => &self.data[c * len..(c + 1) * len],
            Shape::Flat(_) => &self.data,
        }
    }
}

impl LayerSpec {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv1d { .. })
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. })
    }

    /// (weight count, bias count)
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => (out_channels * in_channels * kernel_size, out_channels),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (out_features * in_features, out_features),
            _ => (0, 0),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), CnnError> {
        let ok = match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                ..
            } => in_channels > 0 && out_channels > 0 && kernel_size > 0 && stride > 0,
            LayerSpec::MaxPool1d { pool_size } => pool_size > 0,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => in_features > 0 && out_features > 0,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::Relu | LayerSpec::Flatten => true,
        };
        if ok {
            Ok(())
        } else {
            Err(CnnError::InvalidLayer(format!("{self:?}")))
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, CnnError> {
        let mismatch = |detail: alloc::string::String| CnnError::ShapeMismatch(detail);
        match (*self, input) {
            (
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel_size,
                    stride,
                    padding,
                },
                Shape::Seq { channels, len },
            ) => {
                if channels != in_channels {
                    return Err(mismatch(format!("conv expects {in_channels} channels, got {channels}")));
                }
                let padded = len + 2 * padding;
                if padded < kernel_size {
                    return Err(mismatch(format!("conv kernel {kernel_size} longer than input {padded}")));
                }
                Ok(Shape::Seq {
                    channels: out_channels,
                    len: (padded - kernel_size) / stride + 1,
                })
            }
            (LayerSpec::MaxPool1d { pool_size }, Shape::Seq { channels, len }) => {
                if len < pool_size {
                    return Err(mismatch(format!("pool {pool_size} longer than input {len}")));
                }
                Ok(Shape::Seq {
                    channels,
                    len: len / pool_size,
                })
            }
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.size())),
            (
                LayerSpec::Dense {
                    in_features,
                    out_features,
                },
                Shape::Flat(n),
            ) => {
                if n != in_features {
                    return Err(mismatch(format!("dense expects {in_features} features, got {n}")));
                }
                Ok(Shape::Flat(out_features))
            }
            (LayerSpec::Relu | LayerSpec::Dropout { .. }, s) => Ok(s),
            (spec, s) => Err(mismatch(format!("{spec:?} cannot take input {s:?}"))),
        }
    }
}

/// A layer with its parameters. Conv weights are `[out][in][k]`, dense
/// weights `[out][in]`, both row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub(crate) spec: LayerSpec,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

impl Layer {
    /// Layer with all-zero parameters.
    pub fn zeroed(spec: LayerSpec) -> Result<Layer, CnnError> {
        spec.validate()?;
        let (w, b) = spec.param_counts();
        Ok(Layer {
            spec,
            weights: alloc::vec![0.0; w],
            biases: alloc::vec![0.0; b],
        })
    }

    pub fn with_params(spec: LayerSpec, weights: Vec<f64>, biases: Vec<f64>) -> Result<Layer, CnnError> {
        spec.validate()?;
        let (w, b) = spec.param_counts();
        if weights.len() != w || biases.len() != b {
            return Err(CnnError::ShapeMismatch(format!(
                "{spec:?} needs {w} weights and {b} biases, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Layer { spec, weights, biases })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_lengths() {
        let conv = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 16,
            kernel_size: 9,
            stride: 1,
            padding: 4,
        };
        assert_eq!(
            conv.output_shape(Shape::Seq { channels: 1, len: 1000 }).unwrap(),
            Shape::Seq { channels: 16, len: 1000 }
        );
        let valid = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 3,
            stride: 2,
            padding: 0,
        };
        assert_eq!(
            valid.output_shape(Shape::Seq { channels: 1, len: 10 }).unwrap(),
            Shape::Seq { channels: 1, len: 4 }
        );
        assert!(conv.output_shape(Shape::Seq { channels: 2, len: 10 }).is_err());
        assert!(conv.output_shape(Shape::Flat(10)).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Layer::zeroed(LayerSpec::Dropout { rate: 1.0 }).is_err());
        assert!(Layer::zeroed(LayerSpec::MaxPool1d { pool_size: 0 }).is_err());
        assert!(Layer::zeroed(LayerSpec::Dense { in_features: 0, out_features: 2 }).is_err());
        assert!(Layer::with_params(
            LayerSpec::Dense { in_features: 2, out_features: 2 },
            alloc::vec![0.0; 3],
            alloc::vec![0.0; 2]
        )
        .is_err());
    }
}
