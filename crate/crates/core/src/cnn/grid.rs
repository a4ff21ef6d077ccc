use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layer::{LayerSpec, Shape};
use super::network::Network;
use super::train::{evaluate_refs, train_refs, TrainConfig};
use super::CnnError;
use crate::severity::NUM_CLASSES;
use crate::signal::{subject_kfold_refs, Window, WINDOW_LEN};

/// Geometry of the conv/dense stack.
///
/// Each conv block is conv (stride 1, same padding) -> ReLU -> maxpool; each
/// hidden dense layer is dense -> ReLU -> dropout; a final dense layer emits
/// one logit per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense_widths: Vec<usize>,
    pub input_len: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            conv_channels: vec![16, 32, 64, 64, 64],
            kernel_size: 9,
            pool_size: 2,
            dense_widths: vec![256, 64],
            input_len: WINDOW_LEN,
        }
    }
}

impl ArchConfig {
    pub fn layer_specs(&self, dropout_rate: f64) -> Result<Vec<LayerSpec>, CnnError> {
        let mut specs = Vec::new();
        let mut shape = Shape::Seq {
            channels: 1,
            len: self.input_len,
        };
        fn push(spec: LayerSpec, shape: &mut Shape, specs: &mut Vec<LayerSpec>) -> Result<(), CnnError> {
            *shape = spec.output_shape(*shape)?;
            specs.push(spec);
            Ok(())
        }
        let mut in_ch = 1;
        for &ch in &self.conv_channels {
            push(
                LayerSpec::Conv1d {
                    in_channels: in_ch,
                    out_channels: ch,
                    kernel_size: self.kernel_size,
                    stride: 1,
                    padding: (self.kernel_size - 1) / 2,
                },
                &mut shape,
                &mut specs,
            )?;
            push(LayerSpec::Relu, &mut shape, &mut specs)?;
            push(
                LayerSpec::MaxPool1d {
                    pool_size: self.pool_size,
                },
                &mut shape,
                &mut specs,
            )?;
            in_ch = ch;
        }
        push(LayerSpec::Flatten, &mut shape, &mut specs)?;
        let mut features = shape.size();
        for &width in &self.dense_widths {
            push(
                LayerSpec::Dense {
                    in_features: features,
                    out_features: width,
                },
                &mut shape,
                &mut specs,
            )?;
            push(LayerSpec::Relu, &mut shape, &mut specs)?;
            push(LayerSpec::Dropout { rate: dropout_rate }, &mut shape, &mut specs)?;
            features = width;
        }
        push(
            LayerSpec::Dense {
                in_features: features,
                out_features: NUM_CLASSES,
            },
            &mut shape,
            &mut specs,
        )?;
        Ok(specs)
    }

    pub fn build(&self, dropout_rate: f64, seed: u64) -> Result<Network, CnnError> {
        Network::new(self.layer_specs(dropout_rate)?, seed)
    }
}

/// One point of the hyperparameter lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

impl HyperParams {
    pub fn build_network(&self) -> Result<Network, CnnError> {
        self.arch.build(self.train.dropout_rate, self.train.seed)
    }
}

/// Cartesian lattice over architecture and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub archs: Vec<ArchConfig>,
    pub learning_rates: Vec<f64>,
    pub dropout_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl HyperGrid {
    pub fn points(&self, base: &TrainConfig) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for arch in &self.archs {
            for &learning_rate in &self.learning_rates {
                for &dropout_rate in &self.dropout_rates {
                    for &batch_size in &self.batch_sizes {
                        out.push(HyperParams {
                            arch: arch.clone(),
                            train: TrainConfig {
                                learning_rate,
                                dropout_rate,
                                batch_size,
                                ..base.clone()
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub params: HyperParams,
    /// Validation weighted F1 of every inner fit, outer-fold major.
    pub inner_f1: Vec<f64>,
    pub mean_inner_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: HyperParams,
    pub best_index: usize,
    pub candidates: Vec<CandidateScore>,
    /// Test weighted F1 of the selected configuration on each outer fold.
    pub outer_f1: Vec<f64>,
}

fn fit_score(params: &HyperParams, train: &[&Window], val: &[&Window], test: &[&Window]) -> Result<f64, CnnError> {
    let net = params.build_network()?;
    match train_refs(net, train, val, &params.train) {
        Ok((net, _)) => Ok(evaluate_refs(&net, test)?.1.report().weighted_avg.f1),
        // a diverged fit scores zero rather than aborting the search
        Err(CnnError::DivergedTraining { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn complement<'a>(all: &[&'a Window], held: &[usize]) -> Vec<&'a Window> {
    let mut mask = vec![false; all.len()];
    held.iter().for_each(|&i| mask[i] = true);
    all.iter().zip(mask).filter(|(_, m)| !m).map(|(w, _)| *w).collect()
}

/// Nested cross-validation. For each of `outer_folds` subject-disjoint
/// folds, every candidate is scored by `inner_folds`-fold CV on the outer
/// training part. The candidate with the best mean inner F1 across all
/// outer folds is selected and then refit on each outer training part to
/// report its held-out F1.
pub fn grid_search(
    windows: &[Window],
    grid: &[HyperParams],
    outer_folds: usize,
    inner_folds: usize,
    seed: u64,
) -> Result<GridSearchResult, CnnError> {
    if grid.is_empty() {
        return Err(CnnError::InvalidConfig("empty hyperparameter grid".to_string()));
    }
    if outer_folds < 2 || inner_folds < 2 {
        return Err(CnnError::InvalidConfig("need at least 2 folds".to_string()));
    }
    let all: Vec<&Window> = windows.iter().collect();
    let outer = subject_kfold_refs(&all, outer_folds, seed).map_err(|e| CnnError::InsufficientData(e.to_string()))?;

    let mut inner_scores: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    // per outer fold: (outer train, inner folds over it, outer test)
    let mut plans = Vec::with_capacity(outer_folds);
    for (k, held) in outer.iter().enumerate() {
        let outer_train = complement(&all, held);
        let outer_test: Vec<&Window> = held.iter().map(|&i| all[i]).collect();
        let inner = subject_kfold_refs(&outer_train, inner_folds, seed.wrapping_add(1 + k as u64))
            .map_err(|e| CnnError::InsufficientData(e.to_string()))?;
        for (c, params) in grid.iter().enumerate() {
            for inner_held in &inner {
                let fit = complement(&outer_train, inner_held);
                let val: Vec<&Window> = inner_held.iter().map(|&i| outer_train[i]).collect();
                inner_scores[c].push(fit_score(params, &fit, &val, &val)?);
            }
        }
        plans.push((outer_train, inner, outer_test));
    }

    let candidates: Vec<CandidateScore> = grid
        .iter()
        .zip(inner_scores)
        .map(|(p, s)| CandidateScore {
            params: p.clone(),
            mean_inner_f1: s.iter().sum::<f64>() / s.len() as f64,
            inner_f1: s,
        })
        .collect();
    let mut best_index = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean_inner_f1 > candidates[best_index].mean_inner_f1 {
            best_index = i;
        }
    }
    let best = candidates[best_index].params.clone();

    let mut outer_f1 = Vec::with_capacity(outer_folds);
    for (outer_train, inner, outer_test) in &plans {
        // first inner fold doubles as the early-stopping set
        let fit = complement(outer_train, &inner[0]);
        let val: Vec<&Window> = inner[0].iter().map(|&i| outer_train[i]).collect();
        outer_f1.push(fit_score(&best, &fit, &val, outer_test)?);
    }
    Ok(GridSearchResult {
        best,
        best_index,
        candidates,
        outer_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_geometry() {
        let specs = ArchConfig::default().layer_specs(0.5).unwrap();
        let parametric = specs.iter().filter(|s| s.has_params()).count();
        assert_eq!(parametric, 8);
        assert_eq!(specs.iter().filter(|s| s.is_conv()).count(), 5);
        // 1000 -> 500 -> 250 -> 125 -> 62 -> 31 frames, 64 channels
        assert!(specs.contains(&LayerSpec::Dense {
            in_features: 31 * 64,
            out_features: 256
        }));
        assert_eq!(
            specs.last(),
            Some(&LayerSpec::Dense {
                in_features: 64,
                out_features: 4
            })
        );
        assert_eq!(specs.iter().filter(|s| matches!(s, LayerSpec::Dropout { rate } if *rate == 0.5)).count(), 2);
    }

    #[test]
    fn grid_points_are_cartesian() {
        let grid = HyperGrid {
            archs: vec![ArchConfig::default()],
            learning_rates: vec![1e-3, 3e-4],
            dropout_rates: vec![0.3, 0.5],
            batch_sizes: vec![32],
        };
        assert_eq!(grid.points(&TrainConfig::default()).len(), 4);
    }
}
