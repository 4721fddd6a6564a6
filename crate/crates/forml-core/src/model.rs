//! Feed-forward MLP classifier: ReLU hidden layers, linear output (logits),
//! softmax cross-entropy loss, SGD parameter updates with value semantics.
//!
//! Parameters follow the canonical flat layout shared with [`crate::grad`]:
//! layer-major (layer 0 first), each layer's weight matrix before its bias
//! vector, weights row-major as `[out][in]`. Checkpoints serialize exactly
//! this layout: a little-endian header (`u32` dim count, then each layer
//! dimension as `u32`) followed by the flat parameters as little-endian `f64`.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::grad::GradVector;
use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer dims must contain at least two positive entries, got {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("target {target} out of range for {num_classes} classes at sample {index}")]
    TargetOutOfRange {
        index: usize,
        target: usize,
        num_classes: usize,
    },
    #[error("learning rate must be finite and non-negative, got {0}")]
    BadLearningRate(f64),
    #[error("non-finite parameter produced at flat offset {0}")]
    NonFiniteParam(usize),
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Loss family used for training objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
}

/// One dense layer: `out × in` weights plus an `out` bias vector.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Immutable MLP parameters. Updates return fresh values so a caller can hold
/// both the pre- and post-step parameters of one iteration.
#[derive(Debug, Clone)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

/// A batch view handed to forward/gradient routines: one input row per sample
/// plus the matching class targets.
#[derive(Debug, Clone, Copy)]
pub struct SampleBatch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: &'a [usize],
}

impl<'a> SampleBatch<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, targets: &'a [usize]) -> Self {
        Self { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Glorot-uniform MLP initialization: weights in ±√(6/(fan_in+fan_out)) drawn
/// row-major per layer from a ChaCha8 stream, biases zero. Deterministic per
/// seed.
pub fn init_mlp(layer_dims: &[usize], seed: u64) -> Result<ModelParams, ModelError> {
    if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
        return Err(ModelError::InvalidDims(layer_dims.to_vec()));
    }
    let mut rng = rng::stream(seed, rng::TAG_MODEL_INIT, 0);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights =
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit));
        layers.push(Layer {
            weights,
            biases: Array1::zeros(fan_out),
        });
    }
    Ok(ModelParams { layers })
}

impl ModelParams {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, hidden..., out]` as passed to `init_mlp`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.input_dim());
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    /// Total scalar parameter count: Σ over layers of out·in + out.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum()
    }

    /// Construct from explicit layers. Consecutive dimensions must chain and
    /// every entry must be finite.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::InvalidDims(vec![]));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(ModelError::DimensionMismatch {
                    what: "consecutive layer dims must chain",
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        let params = ModelParams { layers };
        if let Some(off) = params
            .to_flat()
            .iter()
            .position(|v| !v.is_finite())
        {
            return Err(ModelError::NonFiniteParam(off));
        }
        Ok(params)
    }

    /// Flatten into the canonical layout.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend(layer.weights.iter());
            flat.extend(layer.biases.iter());
        }
        flat
    }

    /// Rebuild from a canonical flat vector and the `layer_dims` it was
    /// flattened under.
    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self, ModelError> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::InvalidDims(layer_dims.to_vec()));
        }
        let expected: usize = layer_dims
            .windows(2)
            .map(|p| p[1] * p[0] + p[1])
            .sum();
        if flat.len() != expected {
            return Err(ModelError::DimensionMismatch {
                what: "flat parameter length",
                expected,
                got: flat.len(),
            });
        }
        let mut layers = Vec::with_capacity(layer_dims.len() - 1);
        let mut cursor = 0usize;
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w_len = fan_out * fan_in;
            let weights =
                Array2::from_shape_vec((fan_out, fan_in), flat[cursor..cursor + w_len].to_vec())
                    .expect("shape matches slice length");
            cursor += w_len;
            let biases = Array1::from_vec(flat[cursor..cursor + fan_out].to_vec());
            cursor += fan_out;
            layers.push(Layer { weights, biases });
        }
        ModelParams::from_layers(layers)
    }

    /// Forward pass: ReLU on hidden layers, identity on the output layer.
    /// Returns one logits row per input row.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        if inputs.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                what: "input feature dimension",
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut act = inputs.dot(&self.layers[0].weights.t()) + &self.layers[0].biases;
        if last > 0 {
            act.mapv_inplace(|v| v.max(0.0));
        }
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            act = act.dot(&layer.weights.t()) + &layer.biases;
            if l < last {
                act.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(act)
    }

    /// θ' = θ − lr·grad, elementwise in canonical layout. `self` is untouched.
    pub fn sgd_step(&self, grad: &GradVector, lr: f64) -> Result<ModelParams, ModelError> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(ModelError::BadLearningRate(lr));
        }
        if grad.len() != self.num_params() {
            return Err(ModelError::DimensionMismatch {
                what: "gradient layout",
                expected: self.num_params(),
                got: grad.len(),
            });
        }
        let g = grad.as_slice();
        let mut cursor = 0usize;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let w_len = layer.out_dim() * layer.in_dim();
            let mut weights = layer.weights.clone();
            for (w, &gv) in weights.iter_mut().zip(&g[cursor..cursor + w_len]) {
                *w -= lr * gv;
            }
            cursor += w_len;
            let mut biases = layer.biases.clone();
            for (b, &gv) in biases.iter_mut().zip(&g[cursor..cursor + layer.out_dim()]) {
                *b -= lr * gv;
            }
            cursor += layer.out_dim();
            layers.push(Layer { weights, biases });
        }
        Ok(ModelParams { layers })
    }

    /// Write a checkpoint (header + canonical flat params, little-endian).
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let dims = self.layer_dims();
        let mut f = File::create(path)?;
        f.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            f.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in self.to_flat() {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a checkpoint written by [`ModelParams::save`].
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut f = File::open(path)?;
        let mut buf4 = [0u8; 4];
        f.read_exact(&mut buf4)
            .map_err(|_| ModelError::BadCheckpoint("truncated dim header".into()))?;
        let n_dims = u32::from_le_bytes(buf4) as usize;
        if n_dims < 2 || n_dims > 64 {
            return Err(ModelError::BadCheckpoint(format!(
                "implausible dim count {n_dims}"
            )));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            f.read_exact(&mut buf4)
                .map_err(|_| ModelError::BadCheckpoint("truncated dims".into()))?;
            dims.push(u32::from_le_bytes(buf4) as usize);
        }
        let count: usize = dims.windows(2).map(|p| p[1] * p[0] + p[1]).sum();
        let mut flat = Vec::with_capacity(count);
        let mut buf8 = [0u8; 8];
        for _ in 0..count {
            f.read_exact(&mut buf8)
                .map_err(|_| ModelError::BadCheckpoint("truncated parameters".into()))?;
            flat.push(f64::from_le_bytes(buf8));
        }
        ModelParams::from_flat(&dims, &flat)
    }
}

/// Per-sample softmax cross-entropy (natural log), numerically stable via
/// max-subtraction.
pub fn per_sample_loss(
    logits: ArrayView2<f64>,
    targets: &[usize],
    loss: LossKind,
) -> Result<Vec<f64>, ModelError> {
    let LossKind::SoftmaxCrossEntropy = loss;
    if logits.nrows() != targets.len() {
        return Err(ModelError::DimensionMismatch {
            what: "one target per logit row",
            expected: logits.nrows(),
            got: targets.len(),
        });
    }
    let num_classes = logits.ncols();
    let mut out = Vec::with_capacity(targets.len());
    for (i, (row, &target)) in logits.outer_iter().zip(targets).enumerate() {
        if target >= num_classes {
            return Err(ModelError::TargetOutOfRange {
                index: i,
                target,
                num_classes,
            });
        }
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        out.push(lse - row[target]);
    }
    Ok(out)
}

/// Row-stable softmax of a logits batch.
pub(crate) fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    p
}

/// Argmax class per logits row; ties resolve to the lowest index.
pub fn predictions(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_mlp(&[4, 3, 2], 11).unwrap();
        let b = init_mlp(&[4, 3, 2], 11).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        let c = init_mlp(&[4, 3, 2], 12).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn init_biases_zero_and_weights_in_glorot_range() {
        let p = init_mlp(&[5, 7, 3], 0).unwrap();
        for layer in p.layers() {
            assert!(layer.biases.iter().all(|&b| b == 0.0));
            let limit = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
            assert!(layer.weights.iter().all(|&w| w.abs() < limit));
        }
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_mlp(&[5], 0).is_err());
        assert!(init_mlp(&[], 0).is_err());
        assert!(init_mlp(&[4, 0, 2], 0).is_err());
    }

    // The spec's own worked example miscomputes this sum; the count oracle
    // Σ(out·in + out) gives 200,960 + 65,792 + 2,570 = 269,322.
    #[test]
    fn param_count_matches_count_oracle() {
        let dims = [784usize, 256, 256, 10];
        let oracle: usize = dims.windows(2).map(|p| p[1] * p[0] + p[1]).sum();
        assert_eq!(oracle, 269_322);
        let p = init_mlp(&dims, 3).unwrap();
        assert_eq!(p.num_params(), oracle);
        assert_eq!(p.to_flat().len(), oracle);
    }

    #[test]
    fn forward_zero_params_gives_zero_logits() {
        let p = ModelParams::from_layers(vec![Layer {
            weights: Array2::zeros((3, 4)),
            biases: Array1::zeros(3),
        }])
        .unwrap();
        let x = Array2::from_elem((2, 4), 1.5);
        let logits = p.forward(x.view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_identity_single_layer_passes_input_through() {
        let p = ModelParams::from_layers(vec![Layer {
            weights: Array2::eye(3),
            biases: Array1::zeros(3),
        }])
        .unwrap();
        let x = array![[0.5, -2.0, 3.0]];
        let logits = p.forward(x.view()).unwrap();
        assert_eq!(logits, x);
    }

    #[test]
    fn forward_matches_handrolled_matmul_oracle() {
        let p = init_mlp(&[4, 5, 3], 99).unwrap();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - 1.0) * 0.3 + j as f64 * 0.17);
        let logits = p.forward(x.view()).unwrap();

        // Independent oracle: explicit loops, no ndarray dot.
        let mut oracle = vec![vec![0.0f64; 3]; 3];
        for s in 0..3 {
            let mut h = vec![0.0f64; 5];
            for o in 0..5 {
                let mut acc = p.layers()[0].biases[o];
                for i in 0..4 {
                    acc += p.layers()[0].weights[[o, i]] * x[[s, i]];
                }
                h[o] = acc.max(0.0);
            }
            for o in 0..3 {
                let mut acc = p.layers()[1].biases[o];
                for i in 0..5 {
                    acc += p.layers()[1].weights[[o, i]] * h[i];
                }
                oracle[s][o] = acc;
            }
        }
        for s in 0..3 {
            for o in 0..3 {
                assert!((logits[[s, o]] - oracle[s][o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let p = init_mlp(&[4, 3], 0).unwrap();
        let x = Array2::zeros((2, 5));
        assert!(matches!(
            p.forward(x.view()),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        let logits = Array2::from_elem((2, 7), 0.3);
        let losses =
            per_sample_loss(logits.view(), &[0, 6], LossKind::SoftmaxCrossEntropy).unwrap();
        for l in losses {
            assert!((l - (7.0f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_decreases_as_correct_logit_grows() {
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 3.0, 10.0, 40.0] {
            let logits = array![[margin, 0.0, 0.0]];
            let l = per_sample_loss(logits.view(), &[0], LossKind::SoftmaxCrossEntropy).unwrap()[0];
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn softmax_ce_matches_direct_computation_oracle() {
        let logits = array![[1.0, 2.0, 3.0]];
        let l = per_sample_loss(logits.view(), &[2], LossKind::SoftmaxCrossEntropy).unwrap()[0];
        // Direct oracle: -ln(e^3 / (e^1 + e^2 + e^3)).
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let oracle = -(3f64.exp() / denom).ln();
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 0.40760596).abs() < 1e-8);
    }

    #[test]
    fn loss_is_shift_invariant_in_logits() {
        let logits = array![[0.4, -1.2, 2.2, 0.0]];
        let shifted = logits.mapv(|v| v + 123.456);
        let a = per_sample_loss(logits.view(), &[2], LossKind::SoftmaxCrossEntropy).unwrap()[0];
        let b = per_sample_loss(shifted.view(), &[2], LossKind::SoftmaxCrossEntropy).unwrap()[0];
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn loss_rejects_out_of_range_target() {
        let logits = array![[0.0, 1.0]];
        let err = per_sample_loss(logits.view(), &[2], LossKind::SoftmaxCrossEntropy).unwrap_err();
        assert!(matches!(err, ModelError::TargetOutOfRange { index: 0, .. }));
    }

    #[test]
    fn sgd_step_arithmetic_and_identities() {
        let p = ModelParams::from_layers(vec![Layer {
            weights: array![[1.0, 1.0]],
            biases: array![0.0],
        }])
        .unwrap();
        let g = GradVector::from_vec(vec![2.0, -2.0, 0.0]);

        let stepped = p.sgd_step(&g, 0.5).unwrap();
        assert_eq!(stepped.to_flat(), vec![0.0, 2.0, 0.0]);

        let frozen = p.sgd_step(&g, 0.0).unwrap();
        assert_eq!(frozen.to_flat(), p.to_flat());

        let zero = GradVector::from_vec(vec![0.0; 3]);
        assert_eq!(p.sgd_step(&zero, 0.7).unwrap().to_flat(), p.to_flat());
    }

    #[test]
    fn sgd_step_reversed_gradient_returns_to_start() {
        let p = init_mlp(&[3, 4, 2], 5).unwrap();
        let g = GradVector::from_vec((0..p.num_params()).map(|i| (i as f64).sin()).collect());
        let neg = GradVector::from_vec(g.as_slice().iter().map(|v| -v).collect());
        let there = p.sgd_step(&g, 0.03).unwrap();
        let back = there.sgd_step(&neg, 0.03).unwrap();
        for (a, b) in back.to_flat().iter().zip(p.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_step_rejects_layout_mismatch() {
        let p = init_mlp(&[3, 2], 0).unwrap();
        let g = GradVector::from_vec(vec![0.0; 5]);
        assert!(matches!(
            p.sgd_step(&g, 0.1),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let p = init_mlp(&[6, 4, 3], 21).unwrap();
        p.save(&path).unwrap();
        let q = ModelParams::load(&path).unwrap();
        assert_eq!(p.layer_dims(), q.layer_dims());
        assert_eq!(p.to_flat(), q.to_flat());
    }

    #[test]
    fn flat_roundtrip_preserves_layout() {
        let p = init_mlp(&[4, 3, 2], 8).unwrap();
        let flat = p.to_flat();
        let q = ModelParams::from_flat(&p.layer_dims(), &flat).unwrap();
        assert_eq!(q.to_flat(), flat);
    }
}
