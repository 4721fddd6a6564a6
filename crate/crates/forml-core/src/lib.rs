//! Joint optimization of per-sample training weights and model parameters:
//! an MLP family with reverse-mode gradients, fairness metrics and meta-losses,
//! dataset plumbing (IDX, synthetic generators, corruption, samplers), and the
//! reweighting trainer with its baselines and condensation pipeline.

pub mod data;
pub mod fairness;
pub mod grad;
pub mod model;
pub mod trainer;
pub mod weights;

pub(crate) mod rng;
