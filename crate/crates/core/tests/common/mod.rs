//! Shared settings for the sampled-versus-exact comparisons on the
//! discretized XOR family.

#![allow(dead_code)]

pub mod fd;

use semcorr::corruptions::{CorruptionKind, CorruptionSpec};
use semcorr::exact::{
    biased_posterior, nuisance_randomize_family, Conditioner, FiniteCorruption, JointTable,
};
use semcorr::families::{xor_family_discrete, Dataset, DiscreteFamily};
use semcorr::learner::{FeatureSpec, OptConfig};
use semcorr::scams::{build_biased_model, nurd_weights, BiasedModel, ModelConfig};
use semcorr::Covariate;

pub const XOR_D: f64 = 0.5;
pub const XOR_GRID: usize = 4;

pub struct XorSetup {
    pub fam: DiscreteFamily,
    pub p: JointTable,
    /// Keeps coordinate 1, zeroes coordinate 0.
    pub t: FiniteCorruption,
    pub spec: CorruptionSpec,
    pub samples: Vec<(usize, usize, usize)>,
    pub data: Dataset,
}

pub fn xor_setup(n: usize, seed: u64) -> XorSetup {
    let fam = xor_family_discrete(XOR_D, XOR_GRID).unwrap();
    let p = fam.pmf(XOR_D).unwrap();
    let t = FiniteCorruption::keep_coordinates(&fam.x_support, &[1]).unwrap();
    let spec = CorruptionSpec::new(CorruptionKind::MaskCoordinates { coords: vec![0] }, seed).unwrap();
    let samples = fam.sample(XOR_D, n, seed).unwrap();
    let data = fam.to_dataset(&samples, XOR_D, seed).unwrap();
    XorSetup { fam, p, t, spec, samples, data }
}

pub fn xor_biased_config(seed: u64) -> ModelConfig {
    ModelConfig::linear(
        FeatureSpec::Vector { abs: true, products: false },
        OptConfig { learning_rate: 0.003, epochs: 60, batch_size: 32, weight_decay: 0.0, seed },
    )
}

pub fn xor_biased_model(s: &XorSetup, seed: u64) -> BiasedModel {
    build_biased_model(&s.data, &s.spec, &xor_biased_config(seed)).unwrap()
}

/// `max |p̂(y | t) − p(y | t)|` over the corrupted support.
pub fn posterior_sup_error(s: &XorSetup, b: &BiasedModel) -> f64 {
    let exact = biased_posterior(&s.p, Conditioner::Corrupted(&s.t)).unwrap();
    let mut worst: f64 = 0.0;
    for (t, row) in s.t.t_support.iter().zip(&exact) {
        let x = Covariate::Vector(t.iter().map(|&v| v as f32).collect());
        let learned = b.model.predict_proba(&x).unwrap();
        for (a, e) in learned.iter().zip(row) {
            worst = worst.max((a - e).abs());
        }
    }
    worst
}

/// Exact-posterior weights `p(y) / p(y | T(x))` for each sample.
pub fn exact_sample_weights(s: &XorSetup) -> Vec<f64> {
    let exact = biased_posterior(&s.p, Conditioner::Corrupted(&s.t)).unwrap();
    let marginal = s.p.marginal_y();
    s.samples
        .iter()
        .map(|&(y, _, x)| marginal[y] / exact[s.t.t(x, 0)][y])
        .collect()
}

pub fn learned_sample_weights(s: &XorSetup, b: &BiasedModel) -> Vec<f64> {
    nurd_weights(&s.data, b).unwrap()
}

/// `‖q − p⊥‖₁` over `(y, z, x)` where `q` is the weight-normalized
/// empirical distribution of the samples.
pub fn reweighted_l1(s: &XorSetup, weights: &[f64]) -> f64 {
    let perp = nuisance_randomize_family(&s.fam, XOR_D).unwrap();
    let mut q = vec![0.0; perp.probs().len()];
    let total: f64 = weights.iter().sum();
    for (&(y, z, x), w) in s.samples.iter().zip(weights) {
        q[perp.flat(y, z, x)] += w / total;
    }
    q.iter().zip(perp.probs()).map(|(a, b)| (a - b).abs()).sum()
}
