//! Central-difference helpers for the loss gradient checks.

use semcorr::learner::{FeatureSpec, Features, LinearModel};
use semcorr::rng::SplitMix64;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const BATCHES: u64 = 100;

/// `|g − fd| / max(|g| + |fd|, 1e-6)`, maximized over coordinates.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `m`'s parameters.
pub fn numeric_grad(m: &LinearModel, f: impl Fn(&LinearModel) -> f64) -> Vec<f64> {
    let p0 = m.params();
    let mut probe = m.clone();
    (0..p0.len())
        .map(|i| {
            let mut p = p0.clone();
            p[i] = p0[i] + H;
            probe.set_params(&p).unwrap();
            let up = f(&probe);
            p[i] = p0[i] - H;
            probe.set_params(&p).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn random_model(rng: &mut SplitMix64, nf: usize, nc: usize) -> LinearModel {
    let spec = FeatureSpec::Vector { abs: false, products: false };
    let mut m = if rng.bernoulli(0.5) {
        LinearModel::mlp(spec, nf, nc, 1 + rng.below(5) as usize, rng.next_u64()).unwrap()
    } else {
        LinearModel::new(spec, nf, nc).unwrap()
    };
    let p: Vec<f64> = (0..m.num_params()).map(|_| rng.standard_normal()).collect();
    m.set_params(&p).unwrap();
    m
}

pub fn random_batch(rng: &mut SplitMix64, nf: usize, nc: usize) -> (Vec<Features>, Vec<usize>) {
    let n = 1 + rng.below(8) as usize;
    let x = (0..n)
        .map(|_| {
            let mut f = Features::default();
            for i in 0..nf {
                if rng.bernoulli(0.6) {
                    f.idx.push(i as u32);
                    f.val.push(rng.standard_normal());
                }
            }
            f
        })
        .collect();
    let y = (0..n).map(|_| rng.below(nc as u64) as usize).collect();
    (x, y)
}
