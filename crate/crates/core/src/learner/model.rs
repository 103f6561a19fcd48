use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureSpec, Features};
use crate::covariate::Covariate;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Optional tanh hidden layer; weights stored `[unit][input]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Softmax classifier over fixed features, linear or with one hidden layer.
///
/// Parameters flatten as hidden weights, hidden bias, output weights
/// (`[class][input]`), output bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub spec: FeatureSpec,
    pub num_features: usize,
    pub num_classes: usize,
    pub hidden: Option<HiddenLayer>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) struct Forward {
    pub hidden: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `log softmax(logits)[k]`.
pub fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    logits[k] - m - s.ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl LinearModel {
    /// Zero-initialized linear model.
    pub fn new(spec: FeatureSpec, num_features: usize, num_classes: usize) -> Result<Self> {
        spec.validate()?;
        if num_features == 0 || num_classes < 2 {
            return Err(Error::InvalidParameter(
                "need at least one feature and two classes".into(),
            ));
        }
        Ok(Self {
            spec,
            num_features,
            num_classes,
            hidden: None,
            weights: vec![0.0; num_classes * num_features],
            bias: vec![0.0; num_classes],
        })
    }

    /// Linear model sized for covariates shaped like `example`.
    pub fn for_example(spec: FeatureSpec, example: &Covariate, num_classes: usize) -> Result<Self> {
        let d = spec.dim(example)?;
        Self::new(spec, d, num_classes)
    }

    /// One tanh hidden layer of `width` units with `N(0, 1/num_features)`
    /// weights drawn from `seed`; everything else starts at zero.
    pub fn mlp(
        spec: FeatureSpec,
        num_features: usize,
        num_classes: usize,
        width: usize,
        seed: u64,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        let mut m = Self::new(spec, num_features, num_classes)?;
        let mut rng = SplitMix64::new(seed);
        let scale = 1.0 / (num_features as f64).sqrt();
        m.hidden = Some(HiddenLayer {
            width,
            weights: (0..width * num_features).map(|_| scale * rng.standard_normal()).collect(),
            bias: vec![0.0; width],
        });
        m.weights = vec![0.0; num_classes * width];
        Ok(m)
    }

    /// Width of the representation feeding the output layer.
    pub fn rep_dim(&self) -> usize {
        self.hidden.as_ref().map_or(self.num_features, |h| h.width)
    }

    pub fn num_params(&self) -> usize {
        let h = self.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len());
        h + self.weights.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        if let Some(h) = &self.hidden {
            p.extend(&h.weights);
            p.extend(&h.bias);
        }
        p.extend(&self.weights);
        p.extend(&self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                p.len()
            )));
        }
        let mut it = p.iter().copied();
        if let Some(h) = &mut self.hidden {
            h.weights.iter_mut().chain(h.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        Ok(())
    }

    /// `true` at flattened positions that are weights (decayed) rather
    /// than biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.num_params());
        if let Some(h) = &self.hidden {
            m.extend(std::iter::repeat(true).take(h.weights.len()));
            m.extend(std::iter::repeat(false).take(h.bias.len()));
        }
        m.extend(std::iter::repeat(true).take(self.weights.len()));
        m.extend(std::iter::repeat(false).take(self.bias.len()));
        m
    }

    /// `params -= lr · grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        let mut it = grad.iter();
        let mut upd = |v: &mut f64| *v -= lr * it.next().unwrap();
        if let Some(h) = &mut self.hidden {
            h.weights.iter_mut().for_each(&mut upd);
            h.bias.iter_mut().for_each(&mut upd);
        }
        self.weights.iter_mut().for_each(&mut upd);
        self.bias.iter_mut().for_each(&mut upd);
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    fn check_features(&self, f: &Features) -> Result<()> {
        if let Some(&i) = f.idx.iter().find(|&&i| i as usize >= self.num_features) {
            return Err(Error::Shape(format!(
                "feature index {i} outside model input of {}",
                self.num_features
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, f: &Features) -> Forward {
        let (c, r) = (self.num_classes, self.rep_dim());
        let mut logits = self.bias.clone();
        match &self.hidden {
            None => {
                for (&i, &v) in f.idx.iter().zip(&f.val) {
                    let i = i as usize;
                    for (k, l) in logits.iter_mut().enumerate() {
                        *l += self.weights[k * r + i] * v;
                    }
                }
                Forward { hidden: None, logits }
            }
            Some(h) => {
                let d = self.num_features;
                let mut pre = h.bias.clone();
                for (&i, &v) in f.idx.iter().zip(&f.val) {
                    let i = i as usize;
                    for (j, p) in pre.iter_mut().enumerate() {
                        *p += h.weights[j * d + i] * v;
                    }
                }
                let act: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();
                for k in 0..c {
                    logits[k] += (0..r).map(|j| self.weights[k * r + j] * act[j]).sum::<f64>();
                }
                Forward { hidden: Some(act), logits }
            }
        }
    }

    /// Adds `∂(dlogits · logits)/∂θ` into `grad`.
    pub(crate) fn backward(&self, f: &Features, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let (c, r) = (self.num_classes, self.rep_dim());
        let off = self.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len());
        let (head, tail) = grad.split_at_mut(off);
        let (gw, gb) = tail.split_at_mut(c * r);
        for k in 0..c {
            gb[k] += dlogits[k];
        }
        match (&self.hidden, &fwd.hidden) {
            (Some(h), Some(act)) => {
                let d = self.num_features;
                for k in 0..c {
                    for j in 0..r {
                        gw[k * r + j] += dlogits[k] * act[j];
                    }
                }
                let (ghw, ghb) = head.split_at_mut(h.weights.len());
                for j in 0..r {
                    let dh: f64 = (0..c).map(|k| dlogits[k] * self.weights[k * r + j]).sum();
                    let dpre = dh * (1.0 - act[j] * act[j]);
                    ghb[j] += dpre;
                    for (&i, &v) in f.idx.iter().zip(&f.val) {
                        ghw[j * d + i as usize] += dpre * v;
                    }
                }
            }
            _ => {
                for (&i, &v) in f.idx.iter().zip(&f.val) {
                    for k in 0..c {
                        gw[k * r + i as usize] += dlogits[k] * v;
                    }
                }
            }
        }
    }

    pub fn logits_features(&self, f: &Features) -> Result<Vec<f64>> {
        self.check_features(f)?;
        Ok(self.forward(f).logits)
    }

    pub fn predict_proba_features(&self, f: &Features) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits_features(f)?))
    }

    pub fn predict_features(&self, f: &Features) -> Result<usize> {
        Ok(argmax(&self.logits_features(f)?))
    }

    /// Class probabilities for a covariate.
    pub fn predict_proba(&self, x: &Covariate) -> Result<Vec<f64>> {
        self.predict_proba_features(&featurize(&self.spec, x)?)
    }

    /// Argmax class, ties toward the lowest index.
    pub fn predict(&self, x: &Covariate) -> Result<usize> {
        self.predict_features(&featurize(&self.spec, x)?)
    }
}
