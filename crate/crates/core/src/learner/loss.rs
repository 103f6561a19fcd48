use serde::{Deserialize, Serialize};

use super::features::Features;
use super::model::{log_softmax_at, softmax, LinearModel};
use crate::error::{Error, Result};

/// A minibatch of featurized examples.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub x: Vec<&'a Features>,
    pub y: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a [Features], y: &[usize]) -> Self {
        Self {
            x: x.iter().collect(),
            y: y.to_vec(),
        }
    }

    pub fn select(x: &'a [Features], y: &[usize], idx: &[usize]) -> Self {
        Self {
            x: idx.iter().map(|&i| &x[i]).collect(),
            y: idx.iter().map(|&i| y[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self, m: &LinearModel) -> Result<()> {
        if self.x.len() != self.y.len() || self.is_empty() {
            return Err(Error::Shape("batch needs equally many, and some, inputs and labels".into()));
        }
        if let Some(&y) = self.y.iter().find(|&&y| y >= m.num_classes) {
            return Err(Error::Shape(format!("label {y} outside {} classes", m.num_classes)));
        }
        for f in &self.x {
            if f.idx.iter().any(|&i| i as usize >= m.num_features) {
                return Err(Error::Shape("feature index outside model input".into()));
            }
        }
        Ok(())
    }
}

/// `(λ/2)·‖weights‖²` added to `loss`, `λ·weights` added to `grad`.
fn add_weight_decay(m: &LinearModel, wd: f64, grad: &mut [f64]) -> f64 {
    if wd == 0.0 {
        return 0.0;
    }
    let mut pen = 0.0;
    for ((g, p), is_w) in grad.iter_mut().zip(m.params()).zip(m.weight_mask()) {
        if is_w {
            pen += p * p;
            *g += wd * p;
        }
    }
    0.5 * wd * pen
}

/// Mean over the batch of `wᵢ · (−log p(yᵢ | xᵢ))`, plus weight decay on
/// weights (not biases), with its exact gradient.
pub fn weighted_ce_loss(
    m: &LinearModel,
    batch: &Batch<'_>,
    weights: &[f64],
    weight_decay: f64,
) -> Result<(f64, Vec<f64>)> {
    batch.check(m)?;
    if weights.len() != batch.len() {
        return Err(Error::Shape("one weight per example required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidParameter(format!("example weight {w} must be finite and >= 0")));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; m.num_params()];
    let mut loss = 0.0;
    for ((f, &y), &w) in batch.x.iter().zip(&batch.y).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let fwd = m.forward(f);
        loss -= w * log_softmax_at(&fwd.logits, y);
        let mut d = softmax(&fwd.logits);
        d[y] -= 1.0;
        d.iter_mut().for_each(|v| *v *= w / n);
        m.backward(f, &fwd, &d, &mut grad);
    }
    loss /= n;
    loss += add_weight_decay(m, weight_decay, &mut grad);
    Ok((loss, grad))
}

/// Which product-of-experts objective to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoeVariant {
    /// Sum of the two models' log-likelihoods, each trained on its own.
    Display,
    /// The main model fits `softmax(log p_biased + logits_main)`, with the
    /// biased probabilities held constant; the biased model fits its own
    /// cross-entropy.
    Renormalized,
}

/// Product-of-experts loss on paired batches (`t` for the biased model,
/// `x` for the main model), returning `(loss, biased grad, main grad)`.
pub fn poe_loss(
    biased: &LinearModel,
    main: &LinearModel,
    t: &Batch<'_>,
    x: &Batch<'_>,
    variant: PoeVariant,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    t.check(biased)?;
    x.check(main)?;
    if t.y != x.y {
        return Err(Error::Shape("biased and main batches must share labels".into()));
    }
    let n = x.len() as f64;
    let mut gb = vec![0.0; biased.num_params()];
    let mut gm = vec![0.0; main.num_params()];
    let mut loss = 0.0;
    for ((ft, fx), &y) in t.x.iter().zip(&x.x).zip(&x.y) {
        let fb = biased.forward(ft);
        let fm = main.forward(fx);
        loss -= log_softmax_at(&fb.logits, y);
        let mut db = softmax(&fb.logits);
        db[y] -= 1.0;
        db.iter_mut().for_each(|v| *v *= 1.0 / n);
        biased.backward(ft, &fb, &db, &mut gb);

        let main_logits = match variant {
            PoeVariant::Display => fm.logits.clone(),
            PoeVariant::Renormalized => {
                let lp: Vec<f64> = (0..biased.num_classes)
                    .map(|k| log_softmax_at(&fb.logits, k))
                    .collect();
                fm.logits.iter().zip(&lp).map(|(a, b)| a + b).collect()
            }
        };
        loss -= log_softmax_at(&main_logits, y);
        // scaled exactly as weighted_ce_loss scales a unit weight, so the
        // Display main model follows ERM bit for bit
        let mut dm = softmax(&main_logits);
        dm[y] -= 1.0;
        dm.iter_mut().for_each(|v| *v *= 1.0 / n);
        main.backward(fx, &fm, &dm, &mut gm);
    }
    loss /= n;
    loss += add_weight_decay(biased, weight_decay, &mut gb);
    loss += add_weight_decay(main, weight_decay, &mut gm);
    Ok((loss, gb, gm))
}

/// `(1 − p_biased(yᵢ | tᵢ))^γ` per example.
pub fn dfl_weights(biased: &LinearModel, t: &Batch<'_>, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be finite and >= 0")));
    }
    t.check(biased)?;
    Ok(t
        .x
        .iter()
        .zip(&t.y)
        .map(|(f, &y)| {
            let p = softmax(&biased.forward(f).logits)[y];
            (1.0 - p).max(0.0).powf(gamma)
        })
        .collect())
}

/// Debiased focal loss for the main model: cross-entropy weighted by the
/// biased model's miss probability to the power `γ`; no gradient reaches
/// the biased model.
pub fn dfl_loss(
    biased: &LinearModel,
    main: &LinearModel,
    t: &Batch<'_>,
    x: &Batch<'_>,
    gamma: f64,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>)> {
    if t.y != x.y {
        return Err(Error::Shape("biased and main batches must share labels".into()));
    }
    let w = dfl_weights(biased, t, gamma)?;
    weighted_ce_loss(main, x, &w, weight_decay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::features::FeatureSpec;

    fn feats(v: &[f64]) -> Features {
        Features {
            idx: (0..v.len() as u32).collect(),
            val: v.to_vec(),
        }
    }

    fn model() -> LinearModel {
        let mut m =
            LinearModel::new(FeatureSpec::Vector { abs: false, products: false }, 2, 3).unwrap();
        let p: Vec<f64> = (0..m.num_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn unit_weights_equal_plain_ce() {
        let m = model();
        let xs = vec![feats(&[1.0, -0.5]), feats(&[0.2, 0.3])];
        let b = Batch::new(&xs, &[0, 2]);
        let (l, _) = weighted_ce_loss(&m, &b, &[1.0, 1.0], 0.0).unwrap();
        let want = -(log_softmax_at(&m.logits_features(&xs[0]).unwrap(), 0)
            + log_softmax_at(&m.logits_features(&xs[1]).unwrap(), 2))
            / 2.0;
        assert!((l - want).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_contributes_nothing() {
        let m = model();
        let xs = vec![feats(&[1.0, -0.5]), feats(&[0.2, 0.3])];
        let b = Batch::new(&xs, &[0, 2]);
        let (_, g) = weighted_ce_loss(&m, &b, &[0.0, 0.0], 0.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(weighted_ce_loss(&m, &b, &[f64::NAN, 1.0], 0.0).is_err());
        assert!(weighted_ce_loss(&m, &b, &[-1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn gamma_zero_weights_are_one() {
        let m = model();
        let xs = vec![feats(&[1.0, -0.5]), feats(&[0.2, 0.3])];
        let b = Batch::new(&xs, &[0, 2]);
        assert_eq!(dfl_weights(&m, &b, 0.0).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn confident_biased_model_zeroes_weight() {
        let mut m = model();
        m.bias = vec![0.0, 1000.0, 0.0];
        m.weights.iter_mut().for_each(|w| *w = 0.0);
        let xs = vec![feats(&[1.0, -0.5])];
        let b = Batch::new(&xs, &[1]);
        assert_eq!(dfl_weights(&m, &b, 2.0).unwrap(), vec![0.0]);
    }
}
