use serde::{Deserialize, Serialize};

use super::features::Features;
use super::loss::{poe_loss, weighted_ce_loss, Batch, PoeVariant};
use super::model::LinearModel;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Stream id used for minibatch shuffling.
pub const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Plain minibatch SGD settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "learning rate and batch size must be positive".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Example order for `epoch`: a Fisher–Yates permutation drawn from
/// `derive_seed(seed, epoch, SHUFFLE_STREAM)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    SplitMix64::new(derive_seed(seed, epoch as u64, SHUFFLE_STREAM)).permutation(n)
}

/// Inputs seen by a model during training.
pub enum Inputs<'a> {
    Fixed(&'a [Features]),
    /// Recomputed at the start of every epoch (e.g. fresh corruption draws).
    PerEpoch(&'a mut dyn FnMut(usize) -> Result<Vec<Features>>),
}

impl Inputs<'_> {
    fn epoch(&mut self, e: usize) -> Result<std::borrow::Cow<'_, [Features]>> {
        match self {
            Inputs::Fixed(x) => Ok(std::borrow::Cow::Borrowed(x)),
            Inputs::PerEpoch(f) => Ok(std::borrow::Cow::Owned(f(e)?)),
        }
    }
}

fn run_epochs(
    n: usize,
    opt: &OptConfig,
    mut step: impl FnMut(usize, &[usize]) -> Result<f64>,
) -> Result<TrainLog> {
    opt.validate()?;
    let mut log = TrainLog::default();
    for e in 0..opt.epochs {
        let order = epoch_order(opt.seed, e, n);
        let mut total = 0.0;
        for chunk in order.chunks(opt.batch_size) {
            let l = step(e, chunk)?;
            if !l.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss in epoch {e}")));
            }
            total += l * chunk.len() as f64;
        }
        log.epoch_losses.push(total / n as f64);
    }
    Ok(log)
}

/// Weighted-cross-entropy SGD from `m`; `weights = None` means all ones.
pub fn train(
    m: &LinearModel,
    x: &[Features],
    y: &[usize],
    weights: Option<&[f64]>,
    opt: &OptConfig,
) -> Result<(LinearModel, TrainLog)> {
    train_inputs(m, Inputs::Fixed(x), y, weights, opt)
}

pub fn train_inputs(
    m: &LinearModel,
    mut inputs: Inputs<'_>,
    y: &[usize],
    weights: Option<&[f64]>,
    opt: &OptConfig,
) -> Result<(LinearModel, TrainLog)> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidParameter("cannot train on an empty dataset".into()));
    }
    if weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Shape("one weight per example required".into()));
    }
    let ones = vec![1.0; n];
    let w_all = weights.unwrap_or(&ones);
    let mut model = m.clone();
    let mut cached: Option<(usize, Vec<Features>)> = None;
    let log = run_epochs(n, opt, |e, idx| {
        let x: &[Features] = match &mut inputs {
            Inputs::Fixed(x) => x,
            Inputs::PerEpoch(f) => {
                if cached.as_ref().map(|c| c.0) != Some(e) {
                    let xs = f(e)?;
                    if xs.len() != n {
                        return Err(Error::Shape("epoch inputs changed length".into()));
                    }
                    cached = Some((e, xs));
                }
                &cached.as_ref().unwrap().1
            }
        };
        let batch = Batch::select(x, y, idx);
        let w: Vec<f64> = idx.iter().map(|&i| w_all[i]).collect();
        let (loss, grad) = weighted_ce_loss(&model, &batch, &w, opt.weight_decay)?;
        model.sgd_step(&grad, opt.learning_rate);
        Ok(loss)
    })?;
    if !model.is_finite() {
        return Err(Error::Divergence("non-finite parameters after training".into()));
    }
    Ok((model, log))
}

/// Joint product-of-experts training; the biased model reads `t`, the main
/// model reads `x`.
pub fn train_poe(
    biased: &LinearModel,
    main: &LinearModel,
    mut t: Inputs<'_>,
    x: &[Features],
    y: &[usize],
    variant: PoeVariant,
    opt: &OptConfig,
) -> Result<(LinearModel, LinearModel, TrainLog)> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(Error::Shape("need one input per label and a non-empty dataset".into()));
    }
    let (mut b, mut m) = (biased.clone(), main.clone());
    let mut cur: Option<(usize, Vec<Features>)> = None;
    let log = run_epochs(n, opt, |e, idx| {
        if cur.as_ref().map(|c| c.0) != Some(e) {
            cur = Some((e, t.epoch(e)?.into_owned()));
        }
        let ts = &cur.as_ref().unwrap().1;
        let (bt, bx) = (Batch::select(ts, y, idx), Batch::select(x, y, idx));
        let (loss, gb, gm) = poe_loss(&b, &m, &bt, &bx, variant, opt.weight_decay)?;
        b.sgd_step(&gb, opt.learning_rate);
        m.sgd_step(&gm, opt.learning_rate);
        Ok(loss)
    })?;
    if !(b.is_finite() && m.is_finite()) {
        return Err(Error::Divergence("non-finite parameters after training".into()));
    }
    Ok((b, m, log))
}

/// Fraction of `x` classified as `y`.
pub fn accuracy(m: &LinearModel, x: &[Features], y: &[usize]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    let mut hits = 0usize;
    for (f, &yy) in x.iter().zip(y) {
        hits += (m.predict_features(f)? == yy) as usize;
    }
    Ok(hits as f64 / x.len() as f64)
}
