//! Corruption-powered spurious-correlation-avoiding methods: a biased
//! model fitted on `T(x)` drives reweighting-NuRD, JTT, PoE or DFL, and
//! corruption parameters are chosen by each method's validation scheme.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruptions::{apply_stream, CorruptionSpec};
use crate::covariate::Covariate;
use crate::error::{Error, Result};
use crate::families::Dataset;
use crate::learner::{
    accuracy, dfl_weights, featurize, softmax, train, train_inputs, train_poe, Batch, FeatureSpec,
    Features, Inputs, LinearModel, OptConfig, PoeVariant,
};

/// Floor applied to biased posteriors.
pub const CLIP_FLOOR: f64 = 1e-3;

/// Architecture and optimizer for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub features: FeatureSpec,
    /// Width of the tanh hidden layer; `None` for a linear model.
    pub hidden: Option<usize>,
    pub opt: OptConfig,
}

impl ModelConfig {
    pub fn linear(features: FeatureSpec, opt: OptConfig) -> Self {
        Self {
            features,
            hidden: None,
            opt,
        }
    }

    /// Untrained model sized for `example`.
    pub fn init(&self, example: &Covariate, num_classes: usize) -> Result<LinearModel> {
        let d = self.features.dim(example)?;
        match self.hidden {
            None => LinearModel::new(self.features.clone(), d, num_classes),
            Some(w) => LinearModel::mlp(self.features.clone(), d, num_classes, w, self.opt.seed),
        }
    }
}

/// Which SCAM to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ScamVariant {
    Erm,
    Nurd,
    Jtt { lambda_up: usize, id_epochs: usize },
    Poe { objective: PoeVariant },
    Dfl { gamma: f64 },
}

impl ScamVariant {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScamVariant::Jtt { lambda_up, id_epochs } if *lambda_up < 1 || *id_epochs < 1 => Err(
                Error::InvalidParameter("JTT needs lambda_up >= 1 and id_epochs >= 1".into()),
            ),
            ScamVariant::Dfl { gamma } if !(*gamma >= 0.0) || !gamma.is_finite() => {
                Err(Error::InvalidParameter(format!("gamma {gamma} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn id(&self) -> String {
        match self {
            ScamVariant::Erm => "erm".into(),
            ScamVariant::Nurd => "nurd".into(),
            ScamVariant::Jtt { lambda_up, id_epochs } => format!("jtt-up{lambda_up}-id{id_epochs}"),
            ScamVariant::Poe { objective: PoeVariant::Renormalized } => "poe".into(),
            ScamVariant::Poe { objective: PoeVariant::Display } => "poe-display".into(),
            ScamVariant::Dfl { gamma } => format!("dfl-{gamma}"),
        }
    }

    /// Validation scheme the method selects hyperparameters with.
    pub fn default_scheme(&self) -> ValScheme {
        match self {
            ScamVariant::Jtt { .. } => ValScheme::WorstGroup,
            _ => ValScheme::Average,
        }
    }
}

/// How a validation set scores a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValScheme {
    Average,
    WorstGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScamConfig {
    pub variant: ScamVariant,
    pub corruption: CorruptionSpec,
    pub biased: ModelConfig,
    pub main: ModelConfig,
}

/// A model of `p(y | T(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasedModel {
    pub model: LinearModel,
    pub corruption: CorruptionSpec,
    pub clip: f64,
}

impl BiasedModel {
    /// Clipped class probabilities for already corrupted features.
    pub fn proba_features(&self, f: &Features) -> Result<Vec<f64>> {
        Ok(self
            .model
            .predict_proba_features(f)?
            .into_iter()
            .map(|p| p.clamp(self.clip, 1.0 - self.clip))
            .collect())
    }

    /// Clipped `p(y | T(x, δ))` for example `index` on corruption stream
    /// `stream`.
    pub fn proba(&self, x: &Covariate, index: u64, stream: u64) -> Result<Vec<f64>> {
        let t = apply_stream(&self.corruption, x, index, stream)?;
        self.proba_features(&featurize(&self.model.spec, &t)?)
    }
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("dataset is empty".into()));
    }
    Ok(())
}

/// `T(xᵢ, δᵢ)` for every example, drawing δ from `stream`.
pub fn corrupt_all(data: &Dataset, spec: &CorruptionSpec, stream: u64) -> Result<Vec<Covariate>> {
    data.examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| apply_stream(spec, &e.x, i as u64, stream))
        .collect()
}

/// Features of `T(xᵢ, δᵢ)` for every example.
pub fn corrupted_features(
    data: &Dataset,
    spec: &CorruptionSpec,
    features: &FeatureSpec,
    stream: u64,
) -> Result<Vec<Features>> {
    data.examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| featurize(features, &apply_stream(spec, &e.x, i as u64, stream)?))
        .collect()
}

/// Features of the uncorrupted covariates.
pub fn clean_features(data: &Dataset, features: &FeatureSpec) -> Result<Vec<Features>> {
    data.examples.par_iter().map(|e| featurize(features, &e.x)).collect()
}

/// Trains a model on `(T(x), y)`, redrawing δ every epoch when the
/// corruption is random.
fn fit_on_corrupted(
    data: &Dataset,
    spec: &CorruptionSpec,
    cfg: &ModelConfig,
    epochs: usize,
) -> Result<LinearModel> {
    check_data(data)?;
    let init = cfg.init(&apply_stream(spec, &data.examples[0].x, 0, 0)?, data.num_classes)?;
    let y = data.labels();
    let opt = OptConfig { epochs, ..cfg.opt.clone() };
    let (m, _) = if spec.kind.is_random() {
        let mut per_epoch =
            |e: usize| corrupted_features(data, spec, &cfg.features, e as u64);
        train_inputs(&init, Inputs::PerEpoch(&mut per_epoch), &y, None, &opt)?
    } else {
        let x = corrupted_features(data, spec, &cfg.features, 0)?;
        train(&init, &x, &y, None, &opt)?
    };
    Ok(m)
}

/// ERM of `y` on `T(x)`; probabilities are clipped to `[CLIP_FLOOR, 1 − CLIP_FLOOR]`.
pub fn build_biased_model(
    data: &Dataset,
    spec: &CorruptionSpec,
    cfg: &ModelConfig,
) -> Result<BiasedModel> {
    Ok(BiasedModel {
        model: fit_on_corrupted(data, spec, cfg, cfg.opt.epochs)?,
        corruption: spec.clone(),
        clip: CLIP_FLOOR,
    })
}

/// `wᵢ = p̂(yᵢ) / p̂(yᵢ | T(xᵢ, δᵢ))` with the empirical label marginal
/// and δ from stream 0.
pub fn nurd_weights(data: &Dataset, b: &BiasedModel) -> Result<Vec<f64>> {
    let marginal = data.label_marginal();
    data.examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| Ok(marginal[e.label] / b.proba(&e.x, i as u64, 0)?[e.label]))
        .collect()
}

/// Plain ERM on the uncorrupted covariates.
pub fn run_erm(data: &Dataset, cfg: &ModelConfig) -> Result<LinearModel> {
    run_weighted(data, cfg, None)
}

fn run_weighted(data: &Dataset, cfg: &ModelConfig, weights: Option<&[f64]>) -> Result<LinearModel> {
    check_data(data)?;
    let init = cfg.init(&data.examples[0].x, data.num_classes)?;
    let x = clean_features(data, &cfg.features)?;
    Ok(train(&init, &x, &data.labels(), weights, &cfg.opt)?.0)
}

/// Reweighting-NuRD: importance-weighted ERM with weights from a biased
/// model on `T(x)`.
pub fn run_nurd(data: &Dataset, spec: &CorruptionSpec, cfg: &ScamConfig) -> Result<LinearModel> {
    let b = build_biased_model(data, spec, &cfg.biased)?;
    let w = nurd_weights(data, &b)?;
    run_weighted(data, &cfg.main, Some(&w))
}

/// Indices the identification model (trained `id_epochs` on `T(x)`)
/// misclassifies on `T(x, δ)` from stream 0.
pub fn jtt_error_set(
    data: &Dataset,
    spec: &CorruptionSpec,
    id_epochs: usize,
    cfg: &ModelConfig,
) -> Result<Vec<usize>> {
    if id_epochs == 0 {
        return Err(Error::InvalidParameter("id_epochs must be >= 1".into()));
    }
    let m = fit_on_corrupted(data, spec, cfg, id_epochs)?;
    let x = corrupted_features(data, spec, &cfg.features, 0)?;
    let mut out = Vec::new();
    for (i, (f, e)) in x.iter().zip(&data.examples).enumerate() {
        if m.predict_features(f)? != e.label {
            out.push(i);
        }
    }
    Ok(out)
}

/// The training set followed by `λ_up − 1` extra copies of each error-set
/// example.
pub fn upsample(data: &Dataset, errors: &[usize], lambda_up: usize) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for _ in 1..lambda_up {
        idx.extend_from_slice(errors);
    }
    data.subset(&idx)
}

/// Just-train-twice with a corruption-powered identification model.
pub fn run_jtt(
    data: &Dataset,
    spec: &CorruptionSpec,
    lambda_up: usize,
    id_epochs: usize,
    cfg: &ScamConfig,
) -> Result<LinearModel> {
    if lambda_up < 1 {
        return Err(Error::InvalidParameter("lambda_up must be >= 1".into()));
    }
    let errors = jtt_error_set(data, spec, id_epochs, &cfg.biased)?;
    run_erm(&upsample(data, &errors, lambda_up), &cfg.main)
}

/// Joint product-of-experts training; returns the biased and main models.
pub fn run_poe(
    data: &Dataset,
    spec: &CorruptionSpec,
    objective: PoeVariant,
    cfg: &ScamConfig,
) -> Result<(BiasedModel, LinearModel)> {
    check_data(data)?;
    let b0 = cfg
        .biased
        .init(&apply_stream(spec, &data.examples[0].x, 0, 0)?, data.num_classes)?;
    run_poe_from(data, spec, objective, cfg, &b0)
}

/// [`run_poe`] from a given initial biased model (a zero model is the
/// uniform predictor).
pub fn run_poe_from(
    data: &Dataset,
    spec: &CorruptionSpec,
    objective: PoeVariant,
    cfg: &ScamConfig,
    biased_init: &LinearModel,
) -> Result<(BiasedModel, LinearModel)> {
    check_data(data)?;
    let m0 = cfg.main.init(&data.examples[0].x, data.num_classes)?;
    let x = clean_features(data, &cfg.main.features)?;
    let y = data.labels();
    let (b, m, _) = if spec.kind.is_random() {
        let mut per_epoch =
            |e: usize| corrupted_features(data, spec, &cfg.biased.features, e as u64);
        train_poe(biased_init, &m0, Inputs::PerEpoch(&mut per_epoch), &x, &y, objective, &cfg.main.opt)?
    } else {
        let t = corrupted_features(data, spec, &cfg.biased.features, 0)?;
        train_poe(biased_init, &m0, Inputs::Fixed(&t), &x, &y, objective, &cfg.main.opt)?
    };
    Ok((
        BiasedModel {
            model: b,
            corruption: spec.clone(),
            clip: CLIP_FLOOR,
        },
        m,
    ))
}

/// Debiased focal loss: the main model's cross-entropy weighted by
/// `(1 − p_biased(y | T(x)))^γ` from a biased model fitted first.
pub fn run_dfl(
    data: &Dataset,
    spec: &CorruptionSpec,
    gamma: f64,
    cfg: &ScamConfig,
) -> Result<LinearModel> {
    let b = build_biased_model(data, spec, &cfg.biased)?;
    let t = corrupted_features(data, spec, &cfg.biased.features, 0)?;
    let w = dfl_weights(&b.model, &Batch::new(&t, &data.labels()), gamma)?;
    run_weighted(data, &cfg.main, Some(&w))
}

/// Runs `cfg.variant` with `spec` and returns the predictive model.
pub fn run_scam(data: &Dataset, spec: &CorruptionSpec, cfg: &ScamConfig) -> Result<LinearModel> {
    cfg.variant.validate()?;
    match &cfg.variant {
        ScamVariant::Erm => run_erm(data, &cfg.main),
        ScamVariant::Nurd => run_nurd(data, spec, cfg),
        ScamVariant::Jtt { lambda_up, id_epochs } => {
            run_jtt(data, spec, *lambda_up, *id_epochs, cfg)
        }
        ScamVariant::Poe { objective } => Ok(run_poe(data, spec, *objective, cfg)?.1),
        ScamVariant::Dfl { gamma } => run_dfl(data, spec, *gamma, cfg),
    }
}

/// Accuracy overall and per group (groups with no examples are `None`).
pub fn group_accuracies(m: &LinearModel, data: &Dataset) -> Result<(f64, Vec<Option<f64>>)> {
    check_data(data)?;
    let x = clean_features(data, &m.spec)?;
    let y = data.labels();
    let avg = accuracy(m, &x, &y)?;
    let mut hits = vec![0usize; data.num_groups()];
    let mut counts = vec![0usize; data.num_groups()];
    for (f, e) in x.iter().zip(&data.examples) {
        if let Some(g) = e.group {
            counts[g] += 1;
            hits[g] += (m.predict_features(f)? == e.label) as usize;
        }
    }
    let groups = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    Ok((avg, groups))
}

/// Score of `m` on `val` under `scheme`.
pub fn validation_score(m: &LinearModel, val: &Dataset, scheme: ValScheme) -> Result<f64> {
    let (avg, groups) = group_accuracies(m, val)?;
    match scheme {
        ValScheme::Average => Ok(avg),
        ValScheme::WorstGroup => groups
            .into_iter()
            .flatten()
            .reduce(f64::min)
            .ok_or_else(|| Error::InvalidParameter("validation set has no group annotations".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: CorruptionSpec,
    /// Validation score per evaluated candidate, in evaluation order.
    pub scores: Vec<(CorruptionSpec, f64)>,
}

/// Picks the corruption whose SCAM run scores best on `val`.
///
/// A single candidate is returned as-is. Otherwise the identity
/// corruption is appended when absent, every candidate is run, and ties go
/// to the earlier candidate.
pub fn select_corruption(
    candidates: &[CorruptionSpec],
    train_data: &Dataset,
    val: &Dataset,
    scheme: ValScheme,
    cfg: &ScamConfig,
) -> Result<Selection> {
    match candidates {
        [] => Err(Error::InvalidParameter("no candidate corruptions".into())),
        [only] => Ok(Selection {
            chosen: only.clone(),
            scores: Vec::new(),
        }),
        _ => {
            let mut all = candidates.to_vec();
            if !all.iter().any(|c| c.kind == crate::corruptions::CorruptionKind::Identity) {
                all.push(CorruptionSpec::identity());
            }
            let scores = all
                .par_iter()
                .map(|c| {
                    let m = run_scam(train_data, c, cfg)?;
                    Ok((c.clone(), validation_score(&m, val, scheme)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if s.1 > scores[best].1 {
                    best = i;
                }
            }
            Ok(Selection {
                chosen: scores[best].0.clone(),
                scores,
            })
        }
    }
}

/// Exact-posterior NuRD weights `p(y) / p(y | c)` for examples with a
/// known conditioning index, used to bridge sampled data and exact tables.
pub fn exact_weights(labels: &[usize], cond: &[usize], marginal: &[f64], posterior: &[Vec<f64>]) -> Vec<f64> {
    labels
        .iter()
        .zip(cond)
        .map(|(&y, &c)| marginal[y] / posterior[c][y])
        .collect()
}

/// Predicted class probabilities of `m` on the given features.
pub fn predict_all(m: &LinearModel, x: &[Features]) -> Result<Vec<Vec<f64>>> {
    x.iter().map(|f| Ok(softmax(&m.logits_features(f)?))).collect()
}
