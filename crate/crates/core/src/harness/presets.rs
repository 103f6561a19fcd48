//! Model and experiment settings tuned for the synthetic tasks.

use crate::corruptions::CorruptionKind;
use crate::covariate::Covariate;
use crate::error::{Error, Result};
use crate::families::{Dataset, NliTaskConfig};
use crate::learner::{FeatureSpec, OptConfig, PairMode, PoeVariant};
use crate::scams::{ModelConfig, ScamVariant};

use super::experiment::{ExperimentConfig, TaskConfig, TaskFamily};

/// Hashed bigram buckets used alongside unigram counts for sentence pairs.
pub const BIGRAM_BUCKETS: usize = 4096;

pub fn image_model() -> ModelConfig {
    ModelConfig::linear(
        FeatureSpec::FlattenGrid,
        OptConfig { learning_rate: 0.01, epochs: 20, batch_size: 32, weight_decay: 1e-4, seed: 0 },
    )
}

pub fn nli_features(vocab: usize) -> FeatureSpec {
    FeatureSpec::Stack {
        parts: vec![
            FeatureSpec::BagOfNgrams { n: 1, vocab, pair_mode: PairMode::Concat },
            FeatureSpec::BagOfNgrams { n: 2, vocab: BIGRAM_BUCKETS, pair_mode: PairMode::Concat },
        ],
    }
}

pub fn nli_model() -> ModelConfig {
    ModelConfig::linear(
        nli_features(NliTaskConfig::default().vocab_size()),
        OptConfig { learning_rate: 0.1, epochs: 20, batch_size: 32, weight_decay: 1e-4, seed: 0 },
    )
}

/// A model suited to the covariate kind of `data`. Sentence-pair unigram
/// vocabularies cover the largest token id present.
pub fn default_model(data: &Dataset) -> Result<ModelConfig> {
    let first = data
        .examples
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty dataset".into()))?;
    Ok(match &first.x {
        Covariate::Grid(_) => image_model(),
        Covariate::Pair(_) => {
            let max_token = data
                .examples
                .iter()
                .filter_map(|e| match &e.x {
                    Covariate::Pair(p) => {
                        p.premise.tokens().iter().chain(p.hypothesis.tokens()).max().copied()
                    }
                    _ => None,
                })
                .max()
                .unwrap_or(0) as usize;
            let vocab = (max_token + 1).max(NliTaskConfig::default().vocab_size());
            ModelConfig { features: nli_features(vocab), ..nli_model() }
        }
        Covariate::Vector(_) => ModelConfig::linear(
            FeatureSpec::Vector { abs: true, products: true },
            OptConfig { learning_rate: 0.01, epochs: 30, ..OptConfig::default() },
        ),
    })
}

fn task(family: TaskFamily) -> TaskConfig {
    TaskConfig {
        family,
        rho_train: 0.9,
        rho_test: 0.9,
        flip_test: true,
        n_train: 2000,
        n_val: 500,
        n_test: 2000,
        image: Default::default(),
        nli: Default::default(),
    }
}

/// ERM and reweighting-NuRD on the image task under every image corruption
/// at its tuned parameter.
pub fn image_nurd_benchmark(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        task: task(TaskFamily::Image),
        seeds,
        base_seed: 0,
        methods: vec![ScamVariant::Erm, ScamVariant::Nurd],
        corruptions: vec![
            CorruptionKind::PatchRandomize { patch: 4 },
            CorruptionKind::RoiMask { size: 8 },
            CorruptionKind::FreqFilter { cutoff: 28 },
            CorruptionKind::IntensityFilter { threshold: 0.5 },
        ],
        biased: image_model(),
        main: image_model(),
        select: false,
        output_dir: None,
    }
}

/// JTT on the image task with patch randomization and with the identity.
pub fn image_jtt_benchmark(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![ScamVariant::Jtt { lambda_up: 5, id_epochs: 1 }],
        corruptions: vec![CorruptionKind::PatchRandomize { patch: 4 }, CorruptionKind::Identity],
        ..image_nurd_benchmark(seeds)
    }
}

/// ERM, PoE, DFL and JTT on the NLI task with 1-gram randomization.
pub fn nli_benchmark(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        task: task(TaskFamily::Nli),
        seeds,
        base_seed: 0,
        methods: vec![
            ScamVariant::Erm,
            ScamVariant::Poe { objective: PoeVariant::Renormalized },
            ScamVariant::Dfl { gamma: 1.0 },
            ScamVariant::Jtt { lambda_up: 5, id_epochs: 1 },
        ],
        corruptions: vec![CorruptionKind::NgramRandomize { n: 1 }],
        biased: nli_model(),
        main: nli_model(),
        select: false,
        output_dir: None,
    }
}
