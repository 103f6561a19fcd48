//! Sampled desk-scale tasks with a controllable nuisance–label relationship.

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Provenance};
use crate::covariate::{Covariate, Grid, SentencePair, TokenSeq};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Token id marking a negated hypothesis (the NLI nuisance).
pub const NEG_TOKEN: u32 = 1;
const FIRST_ENTITY: u32 = 2;

fn check_task_params(rho: f64, n: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho {rho} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    Ok(())
}

/// Image task layout.
///
/// The label picks one of two glyphs built from the same four
/// `quadrant×quadrant` patches (two bright, two dark), arranged on the
/// diagonal for class 0 and on the anti-diagonal for class 1, centered in a
/// `size×size` single-channel image. The glyph drawn agrees with the label
/// with probability `semantic_fidelity`. The nuisance sets the background
/// texture: a one-pixel checkerboard (z = 0) or one-pixel vertical stripes
/// (z = 1), both alternating `texture_low`/`texture_high`. Gaussian pixel
/// noise of standard deviation `pixel_noise` is added and clamped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTaskConfig {
    pub size: usize,
    pub quadrant: usize,
    pub semantic_fidelity: f64,
    pub texture_low: f32,
    pub texture_high: f32,
    pub pixel_noise: f64,
}

impl Default for ImageTaskConfig {
    fn default() -> Self {
        Self {
            size: 32,
            quadrant: 4,
            semantic_fidelity: 0.8,
            texture_low: 0.05,
            texture_high: 0.25,
            pixel_noise: 0.03,
        }
    }
}

impl ImageTaskConfig {
    pub fn glyph_size(&self) -> usize {
        2 * self.quadrant
    }

    pub fn glyph_origin(&self) -> usize {
        (self.size - self.glyph_size()) / 2
    }

    fn validate(&self) -> Result<()> {
        if self.quadrant == 0 || self.glyph_size() > self.size {
            return Err(Error::InvalidParameter("glyph does not fit the image".into()));
        }
        if !(0.0..=1.0).contains(&self.semantic_fidelity) {
            return Err(Error::InvalidParameter("semantic_fidelity outside [0, 1]".into()));
        }
        if !(self.pixel_noise >= 0.0) {
            return Err(Error::InvalidParameter("pixel_noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Noise-free image for glyph class `glyph` and nuisance `z`.
    pub fn render(&self, glyph: usize, z: usize) -> Vec<f32> {
        let (s, q, g0) = (self.size, self.quadrant, self.glyph_origin());
        let mut v = vec![0f32; s * s];
        for r in 0..s {
            for c in 0..s {
                let in_glyph = (g0..g0 + 2 * q).contains(&r) && (g0..g0 + 2 * q).contains(&c);
                v[r * s + c] = if in_glyph {
                    let diagonal = (r - g0) / q == (c - g0) / q;
                    if diagonal == (glyph == 0) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let low = if z == 0 { (r + c) % 2 == 0 } else { c % 2 == 0 };
                    if low {
                        self.texture_low
                    } else {
                        self.texture_high
                    }
                };
            }
        }
        v
    }
}

/// Image task with the default layout.
pub fn synthetic_image_task(rho: f64, n: usize, seed: u64, flip: bool) -> Result<Dataset> {
    synthetic_image_task_with(&ImageTaskConfig::default(), rho, n, seed, flip)
}

/// `n` labeled images with `p(z = y) = rho` (or `1 − rho` when `flip`).
///
/// Example `i` draws from `SplitMix64::new(derive_seed(seed, i, 0))`, in
/// order: label, nuisance, glyph, then one normal per pixel.
pub fn synthetic_image_task_with(
    cfg: &ImageTaskConfig,
    rho: f64,
    n: usize,
    seed: u64,
    flip: bool,
) -> Result<Dataset> {
    check_task_params(rho, n)?;
    cfg.validate()?;
    let p_same = if flip { 1.0 - rho } else { rho };
    let examples = (0..n)
        .map(|i| {
            let mut rng = SplitMix64::new(derive_seed(seed, i as u64, 0));
            let y = rng.below(2) as usize;
            let z = if rng.bernoulli(p_same) { y } else { 1 - y };
            let glyph = if rng.bernoulli(cfg.semantic_fidelity) { y } else { 1 - y };
            let mut v = cfg.render(glyph, z);
            if cfg.pixel_noise > 0.0 {
                for p in v.iter_mut() {
                    *p = (*p as f64 + cfg.pixel_noise * rng.standard_normal()).clamp(0.0, 1.0) as f32;
                }
            }
            Example {
                x: Covariate::Grid(Grid::from_raw(cfg.size, cfg.size, 1, v)),
                label: y,
                nuisance: Some(z),
                group: Some(2 * y + z),
            }
        })
        .collect();
    Dataset::new(
        examples,
        2,
        2,
        Provenance {
            family: "image".into(),
            rho,
            seed,
            flip,
        },
    )
}

/// NLI task layout.
///
/// Token ids: 0 is the mask token, 1 the negation token, then
/// `num_entities` entity tokens, then `num_fillers` filler tokens. A premise
/// is `premise_len` fillers with two distinct entities written into it; the
/// hypothesis names the two entities in increasing id order. The label is 1
/// when the premise mentions them in that order. With probability
/// `separated_prob` the entities are at least two positions apart, otherwise
/// adjacent. The nuisance is whether the hypothesis starts with the
/// negation token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliTaskConfig {
    pub num_entities: u32,
    pub num_fillers: u32,
    pub premise_len: usize,
    pub separated_prob: f64,
}

impl Default for NliTaskConfig {
    fn default() -> Self {
        Self {
            num_entities: 8,
            num_fillers: 24,
            premise_len: 8,
            separated_prob: 0.4,
        }
    }
}

impl NliTaskConfig {
    /// One past the largest token id.
    pub fn vocab_size(&self) -> usize {
        (FIRST_ENTITY + self.num_entities + self.num_fillers) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.num_entities < 2 || self.num_fillers < 1 || self.premise_len < 3 {
            return Err(Error::InvalidParameter(
                "need >= 2 entities, >= 1 filler and premises of length >= 3".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.separated_prob) {
            return Err(Error::InvalidParameter("separated_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Whether `needle` occurs in `haystack` in order (not necessarily contiguously).
pub fn is_ordered_subsequence(needle: &[u32], haystack: &[u32]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|t| it.any(|h| h == t))
}

/// 1 when the hypothesis, ignoring negation tokens, is an ordered
/// subsequence of the premise.
pub fn nli_label(pair: &SentencePair) -> usize {
    let content: Vec<u32> = pair
        .hypothesis
        .tokens()
        .iter()
        .copied()
        .filter(|&t| t != NEG_TOKEN)
        .collect();
    is_ordered_subsequence(&content, pair.premise.tokens()) as usize
}

/// NLI task with the default layout.
pub fn synthetic_nli_task(rho: f64, n: usize, seed: u64, flip: bool) -> Result<Dataset> {
    synthetic_nli_task_with(&NliTaskConfig::default(), rho, n, seed, flip)
}

/// `n` sentence pairs where the negation token is present exactly when the
/// label is 0 with probability `rho` (`1 − rho` when `flip`).
pub fn synthetic_nli_task_with(
    cfg: &NliTaskConfig,
    rho: f64,
    n: usize,
    seed: u64,
    flip: bool,
) -> Result<Dataset> {
    check_task_params(rho, n)?;
    cfg.validate()?;
    let p_conventional = if flip { 1.0 - rho } else { rho };
    let first_filler = FIRST_ENTITY + cfg.num_entities;
    let len = cfg.premise_len;
    let examples = (0..n)
        .map(|i| {
            let mut rng = SplitMix64::new(derive_seed(seed, i as u64, 0));
            let y = rng.below(2) as usize;
            // z = 1 means the negation token is present
            let z = if rng.bernoulli(p_conventional) { 1 - y } else { y };
            let k = cfg.num_entities as u64;
            let a = rng.below(k);
            let mut b = rng.below(k - 1);
            if b >= a {
                b += 1;
            }
            let (lo, hi) = (
                FIRST_ENTITY + a.min(b) as u32,
                FIRST_ENTITY + a.max(b) as u32,
            );
            let mut premise: Vec<u32> = (0..len)
                .map(|_| first_filler + rng.below(cfg.num_fillers as u64) as u32)
                .collect();
            let (p1, p2) = if rng.bernoulli(cfg.separated_prob) {
                let p1 = rng.below(len as u64 - 2) as usize;
                (p1, p1 + 2 + rng.below((len - p1 - 2) as u64) as usize)
            } else {
                let p1 = rng.below(len as u64 - 1) as usize;
                (p1, p1 + 1)
            };
            let (first, second) = if y == 1 { (lo, hi) } else { (hi, lo) };
            premise[p1] = first;
            premise[p2] = second;
            let mut hypothesis = Vec::with_capacity(3);
            if z == 1 {
                hypothesis.push(NEG_TOKEN);
            }
            hypothesis.extend([lo, hi]);
            Example {
                x: Covariate::Pair(SentencePair {
                    premise: TokenSeq::new(premise),
                    hypothesis: TokenSeq::new(hypothesis),
                }),
                label: y,
                nuisance: Some(z),
                group: Some(2 * y + z),
            }
        })
        .collect();
    Dataset::new(
        examples,
        2,
        2,
        Provenance {
            family: "nli".into(),
            rho,
            seed,
            flip,
        },
    )
}
