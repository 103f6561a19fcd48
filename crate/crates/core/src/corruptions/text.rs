//! Token-sequence corruptions: n-gram randomization and premise masking.

use crate::covariate::{SentencePair, TokenSeq, MASK_TOKEN};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Splits `s` into consecutive `n`-token blocks (the last one may be
/// shorter) and reorders the blocks by [`SplitMix64::permutation`] seeded
/// with `seed`: output block `p` is input block `perm[p]`.
///
/// The permutation covers the remainder block too, so it lands in each slot
/// with equal probability rather than always trailing. An empty sequence is
/// returned unchanged.
pub fn ngram_randomize(s: &TokenSeq, n: usize, seed: u64) -> Result<TokenSeq> {
    if n == 0 {
        return Err(Error::InvalidParameter("n-gram size must be >= 1".into()));
    }
    if s.is_empty() {
        return Ok(s.clone());
    }
    let blocks: Vec<&[u32]> = s.tokens().chunks(n).collect();
    let perm = SplitMix64::new(seed).permutation(blocks.len());
    let out = perm.iter().flat_map(|&b| blocks[b].iter().copied()).collect();
    Ok(TokenSeq::new(out))
}

/// Replaces every premise token with [`MASK_TOKEN`]; the hypothesis is untouched.
pub fn premise_mask(p: &SentencePair) -> SentencePair {
    SentencePair {
        premise: TokenSeq::new(vec![MASK_TOKEN; p.premise.len()]),
        hypothesis: p.hypothesis.clone(),
    }
}
