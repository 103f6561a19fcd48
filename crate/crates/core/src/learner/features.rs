use serde::{Deserialize, Serialize};

use crate::covariate::{Covariate, TokenSeq};
use crate::error::{Error, Result};

/// Which sentences of a pair a bag of n-grams counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Premise counts in `[0, vocab)`, hypothesis counts in `[vocab, 2·vocab)`.
    Concat,
    HypothesisOnly,
}

/// Fixed featurizers standing in for learned encoders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Pixel values in storage order.
    FlattenGrid,
    /// n-gram counts. Unigrams index by token id; longer n-grams index by
    /// [`ngram_hash`] modulo `vocab`.
    BagOfNgrams { n: usize, vocab: usize, pair_mode: PairMode },
    /// Raw coordinates, optionally followed by their absolute values and by
    /// the pairwise products `x_i x_j` for `i < j`.
    Vector { abs: bool, products: bool },
    /// Concatenation of several featurizers.
    Stack { parts: Vec<FeatureSpec> },
}

/// A sparse feature vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Features {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl Features {
    fn push(&mut self, i: usize, v: f64) {
        self.idx.push(i as u32);
        self.val.push(v);
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i as usize] += v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

/// 64-bit FNV-1a over the little-endian bytes of the token ids.
pub fn ngram_hash(tokens: &[u32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tokens {
        for b in t.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn count_ngrams(seq: &TokenSeq, n: usize, vocab: usize, offset: usize, out: &mut Features) -> Result<()> {
    let toks = seq.tokens();
    if toks.len() < n {
        return Ok(());
    }
    let mut counts: Vec<(usize, f64)> = Vec::new();
    for w in toks.windows(n) {
        let i = if n == 1 {
            let t = w[0] as usize;
            if t >= vocab {
                return Err(Error::InvalidParameter(format!(
                    "token {t} outside unigram vocabulary of {vocab}"
                )));
            }
            t
        } else {
            (ngram_hash(w) % vocab as u64) as usize
        };
        match counts.iter_mut().find(|(j, _)| *j == i) {
            Some(c) => c.1 += 1.0,
            None => counts.push((i, 1.0)),
        }
    }
    counts.sort_by_key(|c| c.0);
    for (i, c) in counts {
        out.push(offset + i, c);
    }
    Ok(())
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureSpec::BagOfNgrams { n, vocab, .. } if *n == 0 || *vocab == 0 => Err(
                Error::InvalidParameter("bag of n-grams needs n >= 1 and vocab >= 1".into()),
            ),
            FeatureSpec::Stack { parts } => parts.iter().try_for_each(FeatureSpec::validate),
            _ => Ok(()),
        }
    }

    /// Output dimension for covariates shaped like `x`.
    pub fn dim(&self, x: &Covariate) -> Result<usize> {
        match (self, x) {
            (FeatureSpec::FlattenGrid, Covariate::Grid(g)) => Ok(g.values().len()),
            (FeatureSpec::BagOfNgrams { vocab, pair_mode, .. }, Covariate::Pair(_)) => {
                Ok(match pair_mode {
                    PairMode::Concat => 2 * vocab,
                    PairMode::HypothesisOnly => *vocab,
                })
            }
            (FeatureSpec::Vector { abs, products }, Covariate::Vector(v)) => {
                let d = v.len();
                Ok(d + if *abs { d } else { 0 } + if *products { d * (d.saturating_sub(1)) / 2 } else { 0 })
            }
            (FeatureSpec::Stack { parts }, _) => parts.iter().map(|p| p.dim(x)).sum(),
            _ => Err(self.mismatch(x)),
        }
    }

    fn mismatch(&self, x: &Covariate) -> Error {
        Error::Dispatch(format!("feature spec {self:?} cannot featurize a {}", x.kind_name()))
    }

    fn write(&self, x: &Covariate, offset: usize, out: &mut Features) -> Result<usize> {
        match (self, x) {
            (FeatureSpec::FlattenGrid, Covariate::Grid(g)) => {
                for (i, &v) in g.values().iter().enumerate() {
                    if v != 0.0 {
                        out.push(offset + i, v as f64);
                    }
                }
                Ok(g.values().len())
            }
            (FeatureSpec::BagOfNgrams { n, vocab, pair_mode }, Covariate::Pair(p)) => {
                match pair_mode {
                    PairMode::Concat => {
                        count_ngrams(&p.premise, *n, *vocab, offset, out)?;
                        count_ngrams(&p.hypothesis, *n, *vocab, offset + vocab, out)?;
                        Ok(2 * vocab)
                    }
                    PairMode::HypothesisOnly => {
                        count_ngrams(&p.hypothesis, *n, *vocab, offset, out)?;
                        Ok(*vocab)
                    }
                }
            }
            (FeatureSpec::Vector { abs, products }, Covariate::Vector(v)) => {
                let mut k = offset;
                let mut put = |val: f64| {
                    out.push(k, val);
                    k += 1;
                };
                v.iter().for_each(|&a| put(a as f64));
                if *abs {
                    v.iter().for_each(|&a| put((a as f64).abs()));
                }
                if *products {
                    for i in 0..v.len() {
                        for j in i + 1..v.len() {
                            put(v[i] as f64 * v[j] as f64);
                        }
                    }
                }
                Ok(k - offset)
            }
            (FeatureSpec::Stack { parts }, _) => {
                let mut k = offset;
                for p in parts {
                    k += p.write(x, k, out)?;
                }
                Ok(k - offset)
            }
            _ => Err(self.mismatch(x)),
        }
    }
}

/// Featurizes one covariate.
pub fn featurize(spec: &FeatureSpec, x: &Covariate) -> Result<Features> {
    let mut out = Features::default();
    spec.write(x, 0, &mut out)?;
    Ok(out)
}

/// Featurizes many covariates.
pub fn featurize_all(spec: &FeatureSpec, xs: &[Covariate]) -> Result<Vec<Features>> {
    xs.iter().map(|x| featurize(spec, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariate::{Grid, SentencePair};

    #[test]
    fn flatten() {
        let g = Grid::new(2, 2, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let f = featurize(&FeatureSpec::FlattenGrid, &g.into()).unwrap();
        assert_eq!(f.to_dense(4), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bigram_and_concat() {
        let spec = FeatureSpec::BagOfNgrams { n: 2, vocab: 1000, pair_mode: PairMode::HypothesisOnly };
        let x: Covariate = SentencePair::new(vec![5], vec![1, 2, 3]).into();
        let f = featurize(&spec, &x).unwrap().to_dense(1000);
        assert_eq!(f.iter().sum::<f64>(), 2.0);
        assert_eq!(f[(ngram_hash(&[1, 2]) % 1000) as usize], 1.0);
        assert_eq!(f[(ngram_hash(&[2, 3]) % 1000) as usize], 1.0);

        let spec = FeatureSpec::BagOfNgrams { n: 1, vocab: 10, pair_mode: PairMode::Concat };
        let f = featurize(&spec, &x).unwrap().to_dense(20);
        assert_eq!(f[5], 1.0);
        assert_eq!(f[11] + f[12] + f[13], 3.0);
        let big: Covariate = SentencePair::new(vec![10], vec![1]).into();
        assert!(featurize(&spec, &big).is_err());
    }

    #[test]
    fn fnv_reference() {
        // FNV-1a of the empty input is the offset basis
        assert_eq!(ngram_hash(&[]), 0xcbf29ce484222325);
        // bytes 01 00 00 00
        let mut h: u64 = 0xcbf29ce484222325;
        for b in [1u8, 0, 0, 0] {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
        assert_eq!(ngram_hash(&[1]), h);
    }

    #[test]
    fn vector_basis_and_stack() {
        let x = Covariate::Vector(vec![2.0, -3.0, 0.5]);
        let spec = FeatureSpec::Vector { abs: true, products: true };
        assert_eq!(spec.dim(&x).unwrap(), 9);
        let f = featurize(&spec, &x).unwrap().to_dense(9);
        assert_eq!(f, vec![2.0, -3.0, 0.5, 2.0, 3.0, 0.5, -6.0, 1.0, -1.5]);
        let stack = FeatureSpec::Stack {
            parts: vec![spec.clone(), FeatureSpec::Vector { abs: false, products: false }],
        };
        assert_eq!(stack.dim(&x).unwrap(), 12);
        assert_eq!(featurize(&stack, &x).unwrap().to_dense(12)[9..], [2.0, -3.0, 0.5]);
        assert!(featurize(&FeatureSpec::FlattenGrid, &x).is_err());
    }
}
