//! Covariate types: image-like grids, token sequences, sentence pairs, and
//! small real vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token id reserved for masked positions.
pub const MASK_TOKEN: u32 = 0;

/// H×W×C image with values in `[0, 1]`, stored row-major with channels
/// innermost: `values[(r * width + c) * channels + ch]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Caller guarantees the shape and range invariants.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), height * width * channels);
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            height,
            width,
            channels,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.values[self.index(row, col, ch)]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self(tokens)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub premise: TokenSeq,
    pub hypothesis: TokenSeq,
}

impl SentencePair {
    pub fn new(premise: impl Into<TokenSeq>, hypothesis: impl Into<TokenSeq>) -> Self {
        Self {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
        }
    }
}

/// Anything a corruption or featurizer can consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Covariate {
    Grid(Grid),
    Pair(SentencePair),
    /// Low-dimensional real vector, used for samples of the discrete families.
    Vector(Vec<f32>),
}

impl Covariate {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Covariate::Grid(_) => "grid",
            Covariate::Pair(_) => "sentence pair",
            Covariate::Vector(_) => "vector",
        }
    }
}

impl From<Grid> for Covariate {
    fn from(g: Grid) -> Self {
        Covariate::Grid(g)
    }
}

impl From<SentencePair> for Covariate {
    fn from(p: SentencePair) -> Self {
        Covariate::Pair(p)
    }
}
