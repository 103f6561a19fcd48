//! Semantic corruptions and baseline augmentations, with seed-deterministic
//! dispatch over covariate kinds.

mod image;
mod text;

pub use image::{
    freq_filter, frequency_removed, gauss_noise, high_pass, intensity_filter, patch_randomize,
    rand_crop, roi_mask,
};
pub use text::{ngram_randomize, premise_mask};

use serde::{Deserialize, Serialize};

use crate::covariate::{Covariate, SentencePair};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    Identity,
    PatchRandomize { patch: usize },
    RoiMask { size: usize },
    FreqFilter { cutoff: usize },
    IntensityFilter { threshold: f64 },
    RandCrop { min_frac: f64 },
    GaussNoise { variance: f64 },
    NgramRandomize { n: usize },
    PremiseMask,
    /// Zero the listed coordinates of a vector covariate.
    MaskCoordinates { coords: Vec<usize> },
    /// Uniformly permute the coordinates of a vector covariate.
    PermuteCoordinates,
}

impl CorruptionKind {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            CorruptionKind::PatchRandomize { patch } if patch < 1 => bad("patch must be >= 1".into()),
            CorruptionKind::IntensityFilter { threshold } if !(0.0..=1.0).contains(&threshold) => {
                bad(format!("threshold {threshold} outside [0, 1]"))
            }
            CorruptionKind::RandCrop { min_frac } if !(min_frac > 0.0 && min_frac <= 1.0) => {
                bad(format!("min_frac {min_frac} outside (0, 1]"))
            }
            CorruptionKind::GaussNoise { variance } if !(variance >= 0.0 && variance.is_finite()) => {
                bad(format!("variance {variance} must be >= 0"))
            }
            CorruptionKind::NgramRandomize { n } if n < 1 => bad("n must be >= 1".into()),
            _ => Ok(()),
        }
    }

    /// Whether the output depends on the randomness draw.
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            CorruptionKind::PatchRandomize { .. }
                | CorruptionKind::RandCrop { .. }
                | CorruptionKind::GaussNoise { .. }
                | CorruptionKind::NgramRandomize { .. }
                | CorruptionKind::PermuteCoordinates
        )
    }

    /// Short identifier used in reports, e.g. `pr-4`, `if-0.3`.
    pub fn id(&self) -> String {
        match self {
            CorruptionKind::Identity => "identity".into(),
            CorruptionKind::PatchRandomize { patch } => format!("pr-{patch}"),
            CorruptionKind::RoiMask { size } => format!("rm-{size}"),
            CorruptionKind::FreqFilter { cutoff } => format!("ff-{cutoff}"),
            CorruptionKind::IntensityFilter { threshold } => format!("if-{threshold}"),
            CorruptionKind::RandCrop { min_frac } => format!("rand-crop-{min_frac}"),
            CorruptionKind::GaussNoise { variance } => format!("gauss-noise-{variance}"),
            CorruptionKind::NgramRandomize { n } => format!("nr-{n}"),
            CorruptionKind::PremiseMask => "pm".into(),
            CorruptionKind::MaskCoordinates { coords } => {
                let c: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
                format!("mask-{}", c.join("_"))
            }
            CorruptionKind::PermuteCoordinates => "permute".into(),
        }
    }

    /// Parses the identifiers produced by [`Self::id`] (the CLI spelling).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized corruption '{s}'"));
        let (name, arg) = match s.rsplit_once('-') {
            Some((n, a)) if a.parse::<f64>().is_ok() => (n, Some(a)),
            _ => (s, None),
        };
        let int = || -> Result<usize> { arg.ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let float = || -> Result<f64> { arg.ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let kind = match name {
            "identity" => CorruptionKind::Identity,
            "pr" => CorruptionKind::PatchRandomize { patch: int()? },
            "rm" => CorruptionKind::RoiMask { size: int()? },
            "ff" => CorruptionKind::FreqFilter { cutoff: int()? },
            "if" => CorruptionKind::IntensityFilter { threshold: float()? },
            "rand-crop" => CorruptionKind::RandCrop { min_frac: float()? },
            "gauss-noise" => CorruptionKind::GaussNoise { variance: float()? },
            "nr" => CorruptionKind::NgramRandomize { n: int()? },
            "pm" => CorruptionKind::PremiseMask,
            "permute" => CorruptionKind::PermuteCoordinates,
            _ if s.starts_with("mask-") => CorruptionKind::MaskCoordinates {
                coords: s["mask-".len()..]
                    .split('_')
                    .map(|c| c.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            },
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A corruption together with the global seed its per-example randomness is
/// derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, seed })
    }

    pub fn identity() -> Self {
        Self {
            kind: CorruptionKind::Identity,
            seed: 0,
        }
    }

    pub fn id(&self) -> String {
        self.kind.id()
    }

    /// Seed used for example `index` on draw `stream`.
    pub fn example_seed(&self, index: u64, stream: u64) -> u64 {
        derive_seed(self.seed, index, stream)
    }
}

/// Applies `spec` to example `example_index` using randomness stream 0.
pub fn apply(spec: &CorruptionSpec, x: &Covariate, example_index: u64) -> Result<Covariate> {
    apply_stream(spec, x, example_index, 0)
}

/// Applies `spec` with the per-example seed `derive_seed(spec.seed, example_index, stream)`.
///
/// Distinct streams give independent redraws of the corruption randomness
/// for the same example (used to resample δ across training epochs). For a
/// sentence pair, n-gram randomization shuffles the premise with
/// `derive_seed(s, 0, 0)` and the hypothesis with `derive_seed(s, 1, 0)`,
/// where `s` is the example seed.
pub fn apply_stream(
    spec: &CorruptionSpec,
    x: &Covariate,
    example_index: u64,
    stream: u64,
) -> Result<Covariate> {
    let seed = spec.example_seed(example_index, stream);
    let mismatch = || {
        Err(Error::Dispatch(format!(
            "{} cannot be applied to a {}",
            spec.kind.id(),
            x.kind_name()
        )))
    };
    use CorruptionKind as K;
    match (&spec.kind, x) {
        (K::Identity, _) => Ok(x.clone()),
        (K::PatchRandomize { patch }, Covariate::Grid(g)) => {
            Ok(patch_randomize(g, *patch, seed)?.into())
        }
        (K::RoiMask { size }, Covariate::Grid(g)) => Ok(roi_mask(g, *size)?.into()),
        (K::FreqFilter { cutoff }, Covariate::Grid(g)) => Ok(freq_filter(g, *cutoff)?.into()),
        (K::IntensityFilter { threshold }, Covariate::Grid(g)) => {
            Ok(intensity_filter(g, *threshold)?.into())
        }
        (K::RandCrop { min_frac }, Covariate::Grid(g)) => Ok(rand_crop(g, *min_frac, seed)?.into()),
        (K::GaussNoise { variance }, Covariate::Grid(g)) => {
            Ok(gauss_noise(g, *variance, seed)?.into())
        }
        (K::NgramRandomize { n }, Covariate::Pair(p)) => Ok(SentencePair {
            premise: ngram_randomize(&p.premise, *n, derive_seed(seed, 0, 0))?,
            hypothesis: ngram_randomize(&p.hypothesis, *n, derive_seed(seed, 1, 0))?,
        }
        .into()),
        (K::PremiseMask, Covariate::Pair(p)) => Ok(premise_mask(p).into()),
        (K::MaskCoordinates { coords }, Covariate::Vector(v)) => {
            let mut out = v.clone();
            for &c in coords {
                *out.get_mut(c).ok_or_else(|| {
                    Error::Sizing(format!("coordinate {c} out of range for length {}", v.len()))
                })? = 0.0;
            }
            Ok(Covariate::Vector(out))
        }
        (K::PermuteCoordinates, Covariate::Vector(v)) => {
            let perm = SplitMix64::new(seed).permutation(v.len());
            Ok(Covariate::Vector(perm.iter().map(|&i| v[i]).collect()))
        }
        _ => mismatch(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariate::Grid;

    fn ramp() -> Grid {
        Grid::new(4, 4, 1, (0..16).map(|i| i as f32 / 15.0).collect()).unwrap()
    }

    #[test]
    fn identity_is_noop() {
        let x: Covariate = ramp().into();
        assert_eq!(apply(&CorruptionSpec::identity(), &x, 3).unwrap(), x);
    }

    #[test]
    fn dispatch_matches_direct_call() {
        let spec = CorruptionSpec::new(CorruptionKind::PatchRandomize { patch: 2 }, 17).unwrap();
        let g = ramp();
        let via_apply = apply(&spec, &g.clone().into(), 0).unwrap();
        let direct = patch_randomize(&g, 2, derive_seed(17, 0, 0)).unwrap();
        assert_eq!(via_apply, Covariate::Grid(direct));
        assert_eq!(apply(&spec, &g.clone().into(), 0).unwrap(), via_apply);
    }

    #[test]
    fn kind_mismatch_is_dispatch_error() {
        let spec = CorruptionSpec::new(CorruptionKind::PremiseMask, 0).unwrap();
        assert!(matches!(
            apply(&spec, &ramp().into(), 0),
            Err(Error::Dispatch(_))
        ));
        let spec = CorruptionSpec::new(CorruptionKind::RoiMask { size: 1 }, 0).unwrap();
        let pair = SentencePair::new(vec![1], vec![2]);
        assert!(matches!(apply(&spec, &pair.into(), 0), Err(Error::Dispatch(_))));
    }

    #[test]
    fn invalid_kinds_rejected() {
        assert!(CorruptionSpec::new(CorruptionKind::PatchRandomize { patch: 0 }, 0).is_err());
        assert!(CorruptionSpec::new(CorruptionKind::IntensityFilter { threshold: 2.0 }, 0).is_err());
        assert!(CorruptionSpec::new(CorruptionKind::RandCrop { min_frac: 0.0 }, 0).is_err());
        assert!(CorruptionSpec::new(CorruptionKind::GaussNoise { variance: -1.0 }, 0).is_err());
        assert!(CorruptionSpec::new(CorruptionKind::NgramRandomize { n: 0 }, 0).is_err());
    }

    #[test]
    fn ids_parse_back() {
        let kinds = [
            CorruptionKind::Identity,
            CorruptionKind::PatchRandomize { patch: 4 },
            CorruptionKind::RoiMask { size: 12 },
            CorruptionKind::FreqFilter { cutoff: 20 },
            CorruptionKind::IntensityFilter { threshold: 0.3 },
            CorruptionKind::RandCrop { min_frac: 0.08 },
            CorruptionKind::GaussNoise { variance: 0.25 },
            CorruptionKind::NgramRandomize { n: 1 },
            CorruptionKind::PremiseMask,
            CorruptionKind::MaskCoordinates { coords: vec![0, 2] },
            CorruptionKind::PermuteCoordinates,
        ];
        for k in kinds {
            assert_eq!(CorruptionKind::parse(&k.id()).unwrap(), k);
        }
        assert!(CorruptionKind::parse("bogus-3").is_err());
    }

    #[test]
    fn vector_mask_and_permute() {
        let v = Covariate::Vector(vec![1.0, -2.0, 3.0]);
        let mask = CorruptionSpec::new(CorruptionKind::MaskCoordinates { coords: vec![0] }, 0).unwrap();
        assert_eq!(apply(&mask, &v, 0).unwrap(), Covariate::Vector(vec![0.0, -2.0, 3.0]));
        let perm = CorruptionSpec::new(CorruptionKind::PermuteCoordinates, 4).unwrap();
        match apply(&perm, &v, 9).unwrap() {
            Covariate::Vector(mut out) => {
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(out, vec![-2.0, 1.0, 3.0]);
            }
            _ => unreachable!(),
        }
    }
}
