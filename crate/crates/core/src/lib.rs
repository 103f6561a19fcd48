//! Semantic corruptions and the spurious-correlation-avoiding methods they
//! power.
//!
//! * [`corruptions`]: seed-deterministic transforms that destroy semantic
//!   structure (patch/n-gram randomization, ROI/premise masking,
//!   frequency/intensity filters) plus baseline augmentations.
//! * [`families`]: finite nuisance-varying families for exact checks and
//!   sampled synthetic image/NLI tasks.
//! * [`exact`]: exact computations over finite joint tables.
//! * [`learner`]: small linear/MLP classifiers, losses and a deterministic
//!   minibatch optimizer.
//! * [`scams`]: biased models from corruptions; reweighting-NuRD, JTT, PoE
//!   and DFL; corruption-parameter selection.
//! * [`harness`]: metrics, file formats, experiment orchestration and the
//!   theory checks behind the `semcorr` CLI.

pub mod corruptions;
pub mod covariate;
pub mod error;
pub mod exact;
pub mod families;
pub mod harness;
pub mod learner;
pub mod rng;
pub mod scams;

pub use covariate::{Covariate, Grid, SentencePair, TokenSeq, MASK_TOKEN};
pub use error::{Error, Result};
