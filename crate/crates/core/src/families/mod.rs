//! Nuisance-varying families: exact finite families and sampled synthetic
//! tasks.

mod discrete;
mod synthetic;

pub use discrete::{
    permutation_family_discrete, theorem1_family, xor_family_discrete, DiscreteFamily,
    NuisanceModel,
};
pub use synthetic::{
    is_ordered_subsequence, nli_label, synthetic_image_task, synthetic_image_task_with,
    synthetic_nli_task, synthetic_nli_task_with, ImageTaskConfig, NliTaskConfig, NEG_TOKEN,
};

use serde::{Deserialize, Serialize};

use crate::covariate::Covariate;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Covariate,
    pub label: usize,
    pub nuisance: Option<usize>,
    /// `label · num_nuisance + nuisance`; present iff the nuisance is.
    pub group: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: String,
    pub rho: f64,
    pub seed: u64,
    pub flip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    /// Number of nuisance values; 0 when the data carries no annotation.
    pub num_nuisance: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        num_classes: usize,
        num_nuisance: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = Self {
            examples,
            num_classes,
            num_nuisance,
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.examples.iter().enumerate() {
            if e.label >= self.num_classes {
                return Err(Error::InvalidParameter(format!(
                    "example {i}: label {} outside 0..{}",
                    e.label, self.num_classes
                )));
            }
            match (e.nuisance, e.group) {
                (None, None) => {}
                (Some(z), Some(g)) => {
                    if z >= self.num_nuisance || g != e.label * self.num_nuisance + z {
                        return Err(Error::InvalidParameter(format!(
                            "example {i}: inconsistent nuisance {z} / group {g}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "example {i}: group id present iff nuisance present"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn num_groups(&self) -> usize {
        self.num_classes * self.num_nuisance
    }

    /// Empirical label marginal.
    pub fn label_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_classes];
        for e in &self.examples {
            m[e.label] += 1.0;
        }
        let n = self.len().max(1) as f64;
        m.iter().map(|c| c / n).collect()
    }

    /// Examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
            num_nuisance: self.num_nuisance,
            provenance: self.provenance.clone(),
        }
    }

    /// A copy with the covariates replaced.
    pub fn with_covariates(&self, xs: Vec<Covariate>) -> Result<Dataset> {
        if xs.len() != self.len() {
            return Err(Error::Shape("covariate count does not match dataset".into()));
        }
        let mut d = self.clone();
        for (e, x) in d.examples.iter_mut().zip(xs) {
            e.x = x;
        }
        Ok(d)
    }
}

impl DiscreteFamily {
    /// Wraps index samples as a dataset of vector covariates, with the z
    /// index as nuisance annotation.
    pub fn to_dataset(
        &self,
        samples: &[(usize, usize, usize)],
        param: f64,
        seed: u64,
    ) -> Result<Dataset> {
        let nz = self.z_support.len();
        let examples = samples
            .iter()
            .map(|&(y, z, x)| Example {
                x: Covariate::Vector(self.x_support[x].iter().map(|&v| v as f32).collect()),
                label: y,
                nuisance: Some(z),
                group: Some(y * nz + z),
            })
            .collect();
        Dataset::new(
            examples,
            self.y_support.len(),
            nz,
            Provenance {
                family: self.name.clone(),
                rho: param,
                seed,
                flip: false,
            },
        )
    }
}
