use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Dataset;
use crate::learner::{featurize, LinearModel};

/// Accuracy summary of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub corruption: String,
    pub seed: u64,
    pub split: String,
    pub average: f64,
    /// Per group id; `None` for groups without examples.
    pub group_accuracies: Vec<Option<f64>>,
    /// Minimum over non-empty groups; absent without group annotations.
    pub worst_group: Option<f64>,
}

/// Exact 0-1 accuracies of `m` on `data`, overall and per group.
pub fn evaluate(m: &LinearModel, data: &Dataset) -> Result<MetricsRecord> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot evaluate on an empty dataset".into()));
    }
    if data.num_classes > m.num_classes {
        return Err(Error::Shape(format!(
            "dataset has {} classes, model predicts {}",
            data.num_classes, m.num_classes
        )));
    }
    let ng = data.num_groups();
    let (mut hits, mut counts) = (vec![0usize; ng], vec![0usize; ng]);
    let mut correct = 0usize;
    for e in &data.examples {
        let ok = m.predict_features(&featurize(&m.spec, &e.x)?)? == e.label;
        correct += ok as usize;
        if let Some(g) = e.group {
            counts[g] += 1;
            hits[g] += ok as usize;
        }
    }
    let group_accuracies: Vec<Option<f64>> = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    let worst_group = group_accuracies.iter().flatten().copied().reduce(f64::min);
    Ok(MetricsRecord {
        method: String::new(),
        corruption: String::new(),
        seed: 0,
        split: String::new(),
        average: correct as f64 / data.len() as f64,
        group_accuracies,
        worst_group,
    })
}

/// Mean, standard error and standard deviation (n − 1 denominator; zero
/// spread for a single value).
pub fn mean_se_sd(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (mean, sd / n.sqrt(), sd)
}
