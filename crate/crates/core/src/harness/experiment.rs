//! Seed-replicated experiments on the synthetic tasks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, mean_se_sd, MetricsRecord};
use crate::corruptions::{CorruptionKind, CorruptionSpec};
use crate::error::{Error, Result};
use crate::families::{
    synthetic_image_task_with, synthetic_nli_task_with, Dataset, ImageTaskConfig, NliTaskConfig,
};
use crate::rng::derive_seed;
use crate::scams::{run_scam, select_corruption, ModelConfig, ScamConfig, ScamVariant};

const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;
const CORRUPTION_STREAM: u64 = 4;
const MODEL_STREAM: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Image,
    Nli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub family: TaskFamily,
    pub rho_train: f64,
    pub rho_test: f64,
    /// Generate the test split with the label-nuisance relationship flipped.
    pub flip_test: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default)]
    pub image: ImageTaskConfig,
    #[serde(default)]
    pub nli: NliTaskConfig,
}

impl TaskConfig {
    pub fn generate(&self, rho: f64, n: usize, seed: u64, flip: bool) -> Result<Dataset> {
        match self.family {
            TaskFamily::Image => synthetic_image_task_with(&self.image, rho, n, seed, flip),
            TaskFamily::Nli => synthetic_nli_task_with(&self.nli, rho, n, seed, flip),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    /// Replicate ids; every random draw of a replicate derives from
    /// `(base_seed, replicate)`.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub methods: Vec<ScamVariant>,
    pub corruptions: Vec<CorruptionKind>,
    pub biased: ModelConfig,
    pub main: ModelConfig,
    /// Also run corruption selection on the validation split for each
    /// method, reported under the corruption id `selected`.
    #[serde(default)]
    pub select: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.n_train == 0 || t.n_val == 0 || t.n_test == 0 {
            return Err(Error::Config("train, validation and test sizes must be positive".into()));
        }
        for rho in [t.rho_train, t.rho_test] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("rho {rho} outside [0, 1]")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.methods.is_empty() || self.corruptions.is_empty() {
            return Err(Error::Config("need at least one method and one corruption".into()));
        }
        for m in &self.methods {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for c in &self.corruptions {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// A run that raised an error; the rest of the experiment continues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub method: String,
    pub corruption: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub corruption: String,
    pub n_seeds: usize,
    pub test_mean: f64,
    pub test_se: f64,
    pub test_sd: f64,
    pub test_worst_mean: Option<f64>,
    pub test_worst_se: Option<f64>,
    pub test_worst_sd: Option<f64>,
    pub val_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Sorted by (method, corruption, seed, split).
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<RunFailure>,
    /// `(method, seed, chosen corruption)` when selection ran.
    pub selections: Vec<(String, u64, String)>,
}

struct Replicate {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn replicate_data(cfg: &ExperimentConfig, s: u64) -> Result<Replicate> {
    let t = &cfg.task;
    let seed = |stream| derive_seed(cfg.base_seed, s, stream);
    Ok(Replicate {
        train: t.generate(t.rho_train, t.n_train, seed(TRAIN_STREAM), false)?,
        val: t.generate(t.rho_train, t.n_val, seed(VAL_STREAM), false)?,
        test: t.generate(t.rho_test, t.n_test, seed(TEST_STREAM), t.flip_test)?,
    })
}

fn scam_config(cfg: &ExperimentConfig, variant: &ScamVariant, s: u64) -> ScamConfig {
    let model_seed = derive_seed(cfg.base_seed, s, MODEL_STREAM);
    let with_seed = |m: &ModelConfig| {
        let mut m = m.clone();
        m.opt.seed = model_seed;
        m
    };
    ScamConfig {
        variant: variant.clone(),
        corruption: CorruptionSpec::identity(),
        biased: with_seed(&cfg.biased),
        main: with_seed(&cfg.main),
    }
}

fn labeled(mut r: MetricsRecord, method: &str, corruption: &str, seed: u64, split: &str) -> MetricsRecord {
    r.method = method.into();
    r.corruption = corruption.into();
    r.seed = seed;
    r.split = split.into();
    r
}

enum Job<'a> {
    Run { variant: &'a ScamVariant, kinds: Vec<&'a CorruptionKind> },
    Select { variant: &'a ScamVariant },
}

fn run_job(cfg: &ExperimentConfig, data: &Replicate, s: u64, job: &Job) -> JobOutcome {
    let mut out = JobOutcome::default();
    let corruption_seed = derive_seed(cfg.base_seed, s, CORRUPTION_STREAM);
    match job {
        Job::Run { variant, kinds } => {
            let method = variant.id();
            let fail = |out: &mut JobOutcome, e: Error| {
                for k in kinds {
                    out.failures.push(RunFailure {
                        method: method.clone(),
                        corruption: k.id(),
                        seed: s,
                        error: e.to_string(),
                    });
                }
            };
            let result = (|| {
                let sc = scam_config(cfg, variant, s);
                let spec = CorruptionSpec::new(kinds[0].clone(), corruption_seed)?;
                let m = run_scam(&data.train, &spec, &sc)?;
                Ok::<_, Error>((evaluate(&m, &data.val)?, evaluate(&m, &data.test)?))
            })();
            match result {
                Ok((val, test)) => {
                    for k in kinds {
                        out.records.push(labeled(val.clone(), &method, &k.id(), s, "val"));
                        out.records.push(labeled(test.clone(), &method, &k.id(), s, "test"));
                    }
                }
                Err(e) => fail(&mut out, e),
            }
        }
        Job::Select { variant } => {
            let method = variant.id();
            let result = (|| {
                let sc = scam_config(cfg, variant, s);
                let candidates = cfg
                    .corruptions
                    .iter()
                    .map(|k| CorruptionSpec::new(k.clone(), corruption_seed))
                    .collect::<Result<Vec<_>>>()?;
                let sel = select_corruption(
                    &candidates,
                    &data.train,
                    &data.val,
                    variant.default_scheme(),
                    &sc,
                )?;
                let m = run_scam(&data.train, &sel.chosen, &sc)?;
                Ok::<_, Error>((sel.chosen.id(), evaluate(&m, &data.val)?, evaluate(&m, &data.test)?))
            })();
            match result {
                Ok((chosen, val, test)) => {
                    out.records.push(labeled(val, &method, "selected", s, "val"));
                    out.records.push(labeled(test, &method, "selected", s, "test"));
                    out.selections.push((method, s, chosen));
                }
                Err(e) => out.failures.push(RunFailure {
                    method,
                    corruption: "selected".into(),
                    seed: s,
                    error: e.to_string(),
                }),
            }
        }
    }
    out
}

#[derive(Default)]
struct JobOutcome {
    records: Vec<MetricsRecord>,
    failures: Vec<RunFailure>,
    selections: Vec<(String, u64, String)>,
}

/// Runs every method under every corruption on each replicate, evaluating
/// on the in-distribution validation split and the test split.
///
/// ERM ignores the corruption, so it is trained once per replicate and its
/// records are repeated under each corruption id. A failing run is listed
/// in `failures` and the remaining runs proceed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut jobs: Vec<Job> = Vec::new();
    for v in &cfg.methods {
        if *v == ScamVariant::Erm {
            jobs.push(Job::Run { variant: v, kinds: cfg.corruptions.iter().collect() });
        } else {
            jobs.extend(cfg.corruptions.iter().map(|k| Job::Run { variant: v, kinds: vec![k] }));
            if cfg.select {
                jobs.push(Job::Select { variant: v });
            }
        }
    }

    let outcomes: Vec<JobOutcome> = cfg
        .seeds
        .par_iter()
        .flat_map_iter(|&s| {
            let data = replicate_data(cfg, s);
            let per_job: Vec<JobOutcome> = match &data {
                Ok(d) => jobs.iter().map(|j| run_job(cfg, d, s, j)).collect(),
                Err(e) => vec![JobOutcome {
                    failures: vec![RunFailure {
                        method: "*".into(),
                        corruption: "*".into(),
                        seed: s,
                        error: e.to_string(),
                    }],
                    ..Default::default()
                }],
            };
            per_job
        })
        .collect();

    let mut res = ExperimentResult::default();
    for o in outcomes {
        res.records.extend(o.records);
        res.failures.extend(o.failures);
        res.selections.extend(o.selections);
    }
    res.records.sort_by(|a, b| {
        (&a.method, &a.corruption, a.seed, &a.split).cmp(&(&b.method, &b.corruption, b.seed, &b.split))
    });
    res.failures.sort_by(|a, b| {
        (&a.method, &a.corruption, a.seed).cmp(&(&b.method, &b.corruption, b.seed))
    });
    res.selections.sort();
    res.summary = summarize(&res.records);

    if let Some(dir) = &cfg.output_dir {
        write_outputs(&res, dir)?;
    }
    Ok(res)
}

/// One row per (method, corruption) over the seeds with both splits present.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut by_key: BTreeMap<(String, String), (Vec<&MetricsRecord>, Vec<&MetricsRecord>)> =
        BTreeMap::new();
    for r in records {
        let e = by_key.entry((r.method.clone(), r.corruption.clone())).or_default();
        match r.split.as_str() {
            "test" => e.0.push(r),
            "val" => e.1.push(r),
            _ => {}
        }
    }
    by_key
        .into_iter()
        .map(|((method, corruption), (test, val))| {
            let acc: Vec<f64> = test.iter().map(|r| r.average).collect();
            let worst: Vec<f64> = test.iter().filter_map(|r| r.worst_group).collect();
            let (test_mean, test_se, test_sd) = mean_se_sd(&acc);
            let w = (worst.len() == test.len() && !worst.is_empty()).then(|| mean_se_sd(&worst));
            let val_acc: Vec<f64> = val.iter().map(|r| r.average).collect();
            SummaryRow {
                method,
                corruption,
                n_seeds: test.len(),
                test_mean,
                test_se,
                test_sd,
                test_worst_mean: w.map(|w| w.0),
                test_worst_se: w.map(|w| w.1),
                test_worst_sd: w.map(|w| w.2),
                val_mean: mean_se_sd(&val_acc).0,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Writes `records.csv`, `summary.csv`, `failures.csv` and, when selection
/// ran, `selections.csv`.
pub fn write_outputs(res: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let max_groups = res.records.iter().map(|r| r.group_accuracies.len()).max().unwrap_or(0);

    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    let mut header: Vec<String> =
        ["method", "corruption", "seed", "split", "average", "worst_group"].map(String::from).to_vec();
    header.extend((0..max_groups).map(|g| format!("group_{g}")));
    w.write_record(&header)?;
    for r in &res.records {
        let mut row = vec![
            r.method.clone(),
            r.corruption.clone(),
            r.seed.to_string(),
            r.split.clone(),
            r.average.to_string(),
            opt(r.worst_group),
        ];
        row.extend((0..max_groups).map(|g| opt(r.group_accuracies.get(g).copied().flatten())));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "method",
        "corruption",
        "n_seeds",
        "test_mean",
        "test_se",
        "test_sd",
        "test_worst_mean",
        "test_worst_se",
        "test_worst_sd",
        "val_mean",
    ])?;
    for s in &res.summary {
        w.write_record([
            s.method.clone(),
            s.corruption.clone(),
            s.n_seeds.to_string(),
            s.test_mean.to_string(),
            s.test_se.to_string(),
            s.test_sd.to_string(),
            opt(s.test_worst_mean),
            opt(s.test_worst_se),
            opt(s.test_worst_sd),
            s.val_mean.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
    w.write_record(["method", "corruption", "seed", "error"])?;
    for f in &res.failures {
        w.write_record([&f.method, &f.corruption, &f.seed.to_string(), &f.error])?;
    }
    w.flush()?;

    if !res.selections.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("selections.csv"))?;
        w.write_record(["method", "seed", "chosen"])?;
        for (m, s, c) in &res.selections {
            w.write_record([m, &s.to_string(), c])?;
        }
        w.flush()?;
    }
    Ok(())
}
