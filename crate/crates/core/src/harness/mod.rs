//! Serialization, metrics, experiment orchestration and the exact-engine
//! self-check behind the command-line tool.

mod experiment;
mod io;
mod metrics;
mod presets;
mod theory;

pub use experiment::{
    run_experiment, summarize, write_outputs, ExperimentConfig, ExperimentResult, RunFailure,
    SummaryRow, TaskConfig, TaskFamily,
};
pub use io::{
    load_dataset, load_model, read_checkpoint, save_dataset, save_model, write_checkpoint,
    CovariateShape, DatasetMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, DATASET_FORMAT_VERSION,
};
pub use metrics::{evaluate, mean_se_sd, MetricsRecord};
pub use theory::{
    verify_theory, verify_theory_with, Check, TheoryInputs, TheoryReport, EXPECTED_TABLE,
    FUZZ_TRIALS, INDEP_TOL, PROP1_TOL, TABLE_TOL,
};
pub use presets::{
    default_model, image_jtt_benchmark, image_model, image_nurd_benchmark, nli_benchmark,
    nli_features, nli_model, BIGRAM_BUCKETS,
};
