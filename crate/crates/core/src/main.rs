use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use semcorr::corruptions::{apply, CorruptionKind, CorruptionSpec};
use semcorr::families::{synthetic_image_task, synthetic_nli_task, Dataset};
use semcorr::harness::{
    default_model, evaluate, load_dataset, load_model, run_experiment, save_dataset, save_model,
    verify_theory, ExperimentConfig,
};
use semcorr::learner::{FeatureSpec, PoeVariant};
use semcorr::scams::{run_erm, run_scam, select_corruption, ModelConfig, ScamConfig, ScamVariant};
use semcorr::Error;

#[derive(Parser)]
#[command(name = "semcorr", version, about = "Semantic corruptions and spurious-correlation-avoiding methods")]
struct Cli {
    /// Seed for every random draw of the command (required).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Image,
    Nli,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Erm,
    Nurd,
    Jtt,
    Poe,
    PoeDisplay,
    Dfl,
}

#[derive(Args)]
struct ModelArgs {
    /// Feature spec as JSON; defaults to a preset for the covariate kind.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        n: usize,
        /// Flip the label-nuisance relationship (test split).
        #[arg(long)]
        flip: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the corrupted copy of a dataset.
    Corrupt {
        #[arg(long)]
        data: PathBuf,
        /// Corruption id such as pr-4, rm-8, ff-28, if-0.5, nr-1, pm.
        #[arg(long)]
        corruption: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an ERM model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train a corruption-powered model and write a checkpoint.
    Scam {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// One corruption id, or several (comma separated) to select among
        /// on --val.
        #[arg(long, value_delimiter = ',')]
        corruption: Vec<String>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        lambda_up: usize,
        #[arg(long, default_value_t = 1)]
        id_epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print the metrics record of a checkpoint on a dataset as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the exact-engine checks; exits 1 when any fails.
    VerifyTheory {
        /// Directory for the CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment from a JSON config and write records and summary.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Theory,
    Config(String),
    Training(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence(_) | Error::UndefinedWeight(_) | Error::ZeroMass(_) => {
                Failure::Training(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn model_config(data: &Dataset, args: &ModelArgs, seed: u64) -> Result<ModelConfig, Failure> {
    let mut m = default_model(data)?;
    if let Some(f) = &args.features {
        m.features = serde_json::from_str::<FeatureSpec>(f)
            .map_err(|e| Failure::Config(format!("bad --features: {e}")))?;
    }
    m.hidden = args.hidden.or(m.hidden);
    m.opt.learning_rate = args.lr.unwrap_or(m.opt.learning_rate);
    m.opt.epochs = args.epochs.unwrap_or(m.opt.epochs);
    m.opt.batch_size = args.batch_size.unwrap_or(m.opt.batch_size);
    m.opt.weight_decay = args.weight_decay.unwrap_or(m.opt.weight_decay);
    m.opt.seed = seed;
    m.opt.validate()?;
    Ok(m)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli
        .seed
        .ok_or_else(|| Failure::Config("--seed is required".into()))?;
    match cli.command {
        Command::Gen { task, rho, n, flip, out } => {
            let data = match task {
                Task::Image => synthetic_image_task(rho, n, seed, flip)?,
                Task::Nli => synthetic_nli_task(rho, n, seed, flip)?,
            };
            save_dataset(&data, &out)?;
        }
        Command::Corrupt { data, corruption, out } => {
            let data = load_dataset(&data)?;
            let spec = CorruptionSpec::new(CorruptionKind::parse(&corruption)?, seed)?;
            let xs = data
                .examples
                .iter()
                .enumerate()
                .map(|(i, e)| apply(&spec, &e.x, i as u64))
                .collect::<semcorr::Result<Vec<_>>>()?;
            save_dataset(&data.with_covariates(xs)?, &out)?;
        }
        Command::Train { data, out, model } => {
            let data = load_dataset(&data)?;
            let cfg = model_config(&data, &model, seed)?;
            save_model(&run_erm(&data, &cfg)?, &out)?;
        }
        Command::Scam { data, method, corruption, val, lambda_up, id_epochs, gamma, out, model } => {
            let data = load_dataset(&data)?;
            let cfg = model_config(&data, &model, seed)?;
            let variant = match method {
                Method::Erm => ScamVariant::Erm,
                Method::Nurd => ScamVariant::Nurd,
                Method::Jtt => ScamVariant::Jtt { lambda_up, id_epochs },
                Method::Poe => ScamVariant::Poe { objective: PoeVariant::Renormalized },
                Method::PoeDisplay => ScamVariant::Poe { objective: PoeVariant::Display },
                Method::Dfl => ScamVariant::Dfl { gamma },
            };
            variant.validate()?;
            let candidates = corruption
                .iter()
                .map(|c| CorruptionSpec::new(CorruptionKind::parse(c)?, seed))
                .collect::<semcorr::Result<Vec<_>>>()?;
            let sc = ScamConfig {
                variant: variant.clone(),
                corruption: candidates.first().cloned().unwrap_or_else(CorruptionSpec::identity),
                biased: cfg.clone(),
                main: cfg,
            };
            let spec = match (candidates.len(), val) {
                (0, _) => CorruptionSpec::identity(),
                (1, _) => candidates[0].clone(),
                (_, Some(v)) => {
                    let val = load_dataset(&v)?;
                    let sel = select_corruption(&candidates, &data, &val, variant.default_scheme(), &sc)?;
                    for (c, s) in &sel.scores {
                        eprintln!("{}\t{s}", c.id());
                    }
                    eprintln!("chosen {}", sel.chosen.id());
                    sel.chosen
                }
                (_, None) => {
                    return Err(Failure::Config("several corruptions need --val to select among".into()))
                }
            };
            save_model(&run_scam(&data, &spec, &sc)?, &out)?;
        }
        Command::Eval { model, data } => {
            let m = load_model(&model)?;
            let data = load_dataset(&data)?;
            let mut rec = evaluate(&m, &data)?;
            rec.seed = seed;
            rec.split = "eval".into();
            rec.method = model.file_stem().map_or(String::new(), |s| s.to_string_lossy().into_owned());
            println!("{}", serde_json::to_string_pretty(&rec).map_err(Error::from)?);
        }
        Command::VerifyTheory { out } => {
            let report = verify_theory(seed)?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                report.write_csv(&dir)?;
            }
            if !report.all_passed() {
                return Err(Failure::Theory);
            }
        }
        Command::Report { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(Error::from)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("bad config: {e}")))?;
            cfg.base_seed = seed;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let res = run_experiment(&cfg)?;
            for s in &res.summary {
                println!(
                    "{:<16} {:<12} test {:.4} ± {:.4} (sd {:.4})  worst {}",
                    s.method,
                    s.corruption,
                    s.test_mean,
                    s.test_se,
                    s.test_sd,
                    s.test_worst_mean.map_or("-".into(), |w| format!("{w:.4}")),
                );
            }
            if !res.failures.is_empty() {
                for f in &res.failures {
                    eprintln!("failed: {} {} seed {}: {}", f.method, f.corruption, f.seed, f.error);
                }
                return Err(Failure::Training(format!("{} runs failed", res.failures.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Theory) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Training(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
