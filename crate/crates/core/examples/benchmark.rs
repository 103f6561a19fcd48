//! Runs the desk-scale benchmarks on the synthetic tasks and prints their
//! summaries. Pass an output directory to also write the CSV tables.

use std::path::PathBuf;
use std::time::Instant;

use semcorr::harness::{
    image_jtt_benchmark, image_nurd_benchmark, nli_benchmark, run_experiment, ExperimentConfig,
};

fn main() -> semcorr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let seeds: Vec<u64> = (0..5).collect();
    let runs: [(&str, ExperimentConfig); 3] = [
        ("image-nurd", image_nurd_benchmark(seeds.clone())),
        ("image-jtt", image_jtt_benchmark(seeds.clone())),
        ("nli", nli_benchmark(seeds)),
    ];
    for (name, mut cfg) in runs {
        cfg.output_dir = out.as_ref().map(|d| d.join(name));
        let t0 = Instant::now();
        let res = run_experiment(&cfg)?;
        println!("== {name} ({:.1}s)", t0.elapsed().as_secs_f64());
        for s in &res.summary {
            println!(
                "{:<14} {:<8} test {:.4} ± {:.4}  worst {}",
                s.method,
                s.corruption,
                s.test_mean,
                s.test_se,
                s.test_worst_mean.map_or("-".into(), |w| format!("{w:.4}")),
            );
        }
        for f in &res.failures {
            println!("failed {} {} seed {}: {}", f.method, f.corruption, f.seed, f.error);
        }
    }
    Ok(())
}
