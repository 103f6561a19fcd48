use std::fs;
use std::process::Command;

use semcorr::corruptions::CorruptionKind;
use semcorr::exact::JointTable;
use semcorr::families::{
    synthetic_image_task, synthetic_nli_task, xor_family_discrete, Dataset, Example,
    ImageTaskConfig, Provenance,
};
use semcorr::harness::{
    evaluate, load_dataset, load_model, nli_model, read_checkpoint, run_experiment, save_dataset,
    save_model, verify_theory, verify_theory_with, write_checkpoint, ExperimentConfig, TaskConfig,
    TaskFamily, TheoryInputs,
};
use semcorr::learner::{FeatureSpec, LinearModel, OptConfig};
use semcorr::scams::{run_erm, ModelConfig, ScamVariant};
use semcorr::{Covariate, Error};

fn prov() -> Provenance {
    Provenance { family: "micro".into(), rho: 0.0, seed: 0, flip: false }
}

/// Predicts class 0 when the single coordinate is positive.
fn sign_model() -> LinearModel {
    let mut m = LinearModel::new(FeatureSpec::Vector { abs: false, products: false }, 1, 2).unwrap();
    m.weights = vec![1.0, -1.0];
    m
}

/// `(label, nuisance, hits, total)` per group, realised by the sign model.
fn micro_dataset(spec: &[(usize, usize, usize, usize)]) -> Dataset {
    let mut examples = Vec::new();
    for &(y, z, hits, total) in spec {
        for i in 0..total {
            let right = if y == 0 { 1.0 } else { -1.0 };
            let v = if i < hits { right } else { -right };
            examples.push(Example {
                x: Covariate::Vector(vec![v]),
                label: y,
                nuisance: Some(z),
                group: Some(y * 2 + z),
            });
        }
    }
    Dataset::new(examples, 2, 2, prov()).unwrap()
}

#[test]
fn evaluate_hand_counted_groups() {
    let data = micro_dataset(&[(0, 0, 10, 10), (0, 1, 9, 10), (1, 0, 4, 5), (1, 1, 1, 5)]);
    let r = evaluate(&sign_model(), &data).unwrap();
    let want = [1.0, 0.9, 0.8, 0.2];
    for (g, w) in r.group_accuracies.iter().zip(want) {
        assert!((g.unwrap() - w).abs() < 1e-15);
    }
    assert_eq!(r.worst_group, Some(0.2));
    assert!((r.average - 24.0 / 30.0).abs() < 1e-15);
}

#[test]
fn evaluate_trivial_cases() {
    let data = micro_dataset(&[(0, 0, 5, 5), (1, 1, 5, 5)]);
    let r = evaluate(&sign_model(), &data).unwrap();
    assert_eq!((r.average, r.worst_group), (1.0, Some(1.0)));
    // groups 1 and 2 are empty
    assert_eq!(r.group_accuracies[1], None);

    let constant = LinearModel::new(FeatureSpec::Vector { abs: false, products: false }, 1, 2).unwrap();
    let r = evaluate(&constant, &data).unwrap();
    assert_eq!((r.average, r.worst_group), (0.5, Some(0.0)));

    let mut plain = data.clone();
    for e in &mut plain.examples {
        e.nuisance = None;
        e.group = None;
    }
    plain.num_nuisance = 0;
    assert_eq!(evaluate(&sign_model(), &plain).unwrap().worst_group, None);
}

#[test]
fn evaluate_rejects_extra_classes() {
    let ex = |y| Example { x: Covariate::Vector(vec![1.0]), label: y, nuisance: None, group: None };
    let data = Dataset::new(vec![ex(0), ex(2)], 3, 0, prov()).unwrap();
    assert!(matches!(evaluate(&sign_model(), &data), Err(Error::Shape(_))));
}

#[test]
fn dataset_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let xor = xor_family_discrete(0.5, 4).unwrap();
    let samples = xor.sample(0.5, 50, 3).unwrap();
    let mut plain = synthetic_nli_task(0.9, 30, 2, true).unwrap();
    for e in &mut plain.examples {
        e.nuisance = None;
        e.group = None;
    }
    plain.num_nuisance = 0;
    for (name, data) in [
        ("image", synthetic_image_task(0.9, 40, 1, false).unwrap()),
        ("nli", synthetic_nli_task(0.9, 40, 2, true).unwrap()),
        ("vector", xor.to_dataset(&samples, 0.5, 3).unwrap()),
        ("unannotated", plain),
    ] {
        let path = dir.path().join(name);
        save_dataset(&data, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data, "{name}");
        for (a, b) in back.examples.iter().zip(&data.examples) {
            if let (Covariate::Grid(a), Covariate::Grid(b)) = (&a.x, &b.x) {
                let bits = |g: &semcorr::Grid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
        }
    }
}

#[test]
fn damaged_dataset_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_nli_task(0.9, 10, 2, false).unwrap();
    save_dataset(&data, dir.path()).unwrap();
    let bin = dir.path().join("data.bin");
    let raw = fs::read(&bin).unwrap();
    fs::write(&bin, &raw[..raw.len() - 4]).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
    fs::write(&bin, [raw.as_slice(), &[0, 0, 0, 0]].concat()).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
}

#[test]
fn checkpoints_round_trip() {
    let data = synthetic_nli_task(0.9, 100, 5, false).unwrap();
    let mut cfg = nli_model();
    cfg.opt.epochs = 2;
    let linear = run_erm(&data, &cfg).unwrap();
    cfg.hidden = Some(4);
    let mlp = run_erm(&data, &cfg).unwrap();
    for m in [linear, mlp] {
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] ^= 1;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
    let dir = tempfile::tempdir().unwrap();
    let m = sign_model();
    save_model(&m, &dir.path().join("m.ckpt")).unwrap();
    assert_eq!(load_model(&dir.path().join("m.ckpt")).unwrap(), m);
}

fn small_config(family: TaskFamily) -> ExperimentConfig {
    let model = match family {
        TaskFamily::Nli => {
            let mut m = nli_model();
            m.opt.epochs = 3;
            m
        }
        TaskFamily::Image => semcorr::harness::image_model(),
    };
    ExperimentConfig {
        task: TaskConfig {
            family,
            rho_train: 0.9,
            rho_test: 0.9,
            flip_test: true,
            n_train: 200,
            n_val: 100,
            n_test: 100,
            image: ImageTaskConfig::default(),
            nli: Default::default(),
        },
        seeds: vec![0, 1],
        base_seed: 9,
        methods: vec![ScamVariant::Erm, ScamVariant::Jtt { lambda_up: 3, id_epochs: 1 }],
        corruptions: vec![CorruptionKind::NgramRandomize { n: 1 }, CorruptionKind::PremiseMask],
        biased: model.clone(),
        main: model,
        select: false,
        output_dir: None,
    }
}

#[test]
fn experiment_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(TaskFamily::Nli);
    cfg.select = true;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        cfg.output_dir = Some(dir.path().join(run));
        let res = run_experiment(&cfg).unwrap();
        assert!(res.failures.is_empty(), "{:?}", res.failures);
        // erm and jtt under each corruption, plus jtt with selection
        assert_eq!(res.summary.len(), 2 * 2 + 1);
        assert_eq!(res.selections.len(), 2);
        outputs.push(
            ["records.csv", "summary.csv", "failures.csv", "selections.csv"]
                .map(|f| fs::read(dir.path().join(run).join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    let summary = String::from_utf8(outputs[0][1].clone()).unwrap();
    assert!(summary.starts_with("method,corruption,n_seeds,test_mean,test_se,test_sd,"));
}

#[test]
fn summary_has_one_row_per_method_and_corruption() {
    let mut cfg = small_config(TaskFamily::Nli);
    cfg.seeds = vec![4];
    cfg.methods = vec![ScamVariant::Erm, ScamVariant::Nurd, ScamVariant::Dfl { gamma: 1.0 }];
    cfg.corruptions.push(CorruptionKind::Identity);
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.summary.len(), 3 * 3);
    assert!(res.summary.iter().all(|s| s.n_seeds == 1 && s.test_se == 0.0));
    // records are sorted by (method, corruption, seed, split)
    let keys: Vec<_> = res.records.iter().map(|r| (&r.method, &r.corruption, r.seed, &r.split)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn failing_runs_are_recorded_and_the_rest_continue() {
    let mut cfg = small_config(TaskFamily::Nli);
    // a grid corruption cannot read sentence pairs
    cfg.corruptions = vec![CorruptionKind::NgramRandomize { n: 1 }, CorruptionKind::RoiMask { size: 2 }];
    cfg.methods = vec![ScamVariant::Nurd];
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.failures.len(), 2);
    assert!(res.failures.iter().all(|f| f.corruption == "rm-2"));
    assert_eq!(res.records.len(), 2 * 2);
}

#[test]
fn invalid_configs_are_config_errors() {
    let mut cfg = small_config(TaskFamily::Nli);
    cfg.seeds.clear();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    let mut cfg = small_config(TaskFamily::Nli);
    cfg.task.n_val = 0;
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

#[test]
fn erm_learns_the_image_semantics_without_spurious_correlation() {
    let mut cfg = small_config(TaskFamily::Image);
    cfg.task.rho_train = 0.5;
    cfg.task.rho_test = 0.5;
    cfg.task.flip_test = false;
    cfg.task.n_train = 2000;
    cfg.task.n_test = 1000;
    cfg.seeds = vec![0];
    cfg.methods = vec![ScamVariant::Erm];
    cfg.corruptions = vec![CorruptionKind::Identity];
    // glyph fidelity caps the default task at 0.8
    let res = run_experiment(&cfg).unwrap();
    let test: Vec<_> = res.records.iter().filter(|r| r.split == "test").collect();
    assert_eq!(test.len(), 1);
    assert!(test[0].average > 0.77, "{}", test[0].average);
    cfg.task.image.semantic_fidelity = 1.0;
    let res = run_experiment(&cfg).unwrap();
    let test: Vec<_> = res.records.iter().filter(|r| r.split == "test").collect();
    assert!(test[0].average > 0.9, "{}", test[0].average);
}

#[test]
fn theory_checks_pass_and_detect_a_corrupted_table() {
    let report = verify_theory(0).unwrap();
    assert!(report.all_passed(), "{}", report.to_text());
    assert_eq!(report.checks.len(), 5);

    // move the mass of one (y, z, x) cell of p_(1,0) onto the other label
    let mut inputs = TheoryInputs::standard(0).unwrap();
    let p = &inputs.p_rho0;
    let mut probs = p.probs().to_vec();
    let (a, b) = (p.flat(0, 1, 1), p.flat(1, 1, 1));
    probs.swap(a, b);
    inputs.p_rho0 = JointTable::new(p.y_support.clone(), p.z_support.clone(), p.x_support.clone(), probs).unwrap();
    let report = verify_theory_with(&inputs).unwrap();
    assert!(!report.all_passed());
    let table = &report.checks[0];
    assert!(!table.passed);
    assert!(table.detail.contains("column acc_rho0"), "{}", table.detail);
    assert!(!table.detail.contains("column acc_rho1"), "{}", table.detail);
    assert!(report.checks[1..].iter().all(|c| c.passed));
}

#[test]
fn theory_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    verify_theory(0).unwrap().write_csv(dir.path()).unwrap();
    let table = fs::read_to_string(dir.path().join("predictors.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);
    assert!(table.lines().nth(13).unwrap().starts_with("12,-1,-1,1,1,0.9,0.9,0.9"), "{table}");
    let fuzz = fs::read_to_string(dir.path().join("prop1_fuzz.csv")).unwrap();
    assert_eq!(fuzz.lines().count(), 201);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semcorr"))
}

#[test]
fn cli_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p);
    let code = |c: &mut Command| c.output().unwrap().status.code().unwrap();

    assert_eq!(code(cli().args(["verify-theory", "--seed", "1"])), 0);
    assert_eq!(code(cli().args(["gen", "--task", "nli", "--rho", "0.9", "--n", "200"]).arg("--out").arg(d("tr"))), 2);
    assert_eq!(
        code(cli().args(["gen", "--task", "nli", "--rho", "0.9", "--n", "200", "--seed", "1"]).arg("--out").arg(d("tr"))),
        0
    );
    assert_eq!(
        code(cli().args(["gen", "--task", "nli", "--rho", "0.9", "--n", "100", "--flip", "--seed", "2"]).arg("--out").arg(d("te"))),
        0
    );
    assert_eq!(
        code(cli().args(["corrupt", "--corruption", "pr-x", "--seed", "3"]).arg("--data").arg(d("tr")).arg("--out").arg(d("c"))),
        2
    );
    assert_eq!(
        code(cli().args(["corrupt", "--corruption", "nr-1", "--seed", "3"]).arg("--data").arg(d("tr")).arg("--out").arg(d("c"))),
        0
    );
    assert_eq!(load_dataset(&d("c")).unwrap().len(), 200);
    assert_eq!(
        code(cli().args(["scam", "--method", "dfl", "--corruption", "nr-1", "--epochs", "2", "--seed", "4"]).arg("--data").arg(d("tr")).arg("--out").arg(d("m.ckpt"))),
        0
    );
    let out = cli().args(["eval", "--seed", "0"]).arg("--model").arg(d("m.ckpt")).arg("--data").arg(d("te")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rec["average"].as_f64().unwrap() >= 0.0);

    assert_eq!(
        code(cli().args(["train", "--lr", "1e300", "--epochs", "2", "--seed", "5"]).arg("--data").arg(d("tr")).arg("--out").arg(d("bad.ckpt"))),
        3
    );
    fs::write(d("cfg.json"), "{\"task\": 3}").unwrap();
    assert_eq!(code(cli().args(["report", "--seed", "0"]).arg("--config").arg(d("cfg.json"))), 2);

    let mut cfg = small_config(TaskFamily::Nli);
    cfg.seeds = vec![0];
    cfg.methods = vec![ScamVariant::Erm];
    cfg.corruptions = vec![CorruptionKind::Identity];
    fs::write(d("cfg.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(
        code(cli().args(["report", "--seed", "0"]).arg("--config").arg(d("cfg.json")).arg("--out").arg(d("rep"))),
        0
    );
    assert!(d("rep").join("summary.csv").exists());
}

#[test]
fn model_config_json_is_stable() {
    // configs written by hand name the feature and method kinds
    let m = ModelConfig::linear(FeatureSpec::FlattenGrid, OptConfig::default());
    let v = serde_json::to_value(&m).unwrap();
    assert_eq!(v["features"]["kind"], "flatten_grid");
    let v = serde_json::to_value(ScamVariant::Jtt { lambda_up: 5, id_epochs: 1 }).unwrap();
    assert_eq!(v["method"], "jtt");
}
