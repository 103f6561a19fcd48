//! Exact-engine self-check: the 16-predictor table, the Theorem 1
//! coupling, Proposition 1 on the worked examples and on fuzzed pairs, and
//! the worked-example independences.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::{
    cond_indep_gap, enumerate_16_predictors_on, enumerated_accuracy, prop1_family, prop1_fuzz,
    FiniteCorruption, JointTable, PredictorRow, Prop1Report, Variable,
};
use crate::families::{permutation_family_discrete, theorem1_family, xor_family_discrete};

/// Accuracies `(ρ = 0, ρ = 1, min)` of the 16 predictors, row `r` as in
/// [`crate::exact::enumerated_predictor`].
pub const EXPECTED_TABLE: [(f64, f64, f64); 16] = [
    (0.50, 0.50, 0.50),
    (0.55, 0.05, 0.05),
    (0.05, 0.55, 0.05),
    (0.10, 0.10, 0.10),
    (0.95, 0.45, 0.45),
    (1.00, 0.00, 0.00),
    (0.50, 0.50, 0.50),
    (0.55, 0.05, 0.05),
    (0.45, 0.95, 0.45),
    (0.50, 0.50, 0.50),
    (0.00, 1.00, 0.00),
    (0.05, 0.55, 0.05),
    (0.90, 0.90, 0.90),
    (0.95, 0.45, 0.45),
    (0.45, 0.95, 0.45),
    (0.50, 0.50, 0.50),
];

pub const TABLE_TOL: f64 = 1e-12;
pub const PROP1_TOL: f64 = 1e-9;
pub const INDEP_TOL: f64 = 1e-12;
pub const FUZZ_TRIALS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub checks: Vec<Check>,
    pub table: Vec<PredictorRow>,
    /// `(label, report)` for the two worked examples.
    pub worked_prop1: Vec<(String, Prop1Report)>,
    pub fuzz: Vec<Prop1Report>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "[{tag}] {} ({:.3}s): {}", c.name, c.seconds, c.detail);
        }
        let _ = writeln!(s, "\n row  f(-1,-1) f(-1,1) f(1,-1) f(1,1)  acc_rho0  acc_rho1  min");
        for r in &self.table {
            let o = r.outputs;
            let _ = writeln!(
                s,
                " {:>3}  {:>8} {:>7} {:>7} {:>6}  {:>8.4}  {:>8.4}  {:.4}",
                r.index, o[0], o[1], o[2], o[3], r.acc_rho0, r.acc_rho1, r.min
            );
        }
        s
    }

    /// Writes `predictors.csv`, `prop1_worked.csv`, `prop1_fuzz.csv` and
    /// `checks.csv`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("predictors.csv"))?;
        w.write_record(["row", "f_mm", "f_mp", "f_pm", "f_pp", "acc_rho0", "acc_rho1", "min"])?;
        for r in &self.table {
            let mut row = vec![r.index.to_string()];
            row.extend(r.outputs.iter().map(|o| o.to_string()));
            row.extend([r.acc_rho0, r.acc_rho1, r.min].map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;

        let prop_row = |label: String, r: &Prop1Report| {
            vec![label, r.epsilon.to_string(), r.m.to_string(), r.l1.to_string(), r.bound_holds.to_string()]
        };
        let mut w = csv::Writer::from_path(dir.join("prop1_worked.csv"))?;
        w.write_record(["example", "epsilon", "m", "l1", "bound_holds"])?;
        for (label, r) in &self.worked_prop1 {
            w.write_record(prop_row(label.clone(), r))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("prop1_fuzz.csv"))?;
        w.write_record(["trial", "epsilon", "m", "l1", "bound_holds"])?;
        for (i, r) in self.fuzz.iter().enumerate() {
            w.write_record(prop_row(i.to_string(), r))?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("checks.csv"))?;
        w.write_record(["check", "passed", "seconds", "detail"])?;
        for c in &self.checks {
            w.write_record([&c.name, &c.passed.to_string(), &c.seconds.to_string(), &c.detail])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tables the 16-predictor check scores on; normally `p_{1,0}` and `p_{1,1}`.
#[derive(Clone, Debug)]
pub struct TheoryInputs {
    pub p_rho0: JointTable,
    pub p_rho1: JointTable,
    pub fuzz_seed: u64,
}

impl TheoryInputs {
    pub fn standard(fuzz_seed: u64) -> Result<Self> {
        let fam = theorem1_family(1)?;
        Ok(Self {
            p_rho0: fam.pmf(0.0)?,
            p_rho1: fam.pmf(1.0)?,
            fuzz_seed,
        })
    }
}

pub fn verify_theory(fuzz_seed: u64) -> Result<TheoryReport> {
    verify_theory_with(&TheoryInputs::standard(fuzz_seed)?)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let v = f()?;
    Ok((v, t0.elapsed().as_secs_f64()))
}

pub fn verify_theory_with(inputs: &TheoryInputs) -> Result<TheoryReport> {
    let mut checks = Vec::new();

    let (table, secs) = timed(|| enumerate_16_predictors_on(&inputs.p_rho0, &inputs.p_rho1))?;
    checks.push(table_check(&table, secs));

    let (coupling, secs) = timed(coupling_check)?;
    checks.push(Check { seconds: secs, ..coupling });

    let (worked, secs) = timed(|| {
        let fam = permutation_family_discrete(1.0, 6)?;
        let t = FiniteCorruption::coordinate_permutations(&fam.x_support)?;
        let perm = prop1_family(&fam, 1.0, &t)?;
        let perm_gap = cond_indep_gap(&fam.pmf(1.0)?, Variable::Corrupted(&t), Variable::Label, Variable::Nuisance)?;

        let fam = xor_family_discrete(1.0, 4)?;
        let t = FiniteCorruption::keep_coordinates(&fam.x_support, &[1])?;
        let xor = prop1_family(&fam, 1.0, &t)?;
        let p = fam.pmf(1.0)?;
        let xor_gap = cond_indep_gap(&p, Variable::Corrupted(&t), Variable::Label, Variable::Nuisance)?;
        let xor_gap2 = cond_indep_gap(&p, Variable::Label, Variable::Nuisance, Variable::Corrupted(&t))?;
        Ok((perm, xor, [perm_gap, xor_gap, xor_gap2]))
    })?;
    let (perm, xor, gaps) = worked;
    let worked_prop1 = vec![
        ("permutation D=1 grid=6, coordinate permutations".to_string(), perm.clone()),
        ("xor D=1 grid=4, mask coordinate 0".to_string(), xor.clone()),
    ];
    let bad: Vec<String> = worked_prop1
        .iter()
        .filter(|(_, r)| !(r.epsilon <= PROP1_TOL && r.l1 <= PROP1_TOL))
        .map(|(l, r)| format!("{l}: epsilon {:e}, l1 {:e}", r.epsilon, r.l1))
        .collect();
    checks.push(Check {
        name: "prop1 worked examples".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!(
                "epsilon {:.1e} / {:.1e}, l1 {:.1e} / {:.1e}",
                perm.epsilon, xor.epsilon, perm.l1, xor.l1
            )
        } else {
            bad.join("; ")
        },
        seconds: secs,
    });

    let names = ["T ⫫ y | z (permutation)", "T ⫫ y | z (xor)", "y ⫫ z | T (xor)"];
    let failing: Vec<String> = names
        .iter()
        .zip(gaps)
        .filter(|(_, g)| !(*g <= INDEP_TOL))
        .map(|(n, g)| format!("{n}: gap {g:e}"))
        .collect();
    checks.push(Check {
        name: "worked-example independences".into(),
        passed: failing.is_empty(),
        detail: if failing.is_empty() {
            format!("max gap {:.1e}", gaps.iter().copied().fold(0.0, f64::max))
        } else {
            failing.join("; ")
        },
        seconds: 0.0,
    });

    let (fuzz, secs) = timed(|| prop1_fuzz(FUZZ_TRIALS, inputs.fuzz_seed))?;
    let violations: Vec<usize> = (0..fuzz.len()).filter(|&i| !fuzz[i].bound_holds).collect();
    checks.push(Check {
        name: "prop1 fuzz".into(),
        passed: violations.is_empty() && fuzz.len() == FUZZ_TRIALS,
        detail: if violations.is_empty() {
            format!("{} trials, l1 <= m·epsilon + {PROP1_TOL:e} in all", fuzz.len())
        } else {
            format!("bound violated in trials {violations:?}")
        },
        seconds: secs,
    });

    Ok(TheoryReport {
        checks,
        table,
        worked_prop1,
        fuzz,
    })
}

fn table_check(table: &[PredictorRow], seconds: f64) -> Check {
    let mut mismatches = Vec::new();
    for (row, want) in table.iter().zip(EXPECTED_TABLE) {
        for (col, got, want) in [
            ("acc_rho0", row.acc_rho0, want.0),
            ("acc_rho1", row.acc_rho1, want.1),
            ("min", row.min, want.2),
        ] {
            if !((got - want).abs() <= TABLE_TOL) {
                mismatches.push(format!("row {} column {col}: got {got}, expected {want}", row.index));
            }
        }
    }
    let best = table.iter().map(|r| r.min).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<usize> = table.iter().filter(|r| r.min == best).map(|r| r.index).collect();
    if argmax != [12] {
        mismatches.push(format!("max-min attained by rows {argmax:?}, expected row 12 only"));
    }
    Check {
        name: "16-predictor table".into(),
        passed: mismatches.is_empty() && table.len() == 16,
        detail: if mismatches.is_empty() {
            format!("16 rows within {TABLE_TOL:e}; row 12 uniquely maximizes min at {best}")
        } else {
            mismatches.join("; ")
        },
        seconds,
    }
}

fn coupling_check() -> Result<Check> {
    let (f1, f2) = (theorem1_family(1)?, theorem1_family(2)?);
    let (a, b) = (f1.pmf(0.9)?.to_yx(), f2.pmf(0.9)?.to_yx());
    let (diff, cell) = a.max_abs_diff(&b)?;
    let mut problems = Vec::new();
    if diff != 0.0 {
        problems.push(format!("(y,x) tables differ by {diff:e} at cell {cell:?}"));
    }
    let mut robust = Vec::new();
    for r in 0..16 {
        let min = enumerated_accuracy(1, 0.0, r)?.min(enumerated_accuracy(1, 1.0, r)?);
        if min > 0.5 {
            robust.push(r);
            let acc = enumerated_accuracy(2, 0.0, r)?;
            if acc != 0.0 {
                problems.push(format!("predictor {r} scores {acc} on p_(2,0)"));
            }
        }
    }
    Ok(Check {
        name: "theorem 1 coupling".into(),
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("(y,x) tables identical; predictors {robust:?} score exactly 0 on p_(2,0)")
        } else {
            problems.join("; ")
        },
        seconds: 0.0,
    })
}
