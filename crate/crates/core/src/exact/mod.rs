//! Exact computations over finite joint tables: nuisance- and
//! corruption-randomized distributions, predictor accuracies, the
//! Proposition 1 quantities and the 16-predictor enumeration.

mod table;

pub use table::{JointTable, NORM_TOL};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{theorem1_family, DiscreteFamily};
use crate::rng::{derive_seed, SplitMix64};

/// Posteriors below this count as zero when they would divide a weight.
pub const POSTERIOR_GUARD: f64 = 1e-12;

/// A map from x-support indices to y-support indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinitePredictor {
    pub map: Vec<usize>,
}

impl FinitePredictor {
    pub fn new(map: Vec<usize>) -> Self {
        Self { map }
    }

    /// Predictor from a value-level rule `x ↦ y`.
    pub fn from_fn(
        x_support: &[Vec<f64>],
        y_support: &[f64],
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let map = x_support
            .iter()
            .map(|x| {
                let y = f(x);
                y_support.iter().position(|&v| v == y).ok_or_else(|| {
                    Error::InvalidParameter(format!("predicted value {y} not in y support"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { map })
    }

    pub fn constant(nx: usize, y: usize) -> Self {
        Self { map: vec![y; nx] }
    }
}

/// `T(x, δ)` on a finite x support, with a finite pmf over δ that is
/// independent of everything else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteCorruption {
    pub name: String,
    pub t_support: Vec<Vec<f64>>,
    /// `[x][δ]` flattened; entries index `t_support`.
    map: Vec<usize>,
    pub delta_pmf: Vec<f64>,
}

impl FiniteCorruption {
    pub fn new(
        name: impl Into<String>,
        t_support: Vec<Vec<f64>>,
        map: Vec<Vec<usize>>,
        delta_pmf: Vec<f64>,
    ) -> Result<Self> {
        let nd = delta_pmf.len();
        if nd == 0 {
            return Err(Error::InvalidParameter("δ support is empty".into()));
        }
        if delta_pmf.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (delta_pmf.iter().sum::<f64>() - 1.0).abs() > NORM_TOL
        {
            return Err(Error::InvalidParameter("δ pmf must be a distribution".into()));
        }
        if map.iter().any(|row| row.len() != nd) {
            return Err(Error::Shape("every x needs one t per δ".into()));
        }
        let map: Vec<usize> = map.into_iter().flatten().collect();
        if map.iter().any(|&t| t >= t_support.len()) {
            return Err(Error::Shape("t index outside t support".into()));
        }
        Ok(Self {
            name: name.into(),
            t_support,
            map,
            delta_pmf,
        })
    }

    /// Builds the t support from a value-level rule `(x, δ) ↦ t`.
    pub fn randomized(
        name: impl Into<String>,
        x_support: &[Vec<f64>],
        delta_pmf: Vec<f64>,
        f: impl Fn(&[f64], usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut t_support: Vec<Vec<f64>> = Vec::new();
        let map = x_support
            .iter()
            .map(|x| {
                (0..delta_pmf.len())
                    .map(|d| {
                        let t = f(x, d);
                        match t_support.iter().position(|v| *v == t) {
                            Some(i) => i,
                            None => {
                                t_support.push(t);
                                t_support.len() - 1
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(name, t_support, map, delta_pmf)
    }

    pub fn deterministic(
        name: impl Into<String>,
        x_support: &[Vec<f64>],
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        Self::randomized(name, x_support, vec![1.0], |x, _| f(x))
    }

    /// Uniform δ over all permutations of the coordinates, in lexicographic
    /// order; `T(x, δ)_i = x_{δ(i)}`.
    pub fn coordinate_permutations(x_support: &[Vec<f64>]) -> Result<Self> {
        let d = x_support.first().map_or(0, Vec::len);
        let perms = permutations(d);
        let pmf = vec![1.0 / perms.len() as f64; perms.len()];
        Self::randomized("permute", x_support, pmf, |x, k| {
            perms[k].iter().map(|&i| x[i]).collect()
        })
    }

    /// Keeps the listed coordinates and zeroes the rest.
    pub fn keep_coordinates(x_support: &[Vec<f64>], keep: &[usize]) -> Result<Self> {
        Self::deterministic("mask", x_support, |x| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| if keep.contains(&i) { v } else { 0.0 })
                .collect()
        })
    }

    /// Maps everything to a single point.
    pub fn constant(x_support: &[Vec<f64>]) -> Result<Self> {
        Self::deterministic("constant", x_support, |_| vec![0.0])
    }

    pub fn identity(x_support: &[Vec<f64>]) -> Result<Self> {
        Self::deterministic("identity", x_support, |x| x.to_vec())
    }

    pub fn num_deltas(&self) -> usize {
        self.delta_pmf.len()
    }

    pub fn num_x(&self) -> usize {
        self.map.len() / self.delta_pmf.len()
    }

    #[inline]
    pub fn t(&self, x: usize, delta: usize) -> usize {
        self.map[x * self.delta_pmf.len() + delta]
    }

    fn check_against(&self, p: &JointTable) -> Result<()> {
        if self.num_x() != p.x_support.len() {
            return Err(Error::Shape(format!(
                "corruption defined on {} x values, table has {}",
                self.num_x(),
                p.x_support.len()
            )));
        }
        Ok(())
    }
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..left.len() {
            let v = left.remove(k);
            prefix.push(v);
            go(prefix, left, out);
            prefix.pop();
            left.insert(k, v);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..d).collect(), &mut out);
    out
}

/// `p(x | y, z)` as `[y][z][x]`, `None` where `p(y, z) = 0`.
fn x_given_yz(p: &JointTable) -> Vec<Vec<Option<Vec<f64>>>> {
    let (ny, nz, nx) = p.dims();
    let yz = p.marginal_yz();
    (0..ny)
        .map(|y| {
            (0..nz)
                .map(|z| {
                    (yz[y][z] > 0.0)
                        .then(|| (0..nx).map(|x| p.get(y, z, x) / yz[y][z]).collect())
                })
                .collect()
        })
        .collect()
}

/// `p⊥(y, z, x) = p(y) p(z) p(x | y, z)`.
///
/// `p(x | y, z)` is only identified where `p(y, z) > 0`; a cell with
/// `p(y) p(z) > 0` but `p(y, z) = 0` is a zero-mass error. Use
/// [`nuisance_randomize_family`] when the family structure supplies the
/// missing conditional.
pub fn nuisance_randomize(p: &JointTable) -> Result<JointTable> {
    let (ny, nz, nx) = p.dims();
    let (py, pz) = (p.marginal_y(), p.marginal_z());
    let cond = x_given_yz(p);
    let mut probs = vec![0.0; ny * nz * nx];
    for y in 0..ny {
        for z in 0..nz {
            let w = py[y] * pz[z];
            if w == 0.0 {
                continue;
            }
            let Some(c) = &cond[y][z] else {
                return Err(Error::ZeroMass(format!(
                    "p(x | y={}, z={}) is unidentified: p(y, z) = 0",
                    p.y_support[y], p.z_support[z]
                )));
            };
            for x in 0..nx {
                probs[p.flat(y, z, x)] = w * c[x];
            }
        }
    }
    JointTable::new(
        p.y_support.clone(),
        p.z_support.clone(),
        p.x_support.clone(),
        probs,
    )
}

/// `p⊥` for the family member at `param`, with
/// `p(x | y, z) = Σ_{x*} p(x* | y) p(x | z, x*)` taken from the family's
/// parameter-free factors, so it is defined for every `(y, z)`.
pub fn nuisance_randomize_family(fam: &DiscreteFamily, param: f64) -> Result<JointTable> {
    let member = fam.pmf(param)?;
    let (ny, nz, nx) = member.dims();
    let ns = fam.xstar_support.len();
    let (py, pz) = (member.marginal_y(), member.marginal_z());
    let mut probs = vec![0.0; ny * nz * nx];
    for y in 0..ny {
        let py_fam: f64 = fam.p_y_xstar[y].iter().sum();
        if py_fam == 0.0 {
            continue;
        }
        for z in 0..nz {
            for s in 0..ns {
                let w = py[y] * pz[z] * fam.p_y_xstar[y][s] / py_fam;
                if w == 0.0 {
                    continue;
                }
                for x in 0..nx {
                    probs[member.flat(y, z, x)] += w * fam.x_given(z, s, x);
                }
            }
        }
    }
    JointTable::new(
        member.y_support.clone(),
        member.z_support.clone(),
        member.x_support.clone(),
        probs,
    )
}

/// `p(y, t) = Σ_{z, x, δ} p(y, z, x) p(δ) [T(x, δ) = t]` as `[y][t]`.
pub fn corrupted_joint(p: &JointTable, t: &FiniteCorruption) -> Result<Vec<Vec<f64>>> {
    t.check_against(p)?;
    let (ny, _, nx) = p.dims();
    let yx = p.marginal_yx();
    let mut out = vec![vec![0.0; t.t_support.len()]; ny];
    for y in 0..ny {
        for x in 0..nx {
            for (d, &pd) in t.delta_pmf.iter().enumerate() {
                out[y][t.t(x, d)] += yx[y][x] * pd;
            }
        }
    }
    Ok(out)
}

/// Normalizes each column of a `[y][c]` joint into `p(y | c)`.
fn posterior_columns(joint: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
    let nc = joint.first().map_or(0, Vec::len);
    (0..nc)
        .map(|c| {
            let mass: f64 = joint.iter().map(|row| row[c]).sum();
            (mass > 0.0).then(|| joint.iter().map(|row| row[c] / mass).collect())
        })
        .collect()
}

/// Corruption-randomized measure
/// `p_T(y, z, x) = Σ_δ p(δ) · p(y) / p(y | T(x, δ)) · p(y, z, x)`.
///
/// The result has mass below 1 exactly when some label has zero posterior
/// at a corrupted value that other labels reach; it is returned as a
/// measure in that case (see [`JointTable::measure`]).
pub fn corruption_randomize(p: &JointTable, t: &FiniteCorruption) -> Result<JointTable> {
    let (ny, nz, nx) = p.dims();
    let post = posterior_columns(&corrupted_joint(p, t)?);
    let py = p.marginal_y();
    let mut probs = vec![0.0; ny * nz * nx];
    for y in 0..ny {
        for z in 0..nz {
            for x in 0..nx {
                let pyzx = p.get(y, z, x);
                if pyzx == 0.0 {
                    continue;
                }
                let mut w = 0.0;
                for (d, &pd) in t.delta_pmf.iter().enumerate() {
                    if pd == 0.0 {
                        continue;
                    }
                    let ti = t.t(x, d);
                    let q = post[ti].as_ref().map_or(0.0, |c| c[y]);
                    if q < POSTERIOR_GUARD {
                        return Err(Error::UndefinedWeight(format!(
                            "p(y={} | T={:?}) = {q:e} at a cell with positive mass",
                            p.y_support[y], t.t_support[ti]
                        )));
                    }
                    w += pd * py[y] / q;
                }
                probs[p.flat(y, z, x)] = w * pyzx;
            }
        }
    }
    JointTable::measure(
        p.y_support.clone(),
        p.z_support.clone(),
        p.x_support.clone(),
        probs,
    )
}

/// Exact expected 0-1 accuracy of `f` under `p`.
pub fn predictor_accuracy(p: &JointTable, f: &FinitePredictor) -> Result<f64> {
    let (ny, nz, nx) = p.dims();
    if f.map.len() != nx || f.map.iter().any(|&y| y >= ny) {
        return Err(Error::Shape("predictor does not match the table supports".into()));
    }
    Ok((0..nz)
        .flat_map(|z| (0..nx).map(move |x| (z, x)))
        .map(|(z, x)| p.get(f.map[x], z, x))
        .sum())
}

/// What the biased posterior conditions on.
#[derive(Clone, Copy, Debug)]
pub enum Conditioner<'a> {
    Nuisance,
    Corrupted(&'a FiniteCorruption),
}

/// Exact `p(y | c)` as `[c][y]`, over the z support or the t support.
pub fn biased_posterior(p: &JointTable, cond: Conditioner<'_>) -> Result<Vec<Vec<f64>>> {
    let (joint, support): (Vec<Vec<f64>>, &[Vec<f64>]) = match cond {
        Conditioner::Nuisance => {
            let yz = p.marginal_yz();
            return posterior_columns(&yz)
                .into_iter()
                .enumerate()
                .map(|(z, c)| {
                    c.ok_or_else(|| {
                        Error::ZeroMass(format!("p(z={}) = 0", p.z_support[z]))
                    })
                })
                .collect();
        }
        Conditioner::Corrupted(t) => (corrupted_joint(p, t)?, &t.t_support),
    };
    posterior_columns(&joint)
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::ZeroMass(format!("p(T={:?}) = 0", support[i]))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub epsilon: f64,
    pub m: f64,
    pub l1: f64,
    pub bound_holds: bool,
}

/// `ε² = E |p(y | T) − p(y | z)|²` and `m² = E p(y | T)⁻²`, both under
/// `p⊥ · p(δ)`, with `l1 = ‖p⊥(y, x) − p_T(y, x)‖₁` and the check
/// `l1 ≤ m·ε + 1e-9`.
pub fn prop1_quantities(p: &JointTable, t: &FiniteCorruption) -> Result<Prop1Report> {
    let perp = nuisance_randomize(p)?;
    let pt = corruption_randomize(p, t)?;
    prop1_from_parts(p, &perp, &pt, t)
}

fn prop1_from_parts(
    p: &JointTable,
    perp: &JointTable,
    pt: &JointTable,
    t: &FiniteCorruption,
) -> Result<Prop1Report> {
    let (ny, nz, nx) = p.dims();
    let post_t = posterior_columns(&corrupted_joint(p, t)?);
    let post_z = posterior_columns(&p.marginal_yz());
    let (mut e2, mut m2) = (0.0, 0.0);
    for y in 0..ny {
        for z in 0..nz {
            for x in 0..nx {
                let w = perp.get(y, z, x);
                if w == 0.0 {
                    continue;
                }
                let qz = post_z[z].as_ref().map_or(0.0, |c| c[y]);
                for (d, &pd) in t.delta_pmf.iter().enumerate() {
                    if pd == 0.0 {
                        continue;
                    }
                    let qt = post_t[t.t(x, d)].as_ref().map_or(0.0, |c| c[y]);
                    e2 += w * pd * (qt - qz).powi(2);
                    m2 += w * pd / (qt * qt);
                }
            }
        }
    }
    let (epsilon, m) = (e2.sqrt(), m2.sqrt());
    let l1 = perp.l1_yx(pt)?;
    let bound = if m.is_infinite() { f64::INFINITY } else { m * epsilon };
    Ok(Prop1Report {
        epsilon,
        m,
        l1,
        bound_holds: l1 <= bound + 1e-9,
    })
}

/// A variable of the extended joint over `(y, z, x, δ)`.
#[derive(Clone, Copy, Debug)]
pub enum Variable<'a> {
    Label,
    Nuisance,
    Covariate,
    Corrupted(&'a FiniteCorruption),
}

impl<'a> Variable<'a> {
    fn cardinality(&self, p: &JointTable) -> usize {
        let (ny, nz, nx) = p.dims();
        match self {
            Variable::Label => ny,
            Variable::Nuisance => nz,
            Variable::Covariate => nx,
            Variable::Corrupted(t) => t.t_support.len(),
        }
    }

    fn value(&self, y: usize, z: usize, x: usize, d: usize) -> usize {
        match self {
            Variable::Label => y,
            Variable::Nuisance => z,
            Variable::Covariate => x,
            Variable::Corrupted(t) => t.t(x, d),
        }
    }

    fn corruption(self) -> Option<&'a FiniteCorruption> {
        match self {
            Variable::Corrupted(t) => Some(t),
            _ => None,
        }
    }
}

/// `max |p(a, b | c) − p(a | c) p(b | c)|` over values with `p(c) > 0`.
///
/// All `Corrupted` variables share one δ, so they must be the same
/// corruption.
pub fn cond_indep_gap(
    p: &JointTable,
    a: Variable<'_>,
    b: Variable<'_>,
    c: Variable<'_>,
) -> Result<f64> {
    let ts: Vec<&FiniteCorruption> = [a, b, c].into_iter().filter_map(Variable::corruption).collect();
    for t in &ts {
        t.check_against(p)?;
        if **t != *ts[0] {
            return Err(Error::InvalidParameter(
                "all corrupted variables must share one corruption".into(),
            ));
        }
    }
    let delta: Vec<f64> = ts.first().map_or(vec![1.0], |t| t.delta_pmf.clone());
    let (na, nb, nc) = (a.cardinality(p), b.cardinality(p), c.cardinality(p));
    let mut abc = vec![0.0; na * nb * nc];
    let (ny, nz, nx) = p.dims();
    for y in 0..ny {
        for z in 0..nz {
            for x in 0..nx {
                let pyzx = p.get(y, z, x);
                if pyzx == 0.0 {
                    continue;
                }
                for (d, &pd) in delta.iter().enumerate() {
                    let (i, j, k) = (a.value(y, z, x, d), b.value(y, z, x, d), c.value(y, z, x, d));
                    abc[(k * na + i) * nb + j] += pyzx * pd;
                }
            }
        }
    }
    let mut gap: f64 = 0.0;
    for k in 0..nc {
        let block = &abc[k * na * nb..(k + 1) * na * nb];
        let pc: f64 = block.iter().sum();
        if pc <= 0.0 {
            continue;
        }
        let pa: Vec<f64> = (0..na).map(|i| block[i * nb..(i + 1) * nb].iter().sum::<f64>() / pc).collect();
        let pb: Vec<f64> = (0..nb).map(|j| (0..na).map(|i| block[i * nb + j]).sum::<f64>() / pc).collect();
        for i in 0..na {
            for j in 0..nb {
                gap = gap.max((block[i * nb + j] / pc - pa[i] * pb[j]).abs());
            }
        }
    }
    Ok(gap)
}

/// One row of the Theorem 1 enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorRow {
    pub index: usize,
    /// Predictions at x = (−1,−1), (−1,1), (1,−1), (1,1).
    pub outputs: [i8; 4],
    pub acc_rho0: f64,
    pub acc_rho1: f64,
    pub min: f64,
}

/// Predictor `r` of the enumeration: column `j` predicts −1 when bit
/// `3 − j` of `r` is set.
pub fn enumerated_predictor(r: usize) -> [i8; 4] {
    std::array::from_fn(|j| if r >> (3 - j) & 1 == 1 { -1 } else { 1 })
}

fn predictor_for(fam: &DiscreteFamily, outputs: [i8; 4]) -> Result<FinitePredictor> {
    let cols = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
    let mut map = vec![0; fam.x_support.len()];
    for (col, &o) in cols.iter().zip(&outputs) {
        let x = fam
            .x_index(col)
            .ok_or_else(|| Error::Shape(format!("x = {col:?} missing from support")))?;
        map[x] = fam
            .y_support
            .iter()
            .position(|&y| y == o as f64)
            .ok_or_else(|| Error::Shape("y support must be {−1, 1}".into()))?;
    }
    Ok(FinitePredictor::new(map))
}

/// All 16 predictors `{−1,1}² → {−1,1}` scored on `p_{1,0}` and `p_{1,1}`.
pub fn enumerate_16_predictors() -> Result<Vec<PredictorRow>> {
    let fam = theorem1_family(1)?;
    enumerate_16_predictors_on(&fam.pmf(0.0)?, &fam.pmf(1.0)?)
}

/// The same enumeration scored on two arbitrary tables over the
/// `theorem1_family` supports.
pub fn enumerate_16_predictors_on(p0: &JointTable, p1: &JointTable) -> Result<Vec<PredictorRow>> {
    let fam = theorem1_family(1)?;
    for p in [p0, p1] {
        if p.x_support != fam.x_support || p.y_support != fam.y_support {
            return Err(Error::Shape("tables must use the theorem1_family supports".into()));
        }
    }
    (0..16)
        .map(|r| {
            let outputs = enumerated_predictor(r);
            let f = predictor_for(&fam, outputs)?;
            let (a0, a1) = (predictor_accuracy(p0, &f)?, predictor_accuracy(p1, &f)?);
            Ok(PredictorRow {
                index: r,
                outputs,
                acc_rho0: a0,
                acc_rho1: a1,
                min: a0.min(a1),
            })
        })
        .collect()
}

/// Accuracy of enumerated predictor `r` on `theorem1_family(which)` at `rho`.
pub fn enumerated_accuracy(which: u8, rho: f64, r: usize) -> Result<f64> {
    let fam = theorem1_family(which)?;
    let f = predictor_for(&fam, enumerated_predictor(r))?;
    predictor_accuracy(&fam.pmf(rho)?, &f)
}

/// A random strictly positive `(y, z, x)` table with the given shape.
pub fn random_table(ny: usize, nz: usize, nx: usize, rng: &mut SplitMix64) -> Result<JointTable> {
    let weights = (0..ny * nz * nx).map(|_| 0.05 + rng.next_f64()).collect();
    JointTable::from_weights(
        (0..ny).map(|v| v as f64).collect(),
        (0..nz).map(|v| v as f64).collect(),
        (0..nx).map(|v| vec![v as f64]).collect(),
        weights,
    )
}

/// A random corruption on `nx` x values with up to 4 corrupted values and
/// up to 3 δ values.
pub fn random_corruption(nx: usize, rng: &mut SplitMix64) -> Result<FiniteCorruption> {
    let nt = 1 + rng.below(4) as usize;
    let nd = 1 + rng.below(3) as usize;
    let raw: Vec<f64> = (0..nd).map(|_| 0.05 + rng.next_f64()).collect();
    let total: f64 = raw.iter().sum();
    let mut pmf: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // keep the pmf summing to 1 to the last bit
    let head: f64 = pmf[..nd - 1].iter().sum();
    pmf[nd - 1] = 1.0 - head;
    let map = (0..nx)
        .map(|_| (0..nd).map(|_| rng.below(nt as u64) as usize).collect())
        .collect();
    FiniteCorruption::new(
        "random",
        (0..nt).map(|v| vec![v as f64]).collect(),
        map,
        pmf,
    )
}

/// Proposition 1 on `trials` random 2×2×4 tables with random corruptions.
/// Trial `i` draws from `derive_seed(seed, i, 0)`.
pub fn prop1_fuzz(trials: usize, seed: u64) -> Result<Vec<Prop1Report>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(derive_seed(seed, i as u64, 0));
            let p = random_table(2, 2, 4, &mut rng)?;
            let t = random_corruption(4, &mut rng)?;
            prop1_quantities(&p, &t)
        })
        .collect()
}

/// Proposition 1 for a family member, using the family's `p⊥`.
pub fn prop1_family(fam: &DiscreteFamily, param: f64, t: &FiniteCorruption) -> Result<Prop1Report> {
    let p = fam.pmf(param)?;
    let perp = nuisance_randomize_family(fam, param)?;
    let pt = corruption_randomize(&p, t)?;
    prop1_from_parts(&p, &perp, &pt, t)
}
