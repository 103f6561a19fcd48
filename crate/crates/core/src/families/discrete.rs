//! Finite nuisance-varying families used for exact checks.
//!
//! Every family factorizes as `p(y, x*) · p_param(z | y) · p(x | z, x*)`;
//! only the middle factor depends on the relationship parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::JointTable;
use crate::rng::SplitMix64;

/// How `p_param(z | y)` is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NuisanceModel {
    /// `z ~ R_param(y)`: equals `y` with probability `param`, `-y` otherwise.
    /// The z support must be the y support.
    SignFlip,
    /// `p(z_k | y) ∝ φ(z_k − param·y)` on the z grid, renormalized.
    DiscretizedNormal,
    /// `p(z_k | y) ∝ r·exp(−r·z_k)` with `r = softplus(param·(2y − 1))`,
    /// renormalized on the z grid.
    DiscretizedExponential,
}

pub(crate) fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteFamily {
    pub name: String,
    pub y_support: Vec<f64>,
    pub z_support: Vec<f64>,
    pub xstar_support: Vec<f64>,
    pub x_support: Vec<Vec<f64>>,
    /// `[y][x*]`, independent of the parameter.
    pub p_y_xstar: Vec<Vec<f64>>,
    /// `p(x | z, x*)` stored `[z][x*][x]`, independent of the parameter.
    x_given_z_xstar: Vec<f64>,
    pub nuisance: NuisanceModel,
    /// x index → x* index (the semantic map `e(x)`).
    semantic: Vec<usize>,
    /// Relationship parameter the family was built for.
    pub default_param: f64,
}

impl DiscreteFamily {
    /// `p_param(z | y)` as `[y][z]`.
    pub fn z_given_y(&self, param: f64) -> Vec<Vec<f64>> {
        let nz = self.z_support.len();
        self.y_support
            .iter()
            .map(|&y| {
                let w: Vec<f64> = match self.nuisance {
                    NuisanceModel::SignFlip => self
                        .z_support
                        .iter()
                        .map(|&z| if z == y { param } else { 1.0 - param })
                        .collect(),
                    NuisanceModel::DiscretizedNormal => self
                        .z_support
                        .iter()
                        .map(|&z| (-0.5 * (z - param * y).powi(2)).exp())
                        .collect(),
                    NuisanceModel::DiscretizedExponential => {
                        let r = softplus(param * (2.0 * y - 1.0));
                        self.z_support.iter().map(|&z| r * (-r * z).exp()).collect()
                    }
                };
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    w.iter().map(|v| v / total).collect()
                } else {
                    vec![1.0 / nz as f64; nz]
                }
            })
            .collect()
    }

    #[inline]
    pub fn x_given(&self, z: usize, xstar: usize, x: usize) -> f64 {
        let (ns, nx) = (self.xstar_support.len(), self.x_support.len());
        self.x_given_z_xstar[(z * ns + xstar) * nx + x]
    }

    /// Joint over `(y, z, x*, x)`, stored `[y][z][x*][x]`.
    pub fn full_joint(&self, param: f64) -> Vec<f64> {
        let (ny, nz, ns, nx) = (
            self.y_support.len(),
            self.z_support.len(),
            self.xstar_support.len(),
            self.x_support.len(),
        );
        let zy = self.z_given_y(param);
        let mut out = vec![0.0; ny * nz * ns * nx];
        for y in 0..ny {
            for z in 0..nz {
                for s in 0..ns {
                    let base = self.p_y_xstar[y][s] * zy[y][z];
                    if base == 0.0 {
                        continue;
                    }
                    for x in 0..nx {
                        out[((y * nz + z) * ns + s) * nx + x] = base * self.x_given(z, s, x);
                    }
                }
            }
        }
        out
    }

    /// The member of the family at `param`, as a `(y, z, x)` table.
    pub fn pmf(&self, param: f64) -> Result<JointTable> {
        let (ny, nz, ns, nx) = (
            self.y_support.len(),
            self.z_support.len(),
            self.xstar_support.len(),
            self.x_support.len(),
        );
        let full = self.full_joint(param);
        let mut probs = vec![0.0; ny * nz * nx];
        for y in 0..ny {
            for z in 0..nz {
                for s in 0..ns {
                    for x in 0..nx {
                        probs[(y * nz + z) * nx + x] += full[((y * nz + z) * ns + s) * nx + x];
                    }
                }
            }
        }
        JointTable::new(
            self.y_support.clone(),
            self.z_support.clone(),
            self.x_support.clone(),
            probs,
        )
    }

    /// x* index of x index `x`.
    pub fn semantic_index(&self, x: usize) -> usize {
        self.semantic[x]
    }

    /// x* value of x index `x`.
    pub fn semantic_value(&self, x: usize) -> f64 {
        self.xstar_support[self.semantic[x]]
    }

    /// Index of `value` in the x support.
    pub fn x_index(&self, value: &[f64]) -> Option<usize> {
        self.x_support.iter().position(|v| v.as_slice() == value)
    }

    /// `n` i.i.d. draws of `(y, z, x)` indices from the member at `param`.
    pub fn sample(&self, param: f64, n: usize, seed: u64) -> Result<Vec<(usize, usize, usize)>> {
        let table = self.pmf(param)?;
        let mut cdf = Vec::with_capacity(table.probs().len());
        let mut acc = 0.0;
        for &p in table.probs() {
            acc += p;
            cdf.push(acc);
        }
        let last = table.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut rng = SplitMix64::new(seed);
        Ok((0..n)
            .map(|_| {
                let u = rng.next_f64();
                let i = cdf.partition_point(|&c| c <= u).min(last);
                table.unflatten(i)
            })
            .collect())
    }
}

/// Builder that assigns x-support indices on first sight.
struct SupportBuilder {
    points: Vec<Vec<f64>>,
}

impl SupportBuilder {
    fn index(&mut self, v: Vec<f64>) -> usize {
        match self.points.iter().position(|p| *p == v) {
            Some(i) => i,
            None => {
                self.points.push(v);
                self.points.len() - 1
            }
        }
    }
}

/// Assembles a family from a deterministic or randomized placement
/// `place(z_idx, xstar_idx) -> [(x value, prob)]`.
fn assemble(
    name: &str,
    y_support: Vec<f64>,
    z_support: Vec<f64>,
    xstar_support: Vec<f64>,
    p_y_xstar: Vec<Vec<f64>>,
    nuisance: NuisanceModel,
    default_param: f64,
    place: impl Fn(usize, usize) -> Vec<(Vec<f64>, f64)>,
) -> DiscreteFamily {
    let (nz, ns) = (z_support.len(), xstar_support.len());
    let mut support = SupportBuilder { points: Vec::new() };
    let mut entries = Vec::new();
    let mut semantic_of = Vec::new();
    for z in 0..nz {
        for s in 0..ns {
            for (v, p) in place(z, s) {
                let x = support.index(v);
                if x == semantic_of.len() {
                    semantic_of.push(s);
                }
                entries.push((z, s, x, p));
            }
        }
    }
    let nx = support.points.len();
    let mut x_given = vec![0.0; nz * ns * nx];
    for (z, s, x, p) in entries {
        x_given[(z * ns + s) * nx + x] += p;
    }
    DiscreteFamily {
        name: name.to_string(),
        y_support,
        z_support,
        xstar_support,
        x_support: support.points,
        p_y_xstar,
        x_given_z_xstar: x_given,
        nuisance,
        semantic: semantic_of,
        default_param,
    }
}

/// The two sign-flip families used to show that robustness across a family
/// needs assumptions beyond the training data.
///
/// `y ~ R_0.5(1)`, `z ~ R_ρ(y)`, `x* ~ R_0.9(y)`; family 1 places
/// `x = [x*, z]` and family 2 `x = [z, x*]`. The x support is ordered
/// `(-1,-1), (-1,1), (1,-1), (1,1)`.
pub fn theorem1_family(which: u8) -> Result<DiscreteFamily> {
    if which != 1 && which != 2 {
        return Err(Error::InvalidParameter(format!("family must be 1 or 2, got {which}")));
    }
    let signs = vec![-1.0, 1.0];
    // p(y, x*) = 0.5 · R_0.9, with 1 − 0.9 computed as the nuisance factor
    // computes it so that the two families' (y, x) tables agree bit for bit
    let p_y_xstar = signs
        .iter()
        .map(|&y| signs.iter().map(|&s| 0.5 * if s == y { 0.9 } else { 1.0 - 0.9 }).collect())
        .collect();
    let mut fam = assemble(
        &format!("theorem1-{which}"),
        signs.clone(),
        signs.clone(),
        signs.clone(),
        p_y_xstar,
        NuisanceModel::SignFlip,
        0.9,
        |z, s| {
            let (zv, sv) = ([-1.0, 1.0][z], [-1.0, 1.0][s]);
            let x = if which == 1 { vec![sv, zv] } else { vec![zv, sv] };
            vec![(x, 1.0)]
        },
    );
    reorder_x(&mut fam, |a, b| a.partial_cmp(b).unwrap());
    Ok(fam)
}

/// Sorts the x support with `cmp`, permuting the dependent tables.
fn reorder_x(fam: &mut DiscreteFamily, cmp: impl Fn(&Vec<f64>, &Vec<f64>) -> std::cmp::Ordering) {
    let nx = fam.x_support.len();
    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by(|&a, &b| cmp(&fam.x_support[a], &fam.x_support[b]));
    let (nz, ns) = (fam.z_support.len(), fam.xstar_support.len());
    let mut x_given = vec![0.0; nz * ns * nx];
    for z in 0..nz {
        for s in 0..ns {
            for (new, &old) in order.iter().enumerate() {
                x_given[(z * ns + s) * nx + new] = fam.x_given_z_xstar[(z * ns + s) * nx + old];
            }
        }
    }
    fam.x_given_z_xstar = x_given;
    fam.semantic = order.iter().map(|&o| fam.semantic[o]).collect();
    fam.x_support = order.iter().map(|&o| fam.x_support[o].clone()).collect();
}

/// Symmetric midpoint grid of `n` points on `[-half_width, half_width]`.
fn symmetric_grid(half_width: f64, n: usize) -> Vec<f64> {
    let step = 2.0 * half_width / n as f64;
    (0..n).map(|k| -half_width + (k as f64 + 0.5) * step).collect()
}

/// Three coordinates, one of them negated; `y` picks which.
///
/// `y` uniform on `{1, 2, 3}`, `z` on a symmetric grid of `z_grid_size`
/// points spanning `±(3|D| + 4)` with `p_D(z | y)` the renormalized
/// `N(D·y, 1)` density, `x* = y`, and `x = [z, z, z]` with coordinate `y`
/// negated. The grid size must be even so that `z = 0` is never a support
/// point (every x then has a well-defined negated coordinate).
pub fn permutation_family_discrete(d: f64, z_grid_size: usize) -> Result<DiscreteFamily> {
    if z_grid_size < 2 || z_grid_size % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "z grid size must be even and >= 2, got {z_grid_size}"
        )));
    }
    if !d.is_finite() {
        return Err(Error::InvalidParameter("D must be finite".into()));
    }
    let grid = symmetric_grid(3.0 * d.abs() + 4.0, z_grid_size);
    let labels = vec![1.0, 2.0, 3.0];
    let p_y_xstar = (0..3)
        .map(|y| (0..3).map(|s| if s == y { 1.0 / 3.0 } else { 0.0 }).collect())
        .collect();
    let g = grid.clone();
    Ok(assemble(
        "permutation",
        labels.clone(),
        grid,
        labels,
        p_y_xstar,
        NuisanceModel::DiscretizedNormal,
        d,
        move |z, s| {
            let mut x = vec![g[z]; 3];
            x[s] = -g[z];
            vec![(x, 1.0)]
        },
    ))
}

/// Two coordinates whose sign pattern encodes an XOR.
///
/// `a, b` uniform bits, `y = a ⊕ b`, `z` on the positive midpoint grid of
/// `z_grid_size` points over `[0, 8 / r_min]` with `r_min` the smaller of
/// the two rates `softplus(±D)`, `p_D(z | y)` the renormalized exponential
/// with rate `softplus(D(2y − 1))`, and `x = [(2a − 1)z, (2b − 1)z]`.
/// The semantic feature is `y` itself.
pub fn xor_family_discrete(d: f64, z_grid_size: usize) -> Result<DiscreteFamily> {
    if z_grid_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "z grid size must be >= 2, got {z_grid_size}"
        )));
    }
    if !d.is_finite() {
        return Err(Error::InvalidParameter("D must be finite".into()));
    }
    let r_min = softplus(-d.abs());
    let upper = 8.0 / r_min;
    let step = upper / z_grid_size as f64;
    let grid: Vec<f64> = (0..z_grid_size).map(|k| (k as f64 + 0.5) * step).collect();
    let labels = vec![0.0, 1.0];
    let p_y_xstar = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
    let g = grid.clone();
    Ok(assemble(
        "xor",
        labels.clone(),
        grid,
        labels,
        p_y_xstar,
        NuisanceModel::DiscretizedExponential,
        d,
        move |z, s| {
            let zv = g[z];
            [(0u8, 0u8), (0, 1), (1, 0), (1, 1)]
                .into_iter()
                .filter(|(a, b)| (a ^ b) as usize == s)
                .map(|(a, b)| {
                    (
                        vec![(2.0 * a as f64 - 1.0) * zv, (2.0 * b as f64 - 1.0) * zv],
                        0.5,
                    )
                })
                .collect()
        },
    ))
}
