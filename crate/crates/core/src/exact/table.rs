use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for every table.
pub const NORM_TOL: f64 = 1e-12;

/// Dense probability table over `(y, z, x)`, stored `[y][z][x]`.
///
/// A `(y, x)` table is represented with a single-point z support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub y_support: Vec<f64>,
    pub z_support: Vec<f64>,
    pub x_support: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(
        y_support: Vec<f64>,
        z_support: Vec<f64>,
        x_support: Vec<Vec<f64>>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let t = Self {
            y_support,
            z_support,
            x_support,
            probs,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a table from non-negative weights, dividing by their total.
    pub fn from_weights(
        y_support: Vec<f64>,
        z_support: Vec<f64>,
        x_support: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter("weights must have positive finite total".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(y_support, z_support, x_support, probs)
    }

    /// A sub-normalized measure on the same supports (total mass at most 1).
    ///
    /// The reweighted display behind `corruption_randomize` loses mass when a
    /// label has zero posterior at a reachable corrupted value; such results
    /// are kept as measures rather than silently renormalized.
    pub fn measure(
        y_support: Vec<f64>,
        z_support: Vec<f64>,
        x_support: Vec<Vec<f64>>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let t = Self {
            y_support,
            z_support,
            x_support,
            probs,
        };
        t.validate_cells()?;
        let total = t.total();
        if total > 1.0 + NORM_TOL {
            return Err(Error::InvalidParameter(format!("measure has mass {total} > 1")));
        }
        Ok(t)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= NORM_TOL
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_cells()?;
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("table sums to {total}, not 1")));
        }
        Ok(())
    }

    fn validate_cells(&self) -> Result<()> {
        let (ny, nz, nx) = self.dims();
        if self.probs.len() != ny * nz * nx {
            return Err(Error::Shape(format!(
                "table needs {} entries, has {}",
                ny * nz * nx,
                self.probs.len()
            )));
        }
        if let Some((i, p)) = self
            .probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            let (y, z, x) = self.unflatten(i);
            return Err(Error::InvalidParameter(format!(
                "cell (y={y}, z={z}, x={x}) has invalid probability {p}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.y_support.len(), self.z_support.len(), self.x_support.len())
    }

    #[inline]
    pub fn flat(&self, y: usize, z: usize, x: usize) -> usize {
        let (_, nz, nx) = self.dims();
        (y * nz + z) * nx + x
    }

    pub fn unflatten(&self, i: usize) -> (usize, usize, usize) {
        let (_, nz, nx) = self.dims();
        (i / (nz * nx), (i / nx) % nz, i % nx)
    }

    #[inline]
    pub fn get(&self, y: usize, z: usize, x: usize) -> f64 {
        self.probs[self.flat(y, z, x)]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mutable access for building negative controls in tests and fixtures.
    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let (ny, nz, nx) = self.dims();
        (0..ny)
            .map(|y| self.probs[y * nz * nx..(y + 1) * nz * nx].iter().sum())
            .collect()
    }

    pub fn marginal_z(&self) -> Vec<f64> {
        let (ny, nz, _) = self.dims();
        let yz = self.marginal_yz();
        (0..nz).map(|z| (0..ny).map(|y| yz[y][z]).sum()).collect()
    }

    /// `[y][z]`
    pub fn marginal_yz(&self) -> Vec<Vec<f64>> {
        let (ny, nz, nx) = self.dims();
        (0..ny)
            .map(|y| {
                (0..nz)
                    .map(|z| {
                        let s = self.flat(y, z, 0);
                        self.probs[s..s + nx].iter().sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// `[y][x]`
    pub fn marginal_yx(&self) -> Vec<Vec<f64>> {
        let (ny, nz, nx) = self.dims();
        (0..ny)
            .map(|y| {
                (0..nx)
                    .map(|x| (0..nz).map(|z| self.get(y, z, x)).sum())
                    .collect()
            })
            .collect()
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        let yx = self.marginal_yx();
        (0..self.x_support.len())
            .map(|x| yx.iter().map(|row| row[x]).sum())
            .collect()
    }

    /// Sum over z, as a table with a single z point.
    pub fn to_yx(&self) -> JointTable {
        let probs = self.marginal_yx().into_iter().flatten().collect();
        JointTable {
            y_support: self.y_support.clone(),
            z_support: vec![0.0],
            x_support: self.x_support.clone(),
            probs,
        }
    }

    /// `‖p(y, x) − q(y, x)‖₁` over the `(y, x)` marginals.
    pub fn l1_yx(&self, other: &JointTable) -> Result<f64> {
        if self.y_support.len() != other.y_support.len()
            || self.x_support.len() != other.x_support.len()
        {
            return Err(Error::Shape("tables have different (y, x) supports".into()));
        }
        let a = self.marginal_yx();
        let b = other.marginal_yx();
        Ok(a.iter()
            .zip(&b)
            .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| (p - q).abs()))
            .sum())
    }

    /// `‖p − q‖₁` over the full `(y, z, x)` tables.
    pub fn l1(&self, other: &JointTable) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Shape("tables have different shapes".into()));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum())
    }

    /// Largest entrywise difference, with the offending `(y, z, x)` cell.
    pub fn max_abs_diff(&self, other: &JointTable) -> Result<(f64, (usize, usize, usize))> {
        if self.dims() != other.dims() {
            return Err(Error::Shape("tables have different shapes".into()));
        }
        let (i, d) = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .enumerate()
            .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        Ok((d, self.unflatten(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> JointTable {
        JointTable::from_weights(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            (1..=12).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn marginals_are_consistent() {
        let t = small();
        assert!((t.total() - 1.0).abs() < 1e-15);
        let my: f64 = t.marginal_y().iter().sum();
        let mz: f64 = t.marginal_z().iter().sum();
        let mx: f64 = t.marginal_x().iter().sum();
        for m in [my, mz, mx] {
            assert!((m - 1.0).abs() < 1e-14);
        }
        assert!((t.get(1, 0, 2) - 9.0 / 78.0).abs() < 1e-15);
        assert_eq!(t.unflatten(t.flat(1, 1, 2)), (1, 1, 2));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(JointTable::new(vec![0.0], vec![0.0], vec![vec![0.0]], vec![0.5]).is_err());
        assert!(JointTable::new(vec![0.0], vec![0.0], vec![vec![0.0], vec![1.0]], vec![1.5, -0.5])
            .is_err());
        assert!(JointTable::new(vec![0.0], vec![0.0], vec![vec![0.0]], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn to_yx_preserves_marginal() {
        let t = small();
        let yx = t.to_yx();
        assert_eq!(yx.dims(), (2, 1, 3));
        assert!(t.l1_yx(&yx).unwrap() < 1e-15);
    }
}
