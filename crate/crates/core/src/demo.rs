//! Two variables whose correlation is lowered by group offsets.
//!
//! `x1` is standard normal. `x2 = x1 + s * c_g`, where `c_g` is a fixed offset
//! for the contiguous group `g` an individual belongs to. Within each group the
//! two variables are perfectly correlated, so the scatter falls on parallel
//! lines. The scale `s` is chosen by bisection so that the overall correlation
//! hits a target. The joint distribution is then a mixture of shifted
//! degenerate normals, which the kurtosis tests flag as platykurtic.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mvnkurt::{zdiff_correlation, ZDiff};

/// Default offsets for `groups` groups: `g - (groups - 1) / 2`.
pub fn centered_offsets(groups: usize) -> Vec<f64> {
    let mid = (groups as f64 - 1.0) / 2.0;
    (0..groups).map(|g| g as f64 - mid).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLines {
    /// Group index of each individual.
    pub group: Vec<usize>,
    pub z1: DVector<f64>,
    pub z2: DVector<f64>,
    /// Offset scale found by bisection.
    pub scale: f64,
    pub zdiff: ZDiff,
}

impl GroupLines {
    /// Achieved correlation.
    pub fn r(&self) -> f64 {
        self.zdiff.rho
    }

    /// `n x 2` matrix of the two variables.
    pub fn cases_by_variables(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[self.z1.clone(), self.z2.clone()])
    }
}

fn pearson(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let a = a.add_scalar(-a.mean());
    let b = b.add_scalar(-b.mean());
    a.dot(&b) / (a.norm() * b.norm())
}

fn standardize(v: &DVector<f64>) -> DVector<f64> {
    let c = v.add_scalar(-v.mean());
    let sd = (c.norm_squared() / v.len() as f64).sqrt();
    c / sd
}

/// Builds the demo data with the default centered offsets.
pub fn group_lines(n: usize, groups: usize, target_r: f64, seed: u64) -> Result<GroupLines> {
    group_lines_with_offsets(n, &centered_offsets(groups), target_r, seed)
}

/// Builds the demo data with caller-supplied base offsets, one per group.
pub fn group_lines_with_offsets(n: usize, offsets: &[f64], target_r: f64, seed: u64) -> Result<GroupLines> {
    let groups = offsets.len();
    if groups < 2 {
        return Err(Error::InvalidArgument {
            arg: "groups",
            reason: format!("need at least 2 groups, got {groups}"),
        });
    }
    if n < 2 * groups {
        return Err(Error::TooFewCases {
            needed: 2 * groups,
            got: n,
        });
    }
    if !(target_r > -1.0 && target_r < 1.0) {
        return Err(Error::InvalidArgument {
            arg: "target_r",
            reason: format!("{target_r} is outside (-1, 1)"),
        });
    }
    let spread = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - offsets.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread > 0.0) {
        return Err(Error::Infeasible(
            "all group offsets are identical, so the correlation stays at 1".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let group: Vec<usize> = (0..n).map(|i| i * groups / n).collect();
    let c = DVector::from_fn(n, |i, _| offsets[group[i]]);
    let x2 = |s: f64| &x1 + &c * s;
    let r_at = |s: f64| pearson(&x1, &x2(s));

    // r(s) falls from 1 towards corr(x1, c) as s grows.
    let limit = pearson(&x1, &c);
    if target_r <= limit + 1e-9 {
        return Err(Error::Infeasible(format!(
            "target r = {target_r} is below the reachable limit {limit:.4}"
        )));
    }
    let mut hi = 1.0;
    while r_at(hi) > target_r {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Infeasible(format!("target r = {target_r} not reached")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r_at(mid) > target_r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    let scale = 0.5 * (lo + hi);
    let z1 = standardize(&x1);
    let z2 = standardize(&x2(scale));
    let zdiff = zdiff_correlation(&z1, &z2)?;
    Ok(GroupLines {
        group,
        z1,
        z2,
        scale,
        zdiff,
    })
}
