//! R-factor extraction: Pearson correlations, squared multiple correlations,
//! iterated principal-axis factoring and orthogonal Procrustes rotation.

use nalgebra::{DMatrix, DVector};

use crate::datagen::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, sym_eigen_desc};

/// Pearson correlations between the rows of a `variables x cases` matrix.
pub fn correlation_matrix(data: &DataMatrix) -> Result<DMatrix<f64>> {
    correlate_rows(data.values())
}

pub(crate) fn correlate_rows(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, n) = values.shape();
    if n < 3 {
        return Err(Error::TooFewCases { needed: 3, got: n });
    }
    let mut z = values.clone();
    for (index, mut row) in z.row_iter_mut().enumerate() {
        let mean = row.sum() / n as f64;
        row.add_scalar_mut(-mean);
        let norm = row.norm();
        if !(norm > 0.0) || norm <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ConstantVariable { index });
        }
        row /= norm;
    }
    let mut r = &z * z.transpose();
    for i in 0..p {
        r[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let v = r[(i, j)].clamp(-1.0, 1.0);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

/// Initial communality estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Smc {
    pub values: DVector<f64>,
    /// A `1e-8` ridge was added because `R` was ill-conditioned.
    pub ridged: bool,
}

const RIDGE: f64 = 1e-8;
const MAX_CONDITION: f64 = 1e12;

/// Squared multiple correlations `1 - 1 / (R^-1)_jj`.
pub fn smc_communalities(r: &DMatrix<f64>) -> Result<Smc> {
    let (vals, _) = sym_eigen_desc(r);
    let largest = vals.max();
    let smallest = vals.min();
    let ridged = smallest <= 0.0 || largest / smallest > MAX_CONDITION;
    let mut m = r.clone();
    if ridged {
        for j in 0..m.nrows() {
            m[(j, j)] += RIDGE;
        }
    }
    let inv = m.cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    let values = DVector::from_iterator(
        r.nrows(),
        (0..r.nrows()).map(|j| (1.0 - 1.0 / inv[(j, j)]).clamp(0.0, 1.0 - f64::EPSILON)),
    );
    Ok(Smc { values, ridged })
}

/// Principal-axis factoring settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PafOptions {
    /// Stop when the largest communality change falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PafOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSolution {
    /// `p x q`, columns by descending eigenvalue.
    pub loadings: DMatrix<f64>,
    pub communalities: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some communality exceeded 1 and was clamped.
    pub heywood_adjusted: bool,
    /// A negative eigenvalue among the leading `q` was clamped to 0.
    pub eigen_clamped: bool,
    pub smc_ridged: bool,
}

/// Iterated principal-axis factoring of a correlation matrix, starting from SMCs.
pub fn principal_axis(r: &DMatrix<f64>, q: usize, opts: PafOptions) -> Result<FactorSolution> {
    let p = r.nrows();
    if r.ncols() != p {
        return Err(Error::shape("principal_axis", (p, p), r.shape()));
    }
    if q == 0 || q >= p {
        return Err(Error::InvalidArgument {
            arg: "q",
            reason: format!("need 1 <= q < p, got q = {q}, p = {p}"),
        });
    }
    let asym = max_asymmetry(r);
    if asym > 1e-10 {
        return Err(Error::NonSymmetric(asym));
    }

    let smc = smc_communalities(r)?;
    let mut h = smc.values;
    let mut reduced = r.clone();
    let mut loadings = DMatrix::zeros(p, q);
    let mut iterations = 0;
    let mut converged = false;
    let mut heywood_adjusted = false;
    let mut eigen_clamped = false;

    while iterations < opts.max_iter {
        iterations += 1;
        reduced.set_diagonal(&h);
        let (vals, vecs) = sym_eigen_desc(&reduced);
        for k in 0..q {
            let mut ev = vals[k];
            if ev < 0.0 {
                ev = 0.0;
                eigen_clamped = true;
            }
            let scale = ev.sqrt();
            loadings.set_column(k, &(vecs.column(k) * scale));
        }
        let mut next = DVector::from_iterator(p, loadings.row_iter().map(|row| row.norm_squared()));
        for v in next.iter_mut() {
            if *v > 1.0 {
                *v = 1.0;
                heywood_adjusted = true;
            }
        }
        let change = (&next - &h).abs().max();
        h = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    fix_column_signs(&mut loadings);
    Ok(FactorSolution {
        loadings,
        communalities: h,
        iterations,
        converged,
        heywood_adjusted,
        eigen_clamped,
        smc_ridged: smc.ridged,
    })
}

/// Flips columns so each column's largest-magnitude entry is positive.
fn fix_column_signs(loadings: &mut DMatrix<f64>) {
    for mut col in loadings.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationResult {
    /// `q x q` orthogonal rotation.
    pub rotation: DMatrix<f64>,
    /// `loadings * rotation`
    pub rotated: DMatrix<f64>,
    /// `||loadings * rotation - target||_F`
    pub residual_frobenius: f64,
    /// The cross-product `loadings' target` was rank deficient.
    pub degenerate: bool,
}

/// Orthogonal rotation of `loadings` towards `target`: `T = U V'` from the
/// SVD `loadings' target = U S V'`.
pub fn orthogonal_target_rotation(loadings: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<RotationResult> {
    if loadings.shape() != target.shape() {
        return Err(Error::shape(
            "orthogonal_target_rotation",
            target.shape(),
            loadings.shape(),
        ));
    }
    if loadings.ncols() == 0 {
        return Err(Error::InvalidArgument {
            arg: "loadings",
            reason: "need at least one factor".into(),
        });
    }
    let cross = loadings.transpose() * target;
    let svd = cross.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let rotation = u * v_t;
    let s = &svd.singular_values;
    let degenerate = s.min() <= 1e-12 * s.max().max(f64::MIN_POSITIVE);
    let rotated = loadings * &rotation;
    let residual_frobenius = (&rotated - target).norm();
    Ok(RotationResult {
        rotation,
        rotated,
        residual_frobenius,
        degenerate,
    })
}
