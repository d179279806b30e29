//! Multivariate kurtosis tests used to screen data for Q-factor variance.
//!
//! Q-factors add group-specific profiles to the observed variables, which
//! shows up as platykurtic (flatter than normal) multivariate distributions.
//! All functions take a `cases x variables` matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KurtosisTest {
    Small,
    Srivastava,
    Mardia,
}

impl KurtosisTest {
    pub const ALL: [KurtosisTest; 3] = [KurtosisTest::Small, KurtosisTest::Srivastava, KurtosisTest::Mardia];

    pub fn name(self) -> &'static str {
        match self {
            KurtosisTest::Small => "small",
            KurtosisTest::Srivastava => "srivastava",
            KurtosisTest::Mardia => "mardia",
        }
    }
}

impl fmt::Display for KurtosisTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Which tail(s) of a normal reference distribution a p-value uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Only platykurtic departures (negative z) count.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtosisReport {
    pub test: KurtosisTest,
    /// `b_{2,p}` (Mardia), `b_2` (Srivastava) or `Q_2` (Small).
    pub statistic: f64,
    /// Normal deviate for Mardia and Srivastava; `Q_2` itself for Small.
    pub standardized: f64,
    /// Chi-square degrees of freedom (Small only).
    pub df: Option<usize>,
    pub p_value: f64,
    pub two_sided: bool,
}

impl KurtosisReport {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }

    /// p-value under the requested sidedness. Small's chi-square test is
    /// always upper-tailed and ignores the argument.
    pub fn p_value_for(&self, sidedness: Sidedness) -> f64 {
        match (self.df, sidedness) {
            (Some(_), _) | (None, Sidedness::TwoSided) => self.p_value,
            (None, Sidedness::Lower) => std_normal().cdf(self.standardized),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `2 * P(Z > |z|)`
pub fn two_sided_normal_p(z: f64) -> f64 {
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

/// Standardized Mardia kurtosis, uncorrected large-sample form.
pub fn mardia_z(b2p: f64, n: usize, p: usize) -> f64 {
    let k = (p * (p + 2)) as f64;
    (b2p - k) / (8.0 * k / n as f64).sqrt()
}

/// Standardized Srivastava kurtosis.
pub fn srivastava_z(b2: f64, n: usize, p: usize) -> f64 {
    ((n * p) as f64 / 24.0).sqrt() * (b2 - 3.0)
}

fn centered_columns(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows() as f64;
    let mut x = data.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    x
}

/// Covariance with divisor `n`.
fn mle_covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    centered.transpose() * centered / centered.nrows() as f64
}

/// Mardia's multivariate kurtosis `b_{2,p} = mean_i d_i^2` with `d_i` the
/// squared Mahalanobis distance under the `n`-divisor covariance.
pub fn mardia_kurtosis(data: &DMatrix<f64>) -> Result<KurtosisReport> {
    let (n, p) = data.shape();
    if p == 0 {
        return Err(Error::InvalidArgument {
            arg: "data",
            reason: "no variables".into(),
        });
    }
    if n <= p + 1 {
        return Err(Error::TooFewCases { needed: p + 2, got: n });
    }
    let x = centered_columns(data);
    let chol = mle_covariance(&x).cholesky().ok_or(Error::SingularCovariance)?;
    // Solving L y = x_i gives d_i = |y|^2.
    let y = chol
        .l()
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularCovariance)?;
    let b2p = y.column_iter().map(|c| c.norm_squared().powi(2)).sum::<f64>() / n as f64;
    let z = mardia_z(b2p, n, p);
    Ok(KurtosisReport {
        test: KurtosisTest::Mardia,
        statistic: b2p,
        standardized: z,
        df: None,
        p_value: two_sided_normal_p(z),
        two_sided: true,
    })
}

/// Srivastava's kurtosis: average standardized fourth moment of the
/// principal components.
pub fn srivastava_kurtosis(data: &DMatrix<f64>) -> Result<KurtosisReport> {
    let (n, p) = data.shape();
    if p == 0 {
        return Err(Error::InvalidArgument {
            arg: "data",
            reason: "no variables".into(),
        });
    }
    if n <= p {
        return Err(Error::TooFewCases { needed: p + 1, got: n });
    }
    let x = centered_columns(data);
    let s = mle_covariance(&x);
    let (vals, vecs) = sym_eigen_desc(&s);
    let floor = vals.max().abs() * 1e-12;
    if let Some(&bad) = vals.iter().find(|&&v| v <= floor) {
        return Err(Error::ZeroEigenvalue(bad));
    }
    let y = &x * &vecs;
    let b2 = y
        .column_iter()
        .zip(vals.iter())
        .map(|(col, lam)| col.iter().map(|v| v.powi(4)).sum::<f64>() / (lam * lam))
        .sum::<f64>()
        / (n * p) as f64;
    let z = srivastava_z(b2, n, p);
    Ok(KurtosisReport {
        test: KurtosisTest::Srivastava,
        statistic: b2,
        standardized: z,
        df: None,
        p_value: two_sided_normal_p(z),
        two_sided: true,
    })
}

/// Anscombe-Glynn normalizing transformation of a univariate kurtosis
/// `b2 = m4 / m2^2` computed from `n` cases.
pub fn anscombe_glynn_z(b2: f64, n: usize) -> f64 {
    let n = n as f64;
    let mean = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - mean) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term = (1.0 - 2.0 / a) / (1.0 + x * (2.0 / (a - 4.0)).sqrt());
    ((1.0 - 2.0 / (9.0 * a)) - term.cbrt()) / (2.0 / (9.0 * a)).sqrt()
}

/// Marginal kurtoses `m4 / m2^2` of each column.
pub fn marginal_kurtoses(data: &DMatrix<f64>) -> DVector<f64> {
    let x = centered_columns(data);
    let n = x.nrows() as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|c| {
            let m2 = c.norm_squared() / n;
            let m4 = c.iter().map(|v| v.powi(4)).sum::<f64>() / n;
            m4 / (m2 * m2)
        }),
    )
}

pub const SMALL_MIN_CASES: usize = 20;

/// Small's `Q_2`: the Anscombe-Glynn deviates of the marginal kurtoses
/// combined as `z' U^-1 z` with `U_jk = r_jk^4`; chi-square with `p` df.
pub fn small_q2(data: &DMatrix<f64>) -> Result<KurtosisReport> {
    let (n, p) = data.shape();
    if p == 0 {
        return Err(Error::InvalidArgument {
            arg: "data",
            reason: "no variables".into(),
        });
    }
    if n < SMALL_MIN_CASES {
        return Err(Error::TooFewCases {
            needed: SMALL_MIN_CASES,
            got: n,
        });
    }
    let z = marginal_kurtoses(data).map(|b2| anscombe_glynn_z(b2, n));
    let r = crate::extract::correlate_rows(&data.transpose())?;
    let mut u = r.map(|v| v.powi(4));
    for i in 0..p {
        u[(i, i)] = 1.0;
        for j in (i + 1)..p {
            if r[(i, j)].abs() >= 1.0 - 1e-12 {
                return Err(Error::PerfectCorrelation { i, j });
            }
        }
    }
    let chol = u.cholesky().ok_or(Error::SingularCovariance)?;
    let q2 = z.dot(&chol.solve(&z));
    let chi = ChiSquared::new(p as f64).expect("df >= 1");
    Ok(KurtosisReport {
        test: KurtosisTest::Small,
        statistic: q2,
        standardized: q2,
        df: Some(p),
        p_value: chi.sf(q2),
        two_sided: false,
    })
}

/// All three tests, in the order Small, Srivastava, Mardia.
pub fn kurtosis_battery(data: &DMatrix<f64>) -> [Result<KurtosisReport>; 3] {
    [small_q2(data), srivastava_kurtosis(data), mardia_kurtosis(data)]
}

/// Result of the difference-score identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZDiff {
    /// Variance (divisor `n`) of `z1 - z2`.
    pub sigma_d2: f64,
    /// `1 - sigma_d2 / 2`
    pub rho: f64,
}

fn z_standardize(v: &DVector<f64>, arg: &'static str) -> Result<DVector<f64>> {
    let n = v.len() as f64;
    let mean = v.mean();
    let centered = v.add_scalar(-mean);
    let sd = (centered.norm_squared() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidArgument {
            arg,
            reason: "zero variance".into(),
        });
    }
    Ok(centered / sd)
}

/// Correlation of two variables through the variance of their z-score
/// difference. Inputs are z-standardized internally.
pub fn zdiff_correlation(z1: &DVector<f64>, z2: &DVector<f64>) -> Result<ZDiff> {
    if z1.len() != z2.len() {
        return Err(Error::shape("zdiff_correlation", (z1.len(), 1), (z2.len(), 1)));
    }
    if z1.len() < 2 {
        return Err(Error::TooFewCases {
            needed: 2,
            got: z1.len(),
        });
    }
    let a = z_standardize(z1, "z1")?;
    let b = z_standardize(z2, "z2")?;
    let sigma_d2 = (a - b).norm_squared() / z1.len() as f64;
    Ok(ZDiff {
        sigma_d2,
        rho: 1.0 - sigma_d2 / 2.0,
    })
}

/// Mardia test for one pair of variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairReport {
    pub i: usize,
    pub j: usize,
    pub report: KurtosisReport,
}

/// Bivariate Mardia tests for every pair `i < j`, row-major over the upper
/// triangle.
pub fn pairwise_bivariate_kurtosis(data: &DMatrix<f64>) -> Result<Vec<PairReport>> {
    let p = data.ncols();
    if p < 2 {
        return Err(Error::InvalidArgument {
            arg: "data",
            reason: format!("pairwise tests need at least 2 variables, got {p}"),
        });
    }
    let mut out = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            let pair = DMatrix::from_columns(&[data.column(i), data.column(j)]);
            out.push(PairReport {
                i,
                j,
                report: mardia_kurtosis(&pair)?,
            });
        }
    }
    Ok(out)
}
