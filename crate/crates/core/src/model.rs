//! Population models: balanced simple-structure loadings, unit-metric unique
//! loadings, population covariances, parameter counting and the Q-factor
//! variance-inflation identity.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, sum_of_squares};

/// Common-factor loadings with a balanced, contiguous simple structure.
///
/// Row block `k` (rows `k*block .. (k+1)*block`) loads only on factor `k`,
/// every salient entry equals `salient_value` and all other entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    values: DMatrix<f64>,
    salient_value: f64,
    block_size: usize,
}

impl LoadingMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn factors(&self) -> usize {
        self.values.ncols()
    }

    pub fn salient_value(&self) -> f64 {
        self.salient_value
    }

    /// Number of consecutive rows sharing a salient factor.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Factor on which `row` has its salient loading.
    pub fn salient_factor(&self, row: usize) -> usize {
        row / self.block_size
    }

    pub fn is_salient(&self, row: usize, factor: usize) -> bool {
        self.salient_factor(row) == factor
    }

    pub fn salient_mask(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows(), self.factors(), |r, c| self.is_salient(r, c))
    }

    /// Row sums of squared loadings.
    pub fn communalities(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.rows(),
            self.values.row_iter().map(|r| r.iter().map(|v| v * v).sum()),
        )
    }
}

/// Build a balanced simple-structure loading matrix.
pub fn build_loading_matrix(rows: usize, factors: usize, salient: f64) -> Result<LoadingMatrix> {
    if factors == 0 || rows == 0 || !rows.is_multiple_of(factors) {
        return Err(Error::NotDivisible {
            what: "loading matrix",
            rows,
            blocks: factors,
        });
    }
    if !(salient > 0.0 && salient < 1.0) {
        return Err(Error::SalientOutOfRange(salient));
    }
    let block_size = rows / factors;
    let values = DMatrix::from_fn(rows, factors, |r, c| if r / block_size == c { salient } else { 0.0 });
    Ok(LoadingMatrix {
        values,
        salient_value: salient,
        block_size,
    })
}

/// Diagonal of unique loadings; stored as the diagonal vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueLoadings {
    values: DVector<f64>,
}

impl UniqueLoadings {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_diagonal(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.values)
    }

    /// Unit unique loadings, i.e. `Psi = I`.
    pub fn identity(len: usize) -> Self {
        Self {
            values: DVector::from_element(len, 1.0),
        }
    }
}

/// Unique loadings that give every variable unit variance.
pub fn unique_from_common(common: &LoadingMatrix) -> Result<UniqueLoadings> {
    let h = common.communalities();
    let mut values = DVector::zeros(h.len());
    for (row, &c) in h.iter().enumerate() {
        if c >= 1.0 {
            return Err(Error::PopulationHeywood { row, communality: c });
        }
        values[row] = (1.0 - c).sqrt();
    }
    Ok(UniqueLoadings { values })
}

/// `Lambda Lambda' + Psi^2`.
pub fn population_covariance(common: &LoadingMatrix, unique: &UniqueLoadings) -> Result<DMatrix<f64>> {
    covariance_from_parts(common.values(), unique.values())
}

pub(crate) fn covariance_from_parts(loadings: &DMatrix<f64>, unique: &DVector<f64>) -> Result<DMatrix<f64>> {
    if loadings.nrows() != unique.len() {
        return Err(Error::shape(
            "population_covariance",
            (loadings.nrows(), 1),
            (unique.len(), 1),
        ));
    }
    let mut sigma = loadings * loadings.transpose();
    for (j, u) in unique.iter().enumerate() {
        sigma[(j, j)] += u * u;
    }
    Ok(sigma)
}

/// One combined R/Q population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSpec {
    pub p: usize,
    pub n: usize,
    pub q_r: usize,
    pub q_q: usize,
    pub lambda_r: f64,
    pub lambda_q: f64,
    pub w_r2: f64,
}

impl PopulationSpec {
    pub fn new(p: usize, n: usize, q_r: usize, q_q: usize, lambda_r: f64, lambda_q: f64, w_r2: f64) -> Result<Self> {
        let spec = Self {
            p,
            n,
            q_r,
            q_q,
            lambda_r,
            lambda_q,
            w_r2,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The simulation design: p = 15, q_R = q_Q = 3, lambda_Q = .90.
    pub fn standard(lambda_r: f64, w_r2: f64, n: usize) -> Result<Self> {
        Self::new(15, n, 3, 3, lambda_r, 0.90, w_r2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidSpec { field, reason });
        if self.q_r < 1 {
            return bad("q_r", "must be at least 1".into());
        }
        if self.q_q < 2 {
            return bad(
                "q_q",
                format!(
                    "must be at least 2 (got {}); a single Q-factor is removed by centering",
                    self.q_q
                ),
            );
        }
        if self.p == 0 || !self.p.is_multiple_of(self.q_r) {
            return bad("p", format!("{} is not divisible by q_r = {}", self.p, self.q_r));
        }
        if self.n == 0 || !self.n.is_multiple_of(self.q_q) {
            return bad("n", format!("{} is not divisible by q_q = {}", self.n, self.q_q));
        }
        if !(self.lambda_r > 0.0 && self.lambda_r < 1.0) {
            return bad("lambda_r", format!("{} is outside (0, 1)", self.lambda_r));
        }
        if !(self.lambda_q > 0.0 && self.lambda_q < 1.0) {
            return bad("lambda_q", format!("{} is outside (0, 1)", self.lambda_q));
        }
        if !(self.w_r2 > 0.0 && self.w_r2 <= 1.0) {
            return bad("w_r2", format!("{} is outside (0, 1]", self.w_r2));
        }
        Ok(())
    }

    pub fn w_q2(&self) -> f64 {
        1.0 - self.w_r2
    }

    pub fn r_loadings(&self) -> Result<LoadingMatrix> {
        build_loading_matrix(self.p, self.q_r, self.lambda_r)
    }

    /// Individuals are split into `q_q` contiguous blocks of `n / q_q`.
    pub fn q_loadings(&self) -> Result<LoadingMatrix> {
        build_loading_matrix(self.n, self.q_q, self.lambda_q)
    }
}

/// Data points versus free parameters of the combined R/Q model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub data_points: u64,
    pub model_params: u64,
    pub identified: bool,
}

/// Counts `(p^2 + p)/2` data points against `p q_R + n q_Q + p q_Q + p n`
/// parameters (unique loadings excluded, as they follow from the common ones).
pub fn count_parameters(p: u64, n: u64, q_r: u64, q_q: u64) -> ParamCount {
    let data_points = (p * p + p) / 2;
    let model_params = p * q_r + n * q_q + p * q_q + p * n;
    ParamCount {
        data_points,
        model_params,
        identified: model_params <= data_points,
    }
}

/// Sums of squares of the common and unique Q contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceInflation {
    pub ssq_common: f64,
    pub ssq_unique: f64,
    pub ratio: f64,
}

const INFLATION_SEED: u64 = 0x005e_ed0f_0a11;

/// Builds the equal-split Q population (`diag(Lambda_Q Lambda_Q') = Psi_Q^2 = I/2`)
/// with exactly row-orthonormal score matrices, then returns
/// `SSQ(f' L' L f)`, `SSQ(e' Psi^2 e)` and their ratio, which equals `n / q_Q`.
pub fn verify_q_variance_inflation(n: usize, q_q: usize, p: usize) -> Result<VarianceInflation> {
    if q_q == 0 || !n.is_multiple_of(q_q) {
        return Err(Error::NotDivisible {
            what: "Q loading matrix",
            rows: n,
            blocks: q_q,
        });
    }
    if p < n {
        return Err(Error::InvalidArgument {
            arg: "p",
            reason: format!("p = {p} < n = {n}; n orthonormal score rows need p >= n"),
        });
    }
    let block = n / q_q;
    let half = 0.5_f64.sqrt();
    let lambda_q = DMatrix::from_fn(n, q_q, |r, c| if r / block == c { half } else { 0.0 });
    let psi_q_sq = DMatrix::from_diagonal_element(n, n, 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(INFLATION_SEED);
    let basis = random_orthogonal(p, &mut rng);
    // Independent orthonormal frames for the common and unique scores.
    let f_q = basis.rows(0, q_q).into_owned();
    let e_q = random_orthogonal(p, &mut rng).rows(0, n).into_owned();

    let common = f_q.transpose() * lambda_q.transpose() * &lambda_q * &f_q;
    let unique = e_q.transpose() * psi_q_sq * &e_q;
    let ssq_common = sum_of_squares(&common);
    let ssq_unique = sum_of_squares(&unique);
    Ok(VarianceInflation {
        ssq_common,
        ssq_unique,
        ratio: ssq_common / ssq_unique,
    })
}
