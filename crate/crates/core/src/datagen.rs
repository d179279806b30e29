//! Sample generation for the combined R/Q population model.
//!
//! A sample is
//!
//! ```text
//! X = Lambda_R f_R + Psi_R (w_R e_R + w_Q Q_std)
//! Q_std = D^{-1/2} (f_Q' Lambda_Q' + e_Q' Psi_Q) C_n
//! ```
//!
//! where `C_n` centers every variable across individuals and `D` rescales each
//! row of the centered Q-part to unit *sample* variance (sum of squares over
//! `n - 1`), so the Q-part and `e_R` share the same scale and `w_R^2 + w_Q^2 = 1`
//! splits the unique R variance between them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{unique_from_common, LoadingMatrix, PopulationSpec, UniqueLoadings};

/// `I_n - 11'/n`.
pub fn centering_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            arg: "n",
            reason: "centering matrix needs n >= 1".into(),
        });
    }
    let off = -1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + off } else { off }))
}

/// Subtracts each row's mean in place; equivalent to post-multiplying by `C_n`.
pub(crate) fn center_rows(m: &mut DMatrix<f64>) {
    let n = m.ncols() as f64;
    for mut row in m.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
}

/// Raw standard-normal scores for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    /// `q_R x n`
    pub f_r: DMatrix<f64>,
    /// `p x n`
    pub e_r: DMatrix<f64>,
    /// `q_Q x p`
    pub f_q: DMatrix<f64>,
    /// `n x p`
    pub e_q: DMatrix<f64>,
    pub seed: u64,
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draws `f_R`, `e_R`, `f_Q`, `e_Q` (in that order) from one ChaCha8 stream.
pub fn generate_scores(spec: &PopulationSpec, seed: u64) -> ScoreSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f_r = normal_matrix(spec.q_r, spec.n, &mut rng);
    let e_r = normal_matrix(spec.p, spec.n, &mut rng);
    let f_q = normal_matrix(spec.q_q, spec.p, &mut rng);
    let e_q = normal_matrix(spec.n, spec.p, &mut rng);
    ScoreSet {
        f_r,
        e_r,
        f_q,
        e_q,
        seed,
    }
}

/// Centered, row-standardized Q-part (`p x n`): every row has mean 0 and
/// sample variance 1.
pub fn assemble_q_part(
    lambda_q: &LoadingMatrix,
    psi_q: &UniqueLoadings,
    f_q: &DMatrix<f64>,
    e_q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = lambda_q.rows();
    let q_q = lambda_q.factors();
    if psi_q.len() != n {
        return Err(Error::shape("assemble_q_part", (n, 1), (psi_q.len(), 1)));
    }
    if f_q.nrows() != q_q {
        return Err(Error::shape("assemble_q_part", (q_q, f_q.ncols()), f_q.shape()));
    }
    let p = f_q.ncols();
    if e_q.shape() != (n, p) {
        return Err(Error::shape("assemble_q_part", (n, p), e_q.shape()));
    }

    // (f_Q' Lambda_Q' + e_Q' Psi_Q) C_n
    let mut q = f_q.transpose() * lambda_q.values().transpose();
    let psi = psi_q.values();
    for i in 0..n {
        for j in 0..p {
            q[(j, i)] += e_q[(i, j)] * psi[i];
        }
    }
    center_rows(&mut q);

    let dof = (n as f64 - 1.0).max(1.0);
    for (row, mut r) in q.row_iter_mut().enumerate() {
        let ssq: f64 = r.iter().map(|v| v * v).sum();
        if !(ssq > 0.0) || !ssq.is_finite() {
            return Err(Error::ZeroVarianceRow { row });
        }
        r /= (ssq / dof).sqrt();
    }
    Ok(q)
}

/// Where a data matrix came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub spec: PopulationSpec,
    pub seed: u64,
}

/// Observed scores, `p` variables by `n` individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    provenance: Option<Provenance>,
}

impl DataMatrix {
    /// Wraps a `variables x cases` matrix.
    pub fn from_variables_by_cases(values: DMatrix<f64>) -> Result<Self> {
        Self::checked(values, None)
    }

    /// Wraps a `cases x variables` matrix (the layout of CSV files).
    pub fn from_cases_by_variables(values: &DMatrix<f64>) -> Result<Self> {
        Self::checked(values.transpose(), None)
    }

    fn checked(values: DMatrix<f64>, provenance: Option<Provenance>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidArgument {
                arg: "data",
                reason: format!("need at least 2 variables, got {}", values.nrows()),
            });
        }
        if values.ncols() < 3 {
            return Err(Error::TooFewCases {
                needed: 3,
                got: values.ncols(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                arg: "data",
                reason: format!(
                    "non-finite value at variable {}, case {}",
                    pos % values.nrows(),
                    pos / values.nrows()
                ),
            });
        }
        Ok(Self { values, provenance })
    }

    /// `p x n` values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn variables(&self) -> usize {
        self.values.nrows()
    }

    pub fn cases(&self) -> usize {
        self.values.ncols()
    }

    /// `n x p` copy of the values.
    pub fn cases_by_variables(&self) -> DMatrix<f64> {
        self.values.transpose()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

/// Everything about a population that does not depend on the seed.
#[derive(Debug, Clone)]
pub struct Population {
    pub spec: PopulationSpec,
    pub lambda_r: LoadingMatrix,
    pub psi_r: UniqueLoadings,
    pub lambda_q: LoadingMatrix,
    pub psi_q: UniqueLoadings,
}

impl Population {
    pub fn new(spec: PopulationSpec) -> Result<Self> {
        spec.validate()?;
        let lambda_r = spec.r_loadings()?;
        let psi_r = unique_from_common(&lambda_r)?;
        let lambda_q = spec.q_loadings()?;
        let psi_q = unique_from_common(&lambda_q)?;
        Ok(Self {
            spec,
            lambda_r,
            psi_r,
            lambda_q,
            psi_q,
        })
    }

    pub fn sample(&self, seed: u64) -> Result<DataMatrix> {
        let scores = generate_scores(&self.spec, seed);
        self.sample_from_scores(&scores)
    }

    pub fn sample_from_scores(&self, scores: &ScoreSet) -> Result<DataMatrix> {
        let w_r = self.spec.w_r2.sqrt();
        let w_q = self.spec.w_q2().max(0.0).sqrt();
        let mut x = self.lambda_r.values() * &scores.f_r;
        let psi = self.psi_r.values();
        if w_q == 0.0 {
            // Pure R model.
            for (j, mut row) in x.row_iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v += psi[j] * scores.e_r[(j, i)];
                }
            }
        } else {
            let q = assemble_q_part(&self.lambda_q, &self.psi_q, &scores.f_q, &scores.e_q)?;
            for (j, mut row) in x.row_iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v += psi[j] * (w_r * scores.e_r[(j, i)] + w_q * q[(j, i)]);
                }
            }
        }
        DataMatrix::checked(
            x,
            Some(Provenance {
                spec: self.spec,
                seed: scores.seed,
            }),
        )
    }

    /// R-part `Lambda_R f_R + Psi_R e_R` (`p x n`).
    pub fn r_part(&self, scores: &ScoreSet) -> DMatrix<f64> {
        let mut x = self.lambda_r.values() * &scores.f_r;
        x += self.psi_r.to_diagonal() * &scores.e_r;
        x
    }

    /// Q-part `Lambda_Q f_Q + Psi_Q e_Q` (`n x p`), uncentered.
    pub fn q_part(&self, scores: &ScoreSet) -> DMatrix<f64> {
        let mut x = self.lambda_q.values() * &scores.f_q;
        x += self.psi_q.to_diagonal() * &scores.e_q;
        x
    }
}

/// One sample of the combined model; deterministic in `(spec, seed)`.
pub fn generate_sample(spec: &PopulationSpec, seed: u64) -> Result<DataMatrix> {
    Population::new(*spec)?.sample(seed)
}

/// Mean element of `H_RQ = X_R (X_Q' C_n)'` for one draw.
pub fn cross_term_check(spec: &PopulationSpec, seed: u64) -> Result<f64> {
    let pop = Population::new(*spec)?;
    let scores = generate_scores(spec, seed);
    cross_term_mean(&pop.r_part(&scores), &pop.q_part(&scores))
}

/// Mean element of `X_R C_n X_Q` for `X_R` (`p x n`) and `X_Q` (`n x p`).
pub fn cross_term_mean(x_r: &DMatrix<f64>, x_q: &DMatrix<f64>) -> Result<f64> {
    if x_q.shape() != (x_r.ncols(), x_r.nrows()) {
        return Err(Error::shape("cross_term_mean", (x_r.ncols(), x_r.nrows()), x_q.shape()));
    }
    let mut centered = x_q.transpose();
    center_rows(&mut centered);
    let h = x_r * centered.transpose();
    Ok(h.mean())
}

/// Per-row sample means and variances (`n - 1` divisor).
pub fn row_moments(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.ncols() as f64;
    let means = DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n));
    let vars = DVector::from_iterator(
        m.nrows(),
        m.row_iter()
            .zip(means.iter())
            .map(|(r, mu)| r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)),
    );
    (means, vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w_r2: f64, n: usize) -> PopulationSpec {
        PopulationSpec::standard(0.5, w_r2, n).unwrap()
    }

    #[test]
    fn centering_small_cases() {
        let c = centering_matrix(2).unwrap();
        assert_eq!(c.as_slice(), &[0.5, -0.5, -0.5, 0.5]);
        assert_eq!(centering_matrix(1).unwrap()[(0, 0)], 0.0);
        assert!(centering_matrix(0).is_err());
    }

    #[test]
    fn centering_is_idempotent_projector() {
        for n in [1, 2, 3, 7, 30, 101] {
            let c = centering_matrix(n).unwrap();
            assert!((&c * &c - &c).abs().max() < 1e-14);
            assert!((c.transpose() - &c).abs().max() == 0.0);
            let ones = DVector::from_element(n, 1.0);
            assert!((&c * ones).abs().max() < 1e-14);
        }
    }

    #[test]
    fn scores_are_deterministic() {
        let s = spec(0.5, 30);
        let a = generate_scores(&s, 11);
        assert_eq!(a, generate_scores(&s, 11));
        assert_ne!(a.e_r, generate_scores(&s, 12).e_r);
        assert_eq!(a.f_r.shape(), (3, 30));
        assert_eq!(a.e_r.shape(), (15, 30));
        assert_eq!(a.f_q.shape(), (3, 15));
        assert_eq!(a.e_q.shape(), (30, 15));
    }

    #[test]
    fn score_mean_within_normal_bound() {
        let s = spec(0.5, 3000);
        let e = generate_scores(&s, 5).e_r;
        let bound = 4.0 / ((s.n * s.p) as f64).sqrt();
        assert!(e.mean().abs() < bound);
    }

    #[test]
    fn q_part_rows_standardized() {
        for (n, q_q, p) in [(30, 3, 15), (12, 2, 4), (300, 3, 15), (40, 4, 7)] {
            let s = PopulationSpec::new(p, n, 1, q_q, 0.5, 0.9, 0.5).unwrap();
            let pop = Population::new(s).unwrap();
            let sc = generate_scores(&s, 3);
            let q = assemble_q_part(&pop.lambda_q, &pop.psi_q, &sc.f_q, &sc.e_q).unwrap();
            let (means, vars) = row_moments(&q);
            assert!(means.abs().max() < 1e-12);
            assert!(vars.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn q_part_zero_row_is_reported() {
        let s = PopulationSpec::new(2, 4, 1, 2, 0.5, 0.9, 0.5).unwrap();
        let pop = Population::new(s).unwrap();
        let mut f_q = DMatrix::from_element(2, 2, 1.0);
        let mut e_q = DMatrix::from_element(4, 2, 1.0);
        // variable 1 gets identical profiles for everyone
        f_q[(0, 0)] = 0.3;
        e_q[(0, 0)] = -2.0;
        let err = assemble_q_part(&pop.lambda_q, &pop.psi_q, &f_q, &e_q).unwrap_err();
        assert!(matches!(err, Error::ZeroVarianceRow { row: 1 }));
    }

    #[test]
    fn q_part_shape_errors() {
        let s = PopulationSpec::new(6, 6, 1, 2, 0.5, 0.9, 0.5).unwrap();
        let pop = Population::new(s).unwrap();
        let sc = generate_scores(&s, 1);
        let bad = DMatrix::zeros(5, 6);
        assert!(matches!(
            assemble_q_part(&pop.lambda_q, &pop.psi_q, &sc.f_q, &bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pure_r_model_matches_bitwise() {
        let s = spec(1.0, 60);
        let pop = Population::new(s).unwrap();
        let sc = generate_scores(&s, 99);
        let x = pop.sample(99).unwrap();
        let mut want = pop.lambda_r.values() * &sc.f_r;
        for j in 0..s.p {
            for i in 0..s.n {
                want[(j, i)] += pop.psi_r.values()[j] * sc.e_r[(j, i)];
            }
        }
        assert_eq!(x.values(), &want);
    }

    #[test]
    fn standard_grid_cell_produces_valid_matrix() {
        let s = PopulationSpec::new(15, 300, 3, 3, 0.5, 0.9, 0.25).unwrap();
        let x = generate_sample(&s, 2024).unwrap();
        assert_eq!((x.variables(), x.cases()), (15, 300));
        assert_eq!(x.provenance().unwrap().seed, 2024);
        assert_eq!(x, generate_sample(&s, 2024).unwrap());
    }

    #[test]
    fn cross_term_degenerate_cases() {
        let x_r = DMatrix::zeros(4, 6);
        let x_q = DMatrix::from_fn(6, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(cross_term_mean(&x_r, &x_q).unwrap(), 0.0);
        let x_r = DMatrix::from_element(3, 1, 2.5);
        let x_q = DMatrix::from_element(1, 3, -1.0);
        assert_eq!(cross_term_mean(&x_r, &x_q).unwrap(), 0.0);
        assert!(cross_term_mean(&x_r, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn data_matrix_validation() {
        assert!(DataMatrix::from_variables_by_cases(DMatrix::zeros(1, 10)).is_err());
        assert!(matches!(
            DataMatrix::from_variables_by_cases(DMatrix::zeros(3, 2)),
            Err(Error::TooFewCases { .. })
        ));
        let mut m = DMatrix::zeros(3, 5);
        m[(1, 2)] = f64::NAN;
        assert!(DataMatrix::from_variables_by_cases(m).is_err());
    }
}
