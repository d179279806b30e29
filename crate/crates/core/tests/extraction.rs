use nalgebra::DMatrix;

use rqsim::datagen::DataMatrix;
use rqsim::demo::group_lines;
use rqsim::extract::{correlation_matrix, orthogonal_target_rotation, principal_axis, smc_communalities, PafOptions};
use rqsim::harness::{ConditionGrid, DEFAULT_SEED};
use rqsim::model::{build_loading_matrix, population_covariance, unique_from_common};

#[test]
fn population_structures_are_recovered() {
    for spec in ConditionGrid::standard_design(1, DEFAULT_SEED).conditions().unwrap() {
        let lam = spec.r_loadings().unwrap();
        let sigma = population_covariance(&lam, &unique_from_common(&lam).unwrap()).unwrap();
        let fit = principal_axis(&sigma, 3, PafOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(!fit.heywood_adjusted);
        let rot = orthogonal_target_rotation(&fit.loadings, lam.values()).unwrap();
        let err = (&rot.rotated - lam.values()).abs().max();
        assert!(err < 1e-4, "{spec:?}: {err}");
    }
}

#[test]
fn smc_stays_below_squared_loading() {
    // One-factor correlation matrices with p = 4 over a grid of loadings.
    for k in 1..100 {
        let l = k as f64 / 100.0;
        let lam = build_loading_matrix(4, 1, l).unwrap();
        let sigma = population_covariance(&lam, &unique_from_common(&lam).unwrap()).unwrap();
        let smc = smc_communalities(&sigma).unwrap();
        // Closed form for equal loadings, p = 4: 3 l^4 / (1 + 2 l^2).
        let closed = 3.0 * l.powi(4) / (1.0 + 2.0 * l * l);
        for s in smc.values.iter() {
            assert!(*s < l * l, "lambda {l}: smc {s}");
            assert!((s - closed).abs() < 1e-10);
        }
    }
}

#[test]
fn two_variable_smc_is_r_squared() {
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
    let smc = smc_communalities(&r).unwrap();
    assert!(smc.values.iter().all(|s| (s - 0.36).abs() < 1e-12));
}

#[test]
fn demo_variables_correlate_at_target() {
    let d = group_lines(145, 3, 0.40, 4).unwrap();
    let data = DataMatrix::from_cases_by_variables(&d.cases_by_variables()).unwrap();
    let r = correlation_matrix(&data).unwrap();
    assert!((r[(0, 1)] - 0.40).abs() < 1e-9);
    assert!((d.zdiff.sigma_d2 - 1.2).abs() < 1e-8);
}
