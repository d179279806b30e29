//! Builds the combined R/Q population for one design cell and prints its
//! loadings, the implied R-side covariance, the parameter count that makes the
//! combined model unidentified, and the variance inflation of Q-factor scores.

use rqsim::model::{
    count_parameters, population_covariance, unique_from_common, verify_q_variance_inflation, PopulationSpec,
};

fn main() -> rqsim::Result<()> {
    let spec = PopulationSpec::standard(0.50, 0.75, 300)?;
    let lambda_r = spec.r_loadings()?;
    let psi_r = unique_from_common(&lambda_r)?;
    println!("spec: {spec:?}");
    println!("R-loadings (p x q_R):{}", lambda_r.values());
    println!("unique loadings: {:.4}", psi_r.values().transpose());

    let sigma = population_covariance(&lambda_r, &psi_r)?;
    let max_diag_err = sigma.diagonal().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    println!("max |diag(Sigma) - 1| = {max_diag_err:.2e}");
    println!("within-block correlation = {:.4}", sigma[(0, 1)]);

    let lambda_q = spec.q_loadings()?;
    println!(
        "Q-loadings: {} individuals in {} blocks of {}",
        lambda_q.rows(),
        lambda_q.factors(),
        lambda_q.block_size()
    );

    let count = count_parameters(15, 15, 1, 1);
    println!(
        "p = n = 15, one R- and one Q-factor: {} parameters vs {} data points, identified = {}",
        count.model_params, count.data_points, count.identified
    );

    for (n, q_q, p) in [(12, 3, 12), (20, 4, 20)] {
        let v = verify_q_variance_inflation(n, q_q, p)?;
        println!(
            "n = {n}, q_Q = {q_q}: common SSQ {:.3}, unique SSQ {:.3}, ratio {:.3}",
            v.ssq_common, v.ssq_unique, v.ratio
        );
    }
    Ok(())
}
