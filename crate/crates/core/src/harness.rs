//! Seeded Monte Carlo driver over a grid of populations.
//!
//! Every replication derives its own seed from `(master_seed, condition,
//! replication index)`, so results do not depend on scheduling or on the
//! number of worker threads. Aggregation always walks replications in index
//! order.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::datagen::Population;
use crate::error::{Error, Result};
use crate::extract::{correlation_matrix, orthogonal_target_rotation, principal_axis, PafOptions};
use crate::model::PopulationSpec;
use crate::mvnkurt::{kurtosis_battery, KurtosisReport, KurtosisTest, Sidedness};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable identifier of a population, independent of its position in a grid.
pub fn condition_id(spec: &PopulationSpec) -> u64 {
    [
        spec.p as u64,
        spec.n as u64,
        spec.q_r as u64,
        spec.q_q as u64,
        spec.lambda_r.to_bits(),
        spec.lambda_q.to_bits(),
        spec.w_r2.to_bits(),
    ]
    .iter()
    .fold(0x0051_5f1d_u64, |acc, &w| mix64(acc ^ w))
}

pub fn replication_seed(master_seed: u64, condition: u64, rep: usize) -> u64 {
    mix64(mix64(mix64(master_seed) ^ condition) ^ rep as u64)
}

/// How salient and non-salient loadings are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean and SD over all cells of all replications.
    #[default]
    Pooled,
    /// Mean and SD within each replication, then averaged over replications.
    PerReplication,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub aggregation: Aggregation,
    /// Drop non-converged and Heywood replications from the loading summaries.
    pub exclude_flagged: bool,
    pub sidedness: Sidedness,
    pub paf: PafOptions,
    /// Skip the kurtosis battery (loading summaries only).
    pub skip_kurtosis: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Pooled,
            exclude_flagged: false,
            sidedness: Sidedness::TwoSided,
            paf: PafOptions::default(),
            skip_kurtosis: false,
        }
    }
}

/// Outcome of one generate -> PAF -> Procrustes -> kurtosis pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    /// Target-rotated loadings (`p x q_R`); `None` when the pipeline failed.
    pub rotated: Option<DMatrix<f64>>,
    /// Reports in `KurtosisTest::ALL` order; `None` for a failed test.
    pub reports: [Option<KurtosisReport>; 3],
    pub converged: bool,
    pub heywood: bool,
    pub failure: Option<String>,
}

impl Replication {
    pub fn flagged(&self) -> bool {
        !self.converged || self.heywood
    }

    pub fn report(&self, test: KurtosisTest) -> Option<&KurtosisReport> {
        let idx = KurtosisTest::ALL.iter().position(|&t| t == test)?;
        self.reports[idx].as_ref()
    }
}

fn replicate(pop: &Population, rep: usize, seed: u64, opts: &HarnessOptions) -> Replication {
    let mut out = Replication {
        rep,
        seed,
        rotated: None,
        reports: [None, None, None],
        converged: false,
        heywood: false,
        failure: None,
    };
    let data = match pop.sample(seed) {
        Ok(d) => d,
        Err(e) => {
            out.failure = Some(e.to_string());
            return out;
        }
    };
    let fit = correlation_matrix(&data)
        .and_then(|r| principal_axis(&r, pop.spec.q_r, opts.paf))
        .and_then(|sol| {
            let rot = orthogonal_target_rotation(&sol.loadings, pop.lambda_r.values())?;
            Ok((sol, rot))
        });
    match fit {
        Ok((sol, rot)) => {
            out.converged = sol.converged;
            out.heywood = sol.heywood_adjusted;
            out.rotated = Some(rot.rotated);
        }
        Err(e) => out.failure = Some(e.to_string()),
    }
    if !opts.skip_kurtosis {
        let cases = data.cases_by_variables();
        for (slot, res) in out.reports.iter_mut().zip(kurtosis_battery(&cases)) {
            *slot = res.ok();
        }
    }
    out
}

/// One replication with default options.
pub fn run_replication(spec: &PopulationSpec, rep_seed: u64) -> Result<Replication> {
    let pop = Population::new(*spec)?;
    Ok(replicate(&pop, 0, rep_seed, &HarnessOptions::default()))
}

/// Fraction of p-values at or below `alpha`; 0 for an empty slice.
pub fn detection_rate(p_values: &[f64], alpha: f64) -> Result<f64> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidPValue(bad));
    }
    if p_values.is_empty() {
        return Ok(0.0);
    }
    Ok(p_values.iter().filter(|&&p| p <= alpha).count() as f64 / p_values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRate {
    pub test: KurtosisTest,
    pub alpha: f64,
    pub rate: f64,
    /// Replications for which the test produced a p-value.
    pub tested: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub spec: PopulationSpec,
    pub reps: usize,
    pub mean_salient: f64,
    pub sd_salient: f64,
    pub mean_nonsalient: f64,
    pub sd_nonsalient: f64,
    pub n_nonconverged: usize,
    pub n_heywood: usize,
    pub n_failed: usize,
    /// Ordered by test (`KurtosisTest::ALL`), then by alpha.
    pub detection: Vec<DetectionRate>,
}

impl ConditionSummary {
    pub fn rate(&self, test: KurtosisTest, alpha: f64) -> Option<f64> {
        self.detection
            .iter()
            .find(|d| d.test == test && (d.alpha - alpha).abs() < 1e-12)
            .map(|d| d.rate)
    }
}

/// Mean and sample SD (`n - 1`); SD is 0 for fewer than two values.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Salient and non-salient cells of a rotated loading matrix, row-major.
pub fn split_cells(pop: &Population, rotated: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut salient = Vec::with_capacity(rotated.nrows());
    let mut other = Vec::with_capacity(rotated.len());
    for j in 0..rotated.nrows() {
        for k in 0..rotated.ncols() {
            if pop.lambda_r.is_salient(j, k) {
                salient.push(rotated[(j, k)]);
            } else {
                other.push(rotated[(j, k)]);
            }
        }
    }
    (salient, other)
}

/// Aggregates replications (in the given order) into a summary.
pub fn summarize(
    pop: &Population,
    replications: &[Replication],
    alphas: &[f64],
    opts: &HarnessOptions,
) -> Result<ConditionSummary> {
    let included = replications
        .iter()
        .filter(|r| !(opts.exclude_flagged && r.flagged()))
        .filter_map(|r| r.rotated.as_ref());

    let (mean_salient, sd_salient, mean_nonsalient, sd_nonsalient) = match opts.aggregation {
        Aggregation::Pooled => {
            let mut salient = Vec::new();
            let mut other = Vec::new();
            for rot in included {
                let (s, o) = split_cells(pop, rot);
                salient.extend(s);
                other.extend(o);
            }
            let (ms, ss) = mean_sd(&salient);
            let (mo, so) = mean_sd(&other);
            (ms, ss, mo, so)
        }
        Aggregation::PerReplication => {
            let mut acc = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            for rot in included {
                let (s, o) = split_cells(pop, rot);
                let (ms, ss) = mean_sd(&s);
                let (mo, so) = mean_sd(&o);
                for (slot, v) in acc.iter_mut().zip([ms, ss, mo, so]) {
                    slot.push(v);
                }
            }
            let avg = |v: &Vec<f64>| mean_sd(v).0;
            (avg(&acc[0]), avg(&acc[1]), avg(&acc[2]), avg(&acc[3]))
        }
    };

    let mut detection = Vec::new();
    if !opts.skip_kurtosis {
        for (idx, &test) in KurtosisTest::ALL.iter().enumerate() {
            let p_values: Vec<f64> = replications
                .iter()
                .filter_map(|r| r.reports[idx].as_ref())
                .map(|rep| rep.p_value_for(opts.sidedness))
                .collect();
            for &alpha in alphas {
                detection.push(DetectionRate {
                    test,
                    alpha,
                    rate: detection_rate(&p_values, alpha)?,
                    tested: p_values.len(),
                });
            }
        }
    }

    Ok(ConditionSummary {
        spec: pop.spec,
        reps: replications.len(),
        mean_salient,
        sd_salient,
        mean_nonsalient,
        sd_nonsalient,
        n_nonconverged: replications
            .iter()
            .filter(|r| r.rotated.is_some() && !r.converged)
            .count(),
        n_heywood: replications.iter().filter(|r| r.heywood).count(),
        n_failed: replications.iter().filter(|r| r.failure.is_some()).count(),
        detection,
    })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidArgument {
            arg: "workers",
            reason: "must be at least 1".into(),
        });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument {
            arg: "workers",
            reason: e.to_string(),
        })
}

/// All replications of one population, in replication order.
pub fn run_condition_replications(
    spec: &PopulationSpec,
    reps: usize,
    master_seed: u64,
    workers: usize,
    opts: &HarnessOptions,
) -> Result<Vec<Replication>> {
    let pop = Population::new(*spec)?;
    let cid = condition_id(spec);
    thread_pool(workers)?.install(|| {
        Ok((0..reps)
            .into_par_iter()
            .map(|rep| replicate(&pop, rep, replication_seed(master_seed, cid, rep), opts))
            .collect())
    })
}

/// Summary of one population.
pub fn run_condition(
    spec: &PopulationSpec,
    reps: usize,
    master_seed: u64,
    alphas: &[f64],
    workers: usize,
    opts: &HarnessOptions,
) -> Result<ConditionSummary> {
    if reps == 0 {
        return Err(Error::InvalidArgument {
            arg: "reps",
            reason: "must be at least 1".into(),
        });
    }
    let reps = run_condition_replications(spec, reps, master_seed, workers, opts)?;
    summarize(&Population::new(*spec)?, &reps, alphas, opts)
}

/// A crossed design over `lambda_r x w_r2 x n` with the remaining
/// parameters fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGrid {
    pub p: usize,
    pub q_r: usize,
    pub q_q: usize,
    pub lambda_q: f64,
    pub lambda_r: Vec<f64>,
    pub w_r2: Vec<f64>,
    pub n: Vec<usize>,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
}

pub const DEFAULT_SEED: u64 = 20_221_016;

impl ConditionGrid {
    /// The standard design: 2 x 4 x 3 = 24 populations.
    pub fn standard_design(reps: usize, master_seed: u64) -> Self {
        Self {
            p: 15,
            q_r: 3,
            q_q: 3,
            lambda_q: 0.90,
            lambda_r: vec![0.50, 0.70],
            w_r2: vec![1.00, 0.75, 0.50, 0.25],
            n: vec![300, 600, 900],
            reps,
            alphas: vec![0.05, 0.10, 0.20],
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument {
                arg: "reps",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument {
                arg: "alphas",
                reason: format!("{a} is outside (0, 1)"),
            });
        }
        for spec in self.conditions_unchecked() {
            spec.validate()?;
        }
        Ok(())
    }

    fn conditions_unchecked(&self) -> Vec<PopulationSpec> {
        let mut out = Vec::new();
        for &lambda_r in &self.lambda_r {
            for &w_r2 in &self.w_r2 {
                for &n in &self.n {
                    out.push(PopulationSpec {
                        p: self.p,
                        n,
                        q_r: self.q_r,
                        q_q: self.q_q,
                        lambda_r,
                        lambda_q: self.lambda_q,
                        w_r2,
                    });
                }
            }
        }
        out
    }

    /// Populations in `lambda_r`, then `w_r2`, then `n` order.
    pub fn conditions(&self) -> Result<Vec<PopulationSpec>> {
        self.validate()?;
        Ok(self.conditions_unchecked())
    }
}

/// Runs every condition of the grid. Output is identical for any `workers`.
pub fn run_grid(grid: &ConditionGrid, workers: usize, opts: &HarnessOptions) -> Result<Vec<ConditionSummary>> {
    let specs = grid.conditions()?;
    let pops = specs.iter().map(|s| Population::new(*s)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<u64> = specs.iter().map(condition_id).collect();
    let jobs: Vec<(usize, usize)> = (0..pops.len())
        .flat_map(|c| (0..grid.reps).map(move |r| (c, r)))
        .collect();
    let results: Vec<Replication> = thread_pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| replicate(&pops[c], r, replication_seed(grid.master_seed, ids[c], r), opts))
            .collect()
    });
    pops.iter()
        .zip(results.chunks(grid.reps.max(1)))
        .map(|(pop, reps)| summarize(pop, reps, &grid.alphas, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detection_rate_examples() {
        assert!((detection_rate(&[0.01, 0.20, 0.04], 0.05).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(detection_rate(&[1.0; 10], 0.05).unwrap(), 0.0);
        assert!(matches!(
            detection_rate(&[0.5, 1.2], 0.05),
            Err(Error::InvalidPValue(_))
        ));
        assert_eq!(detection_rate(&[], 0.05).unwrap(), 0.0);
    }

    #[test]
    fn detection_rate_uniform_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!((detection_rate(&p, 0.10).unwrap() - 0.10).abs() < 0.01);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = PopulationSpec::standard(0.5, 0.25, 300).unwrap();
        let b = PopulationSpec::standard(0.5, 0.50, 300).unwrap();
        assert_ne!(condition_id(&a), condition_id(&b));
        assert_eq!(condition_id(&a), condition_id(&a.clone()));
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| replication_seed(1, condition_id(&a), r)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn replication_is_deterministic() {
        let spec = PopulationSpec::standard(0.5, 0.5, 90).unwrap();
        let a = run_replication(&spec, 77).unwrap();
        assert_eq!(a, run_replication(&spec, 77).unwrap());
        assert!(a.rotated.is_some());
        assert!(a.reports.iter().all(Option::is_some));
    }

    #[test]
    fn single_replication_summary() {
        let spec = PopulationSpec::standard(0.5, 1.0, 150).unwrap();
        let s = run_condition(&spec, 1, 5, &[0.05], 1, &HarnessOptions::default()).unwrap();
        let pop = Population::new(spec).unwrap();
        let reps = run_condition_replications(&spec, 1, 5, 1, &HarnessOptions::default()).unwrap();
        let (sal, _) = split_cells(&pop, reps[0].rotated.as_ref().unwrap());
        assert_eq!(sal.len(), 15);
        let (m, sd) = mean_sd(&sal);
        assert_eq!((s.mean_salient, s.sd_salient), (m, sd));
        assert!(s.sd_salient > 0.0);
    }

    #[test]
    fn rates_monotone_in_alpha() {
        let spec = PopulationSpec::standard(0.5, 0.5, 90).unwrap();
        let s = run_condition(&spec, 20, 3, &[0.05, 0.10, 0.20], 2, &HarnessOptions::default()).unwrap();
        for test in KurtosisTest::ALL {
            let r: Vec<f64> = [0.05, 0.10, 0.20].iter().map(|&a| s.rate(test, a).unwrap()).collect();
            assert!(r[0] <= r[1] && r[1] <= r[2]);
        }
    }

    #[test]
    fn per_replication_aggregation_differs_only_slightly() {
        let spec = PopulationSpec::standard(0.7, 0.75, 150).unwrap();
        let pooled = run_condition(&spec, 10, 9, &[], 1, &HarnessOptions::default()).unwrap();
        let opts = HarnessOptions {
            aggregation: Aggregation::PerReplication,
            ..Default::default()
        };
        let per = run_condition(&spec, 10, 9, &[], 1, &opts).unwrap();
        assert!((pooled.mean_salient - per.mean_salient).abs() < 1e-12);
        assert!(per.sd_salient <= pooled.sd_salient + 1e-12);
    }

    #[test]
    fn empty_grid_is_empty() {
        let mut g = ConditionGrid::standard_design(5, 1);
        g.lambda_r.clear();
        assert!(run_grid(&g, 2, &HarnessOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn grid_validation() {
        let mut g = ConditionGrid::standard_design(0, 1);
        assert!(g.validate().is_err());
        g.reps = 1;
        g.alphas.push(1.5);
        assert!(g.validate().is_err());
        g.alphas.pop();
        g.w_r2.push(0.0);
        assert!(g.validate().is_err());
        assert_eq!(ConditionGrid::standard_design(1, 1).conditions().unwrap().len(), 24);
    }
}
