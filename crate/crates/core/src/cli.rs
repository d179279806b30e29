//! Command-line front end. The `rqsim` binary is a thin wrapper around [`run`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::{Table, Value};

use crate::datagen::{generate_sample, DataMatrix};
use crate::demo::group_lines;
use crate::error::{Error, Result};
use crate::harness::{
    run_condition_replications, run_grid, Aggregation, ConditionGrid, ConditionSummary, HarnessOptions, DEFAULT_SEED,
};
use crate::model::PopulationSpec;
use crate::mvnkurt::{kurtosis_battery, pairwise_bivariate_kurtosis, KurtosisReport, KurtosisTest, Sidedness};
use crate::report::{self, fmt_alpha, Staged};

/// Simulation settings, read from TOML and overridden by global flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub p: usize,
    pub q_r: usize,
    pub q_q: usize,
    pub lambda_r: Vec<f64>,
    pub lambda_q: f64,
    pub w_r2: Vec<f64>,
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub aggregation: Aggregation,
    pub exclude_flagged: bool,
    pub sidedness: Sidedness,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = ConditionGrid::standard_design(2000, DEFAULT_SEED);
        Self {
            p: g.p,
            q_r: g.q_r,
            q_q: g.q_q,
            lambda_r: g.lambda_r,
            lambda_q: g.lambda_q,
            w_r2: g.w_r2,
            n: g.n,
            reps: g.reps,
            seed: g.master_seed,
            alphas: g.alphas,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            out_dir: PathBuf::from("."),
            aggregation: Aggregation::Pooled,
            exclude_flagged: false,
            sidedness: Sidedness::TwoSided,
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(config_err(
            key,
            format!("expected a number, found {}", other.type_str()),
        )),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(config_err(key, format!("{i} is negative"))),
        other => Err(config_err(
            key,
            format!("expected an integer, found {}", other.type_str()),
        )),
    }
}

fn as_list<T>(key: &str, v: &Value, item: fn(&str, &Value) -> Result<T>) -> Result<Vec<T>> {
    match v {
        Value::Array(items) => items.iter().map(|x| item(key, x)).collect(),
        scalar => Ok(vec![item(key, scalar)?]),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| config_err(key, format!("expected a string, found {}", v.type_str())))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::Config {
                key,
                reason: e.message().trim().to_string(),
            }
        })?;
        let mut cfg = Self::default();
        for (key, v) in &table {
            let k = key.as_str();
            match k {
                "p" => cfg.p = as_usize(k, v)?,
                "q_r" => cfg.q_r = as_usize(k, v)?,
                "q_q" => cfg.q_q = as_usize(k, v)?,
                "lambda_r" => cfg.lambda_r = as_list(k, v, as_f64)?,
                "lambda_q" => cfg.lambda_q = as_f64(k, v)?,
                "w_r2" => cfg.w_r2 = as_list(k, v, as_f64)?,
                "n" => cfg.n = as_list(k, v, as_usize)?,
                "reps" => cfg.reps = as_usize(k, v)?,
                "seed" => cfg.seed = as_usize(k, v)? as u64,
                "alphas" => cfg.alphas = as_list(k, v, as_f64)?,
                "workers" => cfg.workers = as_usize(k, v)?,
                "out_dir" => cfg.out_dir = PathBuf::from(as_str(k, v)?),
                "exclude_flagged" => {
                    cfg.exclude_flagged = v
                        .as_bool()
                        .ok_or_else(|| config_err(k, format!("expected a boolean, found {}", v.type_str())))?
                }
                "aggregation" => {
                    cfg.aggregation = match as_str(k, v)? {
                        "pooled" => Aggregation::Pooled,
                        "per_replication" => Aggregation::PerReplication,
                        other => return Err(config_err(k, format!("`{other}` is not `pooled` or `per_replication`"))),
                    }
                }
                "sidedness" => {
                    cfg.sidedness = match as_str(k, v)? {
                        "two_sided" => Sidedness::TwoSided,
                        "lower" => Sidedness::Lower,
                        other => return Err(config_err(k, format!("`{other}` is not `two_sided` or `lower`"))),
                    }
                }
                _ => return Err(config_err(k, "unknown key")),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn grid(&self) -> ConditionGrid {
        ConditionGrid {
            p: self.p,
            q_r: self.q_r,
            q_q: self.q_q,
            lambda_q: self.lambda_q,
            lambda_r: self.lambda_r.clone(),
            w_r2: self.w_r2.clone(),
            n: self.n.clone(),
            reps: self.reps,
            alphas: self.alphas.clone(),
            master_seed: self.seed,
        }
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            aggregation: self.aggregation,
            exclude_flagged: self.exclude_flagged,
            sidedness: self.sidedness,
            ..HarnessOptions::default()
        }
    }

    /// Checks every setting; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        for (key, list_empty) in [
            ("lambda_r", self.lambda_r.is_empty()),
            ("w_r2", self.w_r2.is_empty()),
            ("n", self.n.is_empty()),
            ("alphas", self.alphas.is_empty()),
        ] {
            if list_empty {
                return Err(config_err(key, "must not be empty"));
            }
        }
        if self.reps == 0 {
            return Err(config_err("reps", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(config_err("workers", "must be at least 1"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(config_err("alphas", format!("{a} is outside (0, 1)")));
        }
        self.grid().validate().map_err(|e| match e {
            Error::InvalidSpec { field, reason } => config_err(field, reason),
            Error::InvalidArgument { arg, reason } => config_err(arg, reason),
            other => other,
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rqsim",
    version,
    about = "R/Q-factor loading bias simulation and kurtosis screening"
)]
pub struct Cli {
    /// TOML file with simulation settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replications per condition.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Significance level; repeat for several. The first one drives `screen`'s exit code.
    #[arg(long = "alpha", global = true)]
    pub alphas: Vec<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the condition grid and write table1.csv and table2.csv.
    Simulate(SimulateArgs),
    /// Rotated loadings on factors 1 and 2 for every replication of one condition.
    Scatter(ConditionArgs),
    /// Two variables on parallel group lines, with the kurtosis tests applied.
    DemoFig3(DemoArgs),
    /// Write one simulated sample as CSV.
    Generate(GenerateArgs),
    /// Screen a `cases x variables` CSV for non-normal kurtosis.
    Screen(ScreenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    Pooled,
    PerReplication,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Leave non-converged and Heywood replications out of the loading summaries.
    #[arg(long)]
    pub exclude_flagged: bool,
    /// Count only significantly platykurtic results as detections.
    #[arg(long)]
    pub lower_tail: bool,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    #[arg(long)]
    pub lambda_r: f64,
    #[arg(long)]
    pub w_r2: f64,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 145)]
    pub n: usize,
    /// Number of groups.
    #[arg(long, default_value_t = 3)]
    pub q_q: usize,
    #[arg(long, default_value_t = 0.40, allow_negative_numbers = true)]
    pub target_r: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub w_r2: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Output file, or `-` for stdout. Defaults to `<out-dir>/sample.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// CSV file with a header row, one row per case.
    pub input: PathBuf,
    /// Also run bivariate Mardia tests for every pair of variables.
    #[arg(long)]
    pub pairwise: bool,
}

impl Cli {
    /// Config file (or defaults) with the global flags applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if !self.alphas.is_empty() {
            cfg.alphas = self.alphas.clone();
        }
        if let Command::Simulate(args) = &self.command {
            if let Some(a) = args.aggregation {
                cfg.aggregation = match a {
                    AggregationArg::Pooled => Aggregation::Pooled,
                    AggregationArg::PerReplication => Aggregation::PerReplication,
                };
            }
            cfg.exclude_flagged |= args.exclude_flagged;
            if args.lower_tail {
                cfg.sidedness = Sidedness::Lower;
            }
        }
        Ok(cfg)
    }
}

/// Exit status for successful runs of `screen`: nothing significant.
pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// `screen` found at least one significant kurtosis test.
pub const EXIT_SIGNIFICANT: i32 = 2;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_CLEAN;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg, out).map(|_| EXIT_CLEAN),
        Command::Scatter(a) => cmd_scatter(&cfg, a.lambda_r, a.w_r2, a.n, out).map(|_| EXIT_CLEAN),
        Command::DemoFig3(a) => cmd_demo_fig3(&cfg, a.n, a.q_q, a.target_r, out).map(|_| EXIT_CLEAN),
        Command::Generate(a) => cmd_generate(&cfg, a, out).map(|_| EXIT_CLEAN),
        Command::Screen(a) => {
            let write_files = cli.out_dir.is_some();
            cmd_screen(&cfg, &a.input, a.pairwise, write_files, out)
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !dir.is_dir() {
        return Err(config_err("out_dir", format!("{} is not a directory", dir.display())));
    }
    Ok(())
}

fn render<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the whole grid, then writes `table1.csv` and `table2.csv`.
pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ConditionSummary>> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out_dir)?;
    let summaries = run_grid(&cfg.grid(), cfg.workers, &cfg.harness_options())?;

    let mut staged = Staged::default();
    staged.add(
        cfg.out_dir.join("table1.csv"),
        render(|b| report::write_table1(&summaries, b))?,
    );
    staged.add(
        cfg.out_dir.join("table2.csv"),
        render(|b| report::write_table2(&summaries, b))?,
    );
    let written = staged.commit()?;

    print_summary(cfg, &summaries, out).map_err(io_out)?;
    for path in written {
        writeln!(out, "wrote {}", path.display()).map_err(io_out)?;
    }
    Ok(summaries)
}

fn print_summary(cfg: &RunConfig, summaries: &[ConditionSummary], out: &mut dyn Write) -> std::io::Result<()> {
    let alpha = cfg.alphas[0];
    writeln!(
        out,
        "{} conditions x {} replications, seed {}, detection at alpha {}",
        summaries.len(),
        cfg.reps,
        cfg.seed,
        fmt_alpha(alpha)
    )?;
    writeln!(
        out,
        "{:>8} {:>6} {:>5}  {:>14}  {:>14}   {:>6} {:>6} {:>6}  flagged",
        "lambda_r", "w_r2", "n", "salient", "non-salient", "small", "sriv", "mardia"
    )?;
    for s in summaries {
        let rate = |t| {
            s.rate(t, alpha)
                .map(|r| format!("{:6.3}", r))
                .unwrap_or_else(|| "     -".into())
        };
        writeln!(
            out,
            "{:>8.2} {:>6.2} {:>5}  {:>6.3} ({:.3})  {:>6.3} ({:.3})   {} {} {}  {}",
            s.spec.lambda_r,
            s.spec.w_r2,
            s.spec.n,
            s.mean_salient,
            s.sd_salient,
            s.mean_nonsalient,
            s.sd_nonsalient,
            rate(KurtosisTest::Small),
            rate(KurtosisTest::Srivastava),
            rate(KurtosisTest::Mardia),
            s.n_nonconverged + s.n_heywood + s.n_failed,
        )?;
    }
    Ok(())
}

/// Finds the grid condition with the given design values.
pub fn select_condition(cfg: &RunConfig, lambda_r: f64, w_r2: f64, n: usize) -> Result<PopulationSpec> {
    cfg.validate()?;
    cfg.grid()
        .conditions()?
        .into_iter()
        .find(|s| (s.lambda_r - lambda_r).abs() < 1e-9 && (s.w_r2 - w_r2).abs() < 1e-9 && s.n == n)
        .ok_or_else(|| Error::UnknownCondition(format!("lambda_r = {lambda_r}, w_r2 = {w_r2}, n = {n}")))
}

/// Writes `scatter_loadings.csv` for one condition.
pub fn cmd_scatter(cfg: &RunConfig, lambda_r: f64, w_r2: f64, n: usize, out: &mut dyn Write) -> Result<PathBuf> {
    let spec = select_condition(cfg, lambda_r, w_r2, n)?;
    if spec.q_r < 2 {
        return Err(config_err("q_r", "scatter needs at least 2 R-factors"));
    }
    prepare_out_dir(&cfg.out_dir)?;
    let opts = HarnessOptions {
        skip_kurtosis: true,
        ..cfg.harness_options()
    };
    let reps = run_condition_replications(&spec, cfg.reps, cfg.seed, cfg.workers, &opts)?;
    let target = spec.r_loadings()?;
    let mut staged = Staged::default();
    let path = cfg.out_dir.join("scatter_loadings.csv");
    staged.add(path.clone(), render(|b| report::write_scatter(&target, &reps, b))?);
    staged.commit()?;
    let usable = reps.iter().filter(|r| r.rotated.is_some()).count();
    writeln!(
        out,
        "{usable} of {} replications written to {}",
        reps.len(),
        path.display()
    )
    .map_err(io_out)?;
    Ok(path)
}

fn battery_reports(data: &nalgebra::DMatrix<f64>, out: &mut dyn Write) -> Result<Vec<KurtosisReport>> {
    let mut reports = Vec::new();
    let mut last_err = None;
    for (test, r) in KurtosisTest::ALL.iter().zip(kurtosis_battery(data)) {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                writeln!(out, "{test} not computed: {e}").map_err(io_out)?;
                last_err = Some(e);
            }
        }
    }
    match (reports.is_empty(), last_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(reports),
    }
}

/// Builds the parallel-lines data set and tests it.
pub fn cmd_demo_fig3(
    cfg: &RunConfig,
    n: usize,
    groups: usize,
    target_r: f64,
    out: &mut dyn Write,
) -> Result<Vec<KurtosisReport>> {
    let demo = group_lines(n, groups, target_r, cfg.seed)?;
    prepare_out_dir(&cfg.out_dir)?;
    writeln!(
        out,
        "n = {n}, groups = {groups}, r = {:.4}, var(z1 - z2) = {:.4}",
        demo.r(),
        demo.zdiff.sigma_d2
    )
    .map_err(io_out)?;
    let reports = battery_reports(&demo.cases_by_variables(), out)?;

    // The points file holds only the two variables so it can be screened as is.
    let points = render(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["z1", "z2"])?;
        for i in 0..n {
            w.write_record([report::fmt_num(demo.z1[i]), report::fmt_num(demo.z2[i])])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    let groups = render(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["case", "group"])?;
        for (i, g) in demo.group.iter().enumerate() {
            w.write_record([(i + 1).to_string(), (g + 1).to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    let table = render(|b| report::write_kurtosis_table(&reports, &cfg.alphas, b))?;
    let mut staged = Staged::default();
    staged.add(cfg.out_dir.join("fig3_points.csv"), points);
    staged.add(cfg.out_dir.join("fig3_groups.csv"), groups);
    staged.add(cfg.out_dir.join("fig3_tests.csv"), table.clone());
    out.write_all(&table).map_err(io_out)?;
    for path in staged.commit()? {
        writeln!(out, "wrote {}", path.display()).map_err(io_out)?;
    }
    Ok(reports)
}

/// Writes one sample from the first grid condition, with overrides.
pub fn cmd_generate(cfg: &RunConfig, args: &GenerateArgs, out: &mut dyn Write) -> Result<DataMatrix> {
    cfg.validate()?;
    let spec = PopulationSpec::new(
        cfg.p,
        args.n.unwrap_or(cfg.n[0]),
        cfg.q_r,
        cfg.q_q,
        args.lambda_r.unwrap_or(cfg.lambda_r[0]),
        cfg.lambda_q,
        args.w_r2.unwrap_or(cfg.w_r2[0]),
    )?;
    let data = generate_sample(&spec, cfg.seed)?;
    let bytes = render(|b| report::write_data_csv(&data, b))?;
    match &args.out {
        Some(p) if p.as_os_str() == "-" => out.write_all(&bytes).map_err(io_out)?,
        Some(p) => {
            fs::write(p, &bytes).map_err(|e| Error::io(p, e))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_out)?;
        }
        None => {
            prepare_out_dir(&cfg.out_dir)?;
            let p = cfg.out_dir.join("sample.csv");
            fs::write(&p, &bytes).map_err(|e| Error::io(&p, e))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_out)?;
        }
    }
    Ok(data)
}

/// Screens a CSV file. Returns [`EXIT_SIGNIFICANT`] if any of the three
/// multivariate tests rejects at the first alpha, [`EXIT_CLEAN`] otherwise.
/// The pairwise tests are descriptive and do not affect the status.
pub fn cmd_screen(
    cfg: &RunConfig,
    input: &Path,
    pairwise: bool,
    write_files: bool,
    out: &mut dyn Write,
) -> Result<i32> {
    if let Some(a) = cfg.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(config_err("alphas", format!("{a} is outside (0, 1)")));
    }
    let (names, data) = report::read_cases_csv(input)?;
    if let Some(j) = (0..data.ncols()).find(|&j| data.column(j).iter().all(|v| *v == data[(0, j)])) {
        return Err(Error::Parse {
            path: input.to_path_buf(),
            line: 1,
            reason: format!("column `{}` is constant", names[j]),
        });
    }
    let data = DataMatrix::from_cases_by_variables(&data)?.cases_by_variables();
    let reports = battery_reports(&data, out)?;
    let table = render(|b| report::write_kurtosis_table(&reports, &cfg.alphas, b))?;
    out.write_all(&table).map_err(io_out)?;

    let mut staged = Staged::default();
    if write_files {
        prepare_out_dir(&cfg.out_dir)?;
        staged.add(cfg.out_dir.join("screen_tests.csv"), table);
    }
    if pairwise {
        let pairs = pairwise_bivariate_kurtosis(&data)?;
        let ptable = render(|b| report::write_pairwise_table(&pairs, &names, &cfg.alphas, b))?;
        writeln!(out).map_err(io_out)?;
        out.write_all(&ptable).map_err(io_out)?;
        if write_files {
            staged.add(cfg.out_dir.join("screen_pairwise.csv"), ptable);
        }
    }
    staged.commit()?;

    let decision = cfg.alphas[0];
    Ok(if reports.iter().any(|r| r.significant(decision)) {
        EXIT_SIGNIFICANT
    } else {
        EXIT_CLEAN
    })
}
