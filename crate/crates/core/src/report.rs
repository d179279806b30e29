//! CSV input and output.
//!
//! Numbers are written with at least seven significant digits in plain
//! decimal notation, independent of locale.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::datagen::DataMatrix;
use crate::error::{Error, Result};
use crate::harness::{ConditionSummary, Replication};
use crate::model::LoadingMatrix;
use crate::mvnkurt::{KurtosisReport, PairReport};

/// Fixed-point rendering with at least seven significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (6 - magnitude).clamp(1, 40) as usize;
    format!("{x:.decimals$}")
}

/// Column label for a significance level, e.g. `.05` or `.001`.
pub fn fmt_alpha(alpha: f64) -> String {
    let hundredths = alpha * 100.0;
    let s = if (hundredths - hundredths.round()).abs() < 1e-9 {
        format!("{alpha:.2}")
    } else {
        format!("{alpha}")
    };
    s.strip_prefix('0').map(str::to_string).unwrap_or(s)
}

/// Reads a `cases x variables` CSV with a header row.
pub fn read_cases_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cases_csv(&text, path)
}

pub fn parse_cases_csv(text: &str, origin: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            reason: "empty header".into(),
        });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: format!("column `{}`: `{field}` is not a number", header[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    reason: format!("column `{}`: non-finite value", header[col]),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let m = DMatrix::from_row_slice(rows, header.len(), &values);
    Ok((header, m))
}

/// Writes a data matrix as `cases x variables` with header `v1..vp`.
pub fn write_data_csv<W: Write>(data: &DataMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=data.variables()).map(|j| format!("v{j}")))?;
    for i in 0..data.cases() {
        w.write_record(data.values().column(i).iter().map(|&v| fmt_num(v)))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const TABLE1_HEADER: [&str; 10] = [
    "lambda_r",
    "w_r2",
    "n",
    "reps",
    "mean_salient",
    "sd_salient",
    "mean_nonsalient",
    "sd_nonsalient",
    "n_nonconverged",
    "n_heywood",
];

pub const TABLE2_HEADER: [&str; 7] = ["lambda_r", "w_r2", "n", "reps", "test", "alpha", "detection_rate"];

pub fn write_table1<W: Write>(summaries: &[ConditionSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE1_HEADER)?;
    for s in summaries {
        w.write_record([
            fmt_num(s.spec.lambda_r),
            fmt_num(s.spec.w_r2),
            s.spec.n.to_string(),
            s.reps.to_string(),
            fmt_num(s.mean_salient),
            fmt_num(s.sd_salient),
            fmt_num(s.mean_nonsalient),
            fmt_num(s.sd_nonsalient),
            s.n_nonconverged.to_string(),
            s.n_heywood.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_table2<W: Write>(summaries: &[ConditionSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE2_HEADER)?;
    for s in summaries {
        for d in &s.detection {
            w.write_record([
                fmt_num(s.spec.lambda_r),
                fmt_num(s.spec.w_r2),
                s.spec.n.to_string(),
                s.reps.to_string(),
                d.test.name().to_string(),
                fmt_num(d.alpha),
                fmt_num(d.rate),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per replication and variable: the loadings on factors 1 and 2.
pub fn write_scatter<W: Write>(target: &LoadingMatrix, replications: &[Replication], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep", "variable", "salient_factor", "loading_f1", "loading_f2"])?;
    for r in replications {
        let Some(rot) = &r.rotated else { continue };
        for j in 0..rot.nrows() {
            w.write_record([
                (r.rep + 1).to_string(),
                (j + 1).to_string(),
                (target.salient_factor(j) + 1).to_string(),
                fmt_num(rot[(j, 0)]),
                fmt_num(rot[(j, 1)]),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn significance_header(alphas: &[f64]) -> Vec<String> {
    alphas
        .iter()
        .map(|&a| format!("significant@{}", fmt_alpha(a)))
        .collect()
}

pub fn write_kurtosis_table<W: Write>(reports: &[KurtosisReport], alphas: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["test", "statistic", "standardized", "df", "p_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(significance_header(alphas));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.test.name().to_string(),
            fmt_num(r.statistic),
            fmt_num(r.standardized),
            r.df.map(|d| d.to_string()).unwrap_or_default(),
            fmt_num(r.p_value),
        ];
        row.extend(alphas.iter().map(|&a| r.significant(a).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_pairwise_table<W: Write>(pairs: &[PairReport], names: &[String], alphas: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["var_i", "var_j", "statistic", "standardized", "p_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(significance_header(alphas));
    w.write_record(&header)?;
    for pr in pairs {
        let name = |k: usize| names.get(k).cloned().unwrap_or_else(|| format!("v{}", k + 1));
        let mut row = vec![
            name(pr.i),
            name(pr.j),
            fmt_num(pr.report.statistic),
            fmt_num(pr.report.standardized),
            fmt_num(pr.report.p_value),
        ];
        row.extend(alphas.iter().map(|&a| pr.report.significant(a).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Files staged in memory and written only once all of them are complete.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    /// Writes each file to a temporary sibling and renames it into place.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut tmp = Vec::new();
        for (path, bytes) in &self.files {
            let t = path.with_extension("csv.partial");
            fs::write(&t, bytes).map_err(|e| Error::io(&t, e))?;
            tmp.push((t, path.clone()));
        }
        let mut done = Vec::new();
        for (t, path) in tmp {
            fs::rename(&t, &path).map_err(|e| Error::io(&path, e))?;
            done.push(path);
        }
        Ok(done)
    }
}
