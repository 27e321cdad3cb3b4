use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Dataset;

/// Input files. The counts table fixes the subject set and order; every
/// other table is keyed by a `subject` column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputPaths {
    /// `subject,<taxon>,...` with nonnegative integer counts.
    pub counts: PathBuf,
    /// Needs an `outcome` column.
    pub outcome: PathBuf,
    /// Needs a `treatment` column with values 0/1.
    pub treatment: PathBuf,
    /// Outcome-level covariates: every non-`subject` column.
    pub covariates: Option<PathBuf>,
    /// Count-level covariates: every non-`subject` column.
    pub dm_covariates: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    /// `(file, subject)` rows whose subject is absent from the counts table.
    pub unmatched: Vec<(String, String)>,
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<StringRecord>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("subject") {
        return Err(Error::Data(format!(
            "{}: first column must be `subject`",
            path.display()
        )));
    }
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(path, e))?;
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

impl Table {
    fn name(&self) -> String {
        self.path.display().to_string()
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!("{}: missing `{name}` column", self.name()))
        })
    }

    /// Subject → row, rejecting duplicates.
    fn index(&self) -> Result<HashMap<&str, &StringRecord>> {
        let mut map = HashMap::new();
        for r in &self.rows {
            if map.insert(&r[0], r).is_some() {
                return Err(Error::Data(format!("{}: duplicate subject `{}`", self.name(), &r[0])));
            }
        }
        Ok(map)
    }

    /// Values of `cols` for each subject in `subjects`, in that order.
    fn aligned(
        &self,
        subjects: &[String],
        cols: &[usize],
        report: &mut IngestReport,
        parse: impl Fn(&str) -> Option<f64>,
    ) -> Result<Vec<Vec<f64>>> {
        let index = self.index()?;
        let known: HashSet<&str> = subjects.iter().map(String::as_str).collect();
        for r in &self.rows {
            if !known.contains(&r[0]) {
                report.unmatched.push((self.name(), r[0].to_string()));
            }
        }
        subjects
            .iter()
            .map(|s| {
                let row = index.get(s.as_str()).ok_or_else(|| {
                    Error::Data(format!("{}: no row for subject `{s}`", self.name()))
                })?;
                cols.iter()
                    .map(|&c| {
                        let raw = row.get(c).unwrap_or("");
                        parse(raw).ok_or_else(|| {
                            Error::Data(format!(
                                "{}: subject `{s}`, column `{}`: invalid value `{raw}`",
                                self.name(),
                                self.header[c]
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn finite(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn binary(raw: &str) -> Option<f64> {
    match raw {
        "0" | "false" => Some(0.0),
        "1" | "true" => Some(1.0),
        _ => None,
    }
}

fn covariate_block(
    path: Option<&Path>,
    subjects: &[String],
    report: &mut IngestReport,
) -> Result<(Matrix<f64>, Vec<String>)> {
    let Some(path) = path else {
        return Ok((Matrix::filled(subjects.len(), 0, 0.0), Vec::new()));
    };
    let t = read_table(path)?;
    let cols: Vec<usize> = (1..t.header.len()).collect();
    let names = cols.iter().map(|&c| t.header[c].clone()).collect();
    let rows = t.aligned(subjects, &cols, report, finite)?;
    Ok((
        Matrix::from_vec(subjects.len(), cols.len(), rows.concat()),
        names,
    ))
}

/// Reads and aligns all input tables into a validated dataset with the
/// default pseudocount of 0.5.
pub fn ingest(paths: &InputPaths) -> Result<(Dataset, IngestReport)> {
    let mut report = IngestReport::default();
    let counts_t = read_table(&paths.counts)?;
    let taxa: Vec<String> = counts_t.header[1..].to_vec();
    if taxa.is_empty() {
        return Err(Error::Data(format!("{}: no taxon columns", counts_t.name())));
    }
    counts_t.index()?;
    let n = counts_t.rows.len();
    let mut subjects = Vec::with_capacity(n);
    let mut counts = Matrix::filled(n, taxa.len(), 0u64);
    for (i, r) in counts_t.rows.iter().enumerate() {
        subjects.push(r[0].to_string());
        if r.len() != taxa.len() + 1 {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, expected {}",
                counts_t.name(),
                i + 1,
                r.len(),
                taxa.len() + 1
            )));
        }
        for j in 0..taxa.len() {
            let raw = &r[j + 1];
            counts[(i, j)] = match raw.parse::<u64>() {
                Ok(v) => v,
                Err(_) => {
                    let what = if raw.parse::<f64>().map(|v| v < 0.0).unwrap_or(false) {
                        "negative count"
                    } else {
                        "non-integer count"
                    };
                    return Err(Error::Data(format!(
                        "{}: {what} `{raw}` at row {} (subject `{}`), column {} (`{}`)",
                        counts_t.name(),
                        i + 1,
                        &r[0],
                        j + 2,
                        taxa[j]
                    )));
                }
            };
        }
    }

    let out_t = read_table(&paths.outcome)?;
    let oc = out_t.column("outcome")?;
    let outcome: Vec<f64> = out_t
        .aligned(&subjects, &[oc], &mut report, finite)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    if outcome.iter().all(|v| *v == outcome[0]) {
        return Err(Error::Data(format!("{}: outcome is constant", out_t.name())));
    }

    let trt_t = read_table(&paths.treatment)?;
    let tc = trt_t.column("treatment")?;
    let treatment: Vec<bool> = trt_t
        .aligned(&subjects, &[tc], &mut report, binary)?
        .into_iter()
        .map(|v| v[0] == 1.0)
        .collect();

    let (covariates, covariate_names) = covariate_block(paths.covariates.as_deref(), &subjects, &mut report)?;
    let (dm_covariates, dm_covariate_names) =
        covariate_block(paths.dm_covariates.as_deref(), &subjects, &mut report)?;

    let ds = Dataset {
        subjects,
        taxa,
        counts,
        outcome,
        treatment,
        covariates,
        covariate_names,
        dm_covariates,
        dm_covariate_names,
        pseudocount: 0.5,
    };
    ds.validate()?;
    Ok((ds, report))
}
