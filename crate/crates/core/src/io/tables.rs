//! Delimited output tables. Every file begins with a schema line
//! `# compmed-table v1 <kind>` followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::{Terminator, WriterBuilder};

use crate::error::{Error, Result};
use crate::estimands::EffectSummary;
use crate::io::preprocess::PreprocessLog;
use crate::mcmc::{write_trace, IndicatorFamily, PosteriorTrace};
use crate::model::Dataset;
use crate::sim::{GroundTruth, ScoreReport, SweepRow};
use crate::strategy::Selection;

pub const SCHEMA_VERSION: u32 = 1;

type CsvWriter = csv::Writer<BufWriter<File>>;

fn create(path: &Path, kind: &str) -> Result<CsvWriter> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "# compmed-table v{SCHEMA_VERSION} {kind}").map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(buf))
}

fn finish(mut w: CsvWriter, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn rec<I, S>(w: &mut CsvWriter, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| Error::csv(path, e))
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `counts.csv`, `outcome.csv`, `treatment.csv` and, when present,
/// `covariates.csv` and `dm_covariates.csv` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let p = dir.join("counts.csv");
    let mut w = create(&p, "counts")?;
    rec(&mut w, &p, std::iter::once("subject").chain(data.taxa.iter().map(String::as_str)))?;
    for i in 0..data.n() {
        let row = std::iter::once(data.subjects[i].clone())
            .chain(data.counts.row(i).iter().map(u64::to_string));
        rec(&mut w, &p, row)?;
    }
    finish(w, &p)?;

    let p = dir.join("outcome.csv");
    let mut w = create(&p, "outcome")?;
    rec(&mut w, &p, ["subject", "outcome"])?;
    for i in 0..data.n() {
        rec(&mut w, &p, [data.subjects[i].clone(), data.outcome[i].to_string()])?;
    }
    finish(w, &p)?;

    let p = dir.join("treatment.csv");
    let mut w = create(&p, "treatment")?;
    rec(&mut w, &p, ["subject", "treatment"])?;
    for i in 0..data.n() {
        rec(&mut w, &p, [data.subjects[i].as_str(), flag(data.treatment[i])])?;
    }
    finish(w, &p)?;

    for (file, names, m) in [
        ("covariates.csv", &data.covariate_names, &data.covariates),
        ("dm_covariates.csv", &data.dm_covariate_names, &data.dm_covariates),
    ] {
        if names.is_empty() {
            continue;
        }
        let p = dir.join(file);
        let mut w = create(&p, "covariates")?;
        rec(&mut w, &p, std::iter::once("subject").chain(names.iter().map(String::as_str)))?;
        for i in 0..data.n() {
            let row = std::iter::once(data.subjects[i].clone()).chain(m.row(i).iter().map(f64::to_string));
            rec(&mut w, &p, row)?;
        }
        finish(w, &p)?;
    }
    Ok(())
}

/// Per-taxon generating parameters plus the scalar targets.
pub fn write_truth(path: &Path, data: &Dataset, truth: &GroundTruth) -> Result<()> {
    let mut w = create(path, "truth")?;
    rec(&mut w, path, ["taxon", "alpha", "phi", "beta_log", "active"])?;
    for j in 0..data.taxa_count() {
        rec(
            &mut w,
            path,
            [
                data.taxa[j].clone(),
                truth.alpha[j].to_string(),
                truth.phi[j].to_string(),
                truth.beta_log[j].to_string(),
                flag(truth.active[j]).to_string(),
            ],
        )?;
    }
    rec(&mut w, path, ["direct", "", "", &truth.direct.to_string(), ""])?;
    rec(&mut w, path, ["overall_indirect", "", "", &truth.overall_indirect.to_string(), ""])?;
    finish(w, path)
}

const EFFECT_HEADER: [&str; 8] = ["estimand", "taxon", "profile", "mean", "lower", "upper", "selected", "mppi"];

fn effect_row(w: &mut CsvWriter, path: &Path, e: &EffectSummary<f64>, taxa: &[String]) -> Result<()> {
    rec(
        w,
        path,
        [
            e.name.split('[').next().unwrap_or(&e.name).to_string(),
            e.taxon.map(|j| taxa[j].clone()).unwrap_or_default(),
            e.profile.map(|p| p.to_string()).unwrap_or_default(),
            e.mean.to_string(),
            e.lower.to_string(),
            e.upper.to_string(),
            flag(e.selected).to_string(),
            e.mppi.map(|m| m.to_string()).unwrap_or_default(),
        ],
    )
}

/// Effect summaries: direct, overall per profile, relative per profile
/// and taxon.
pub fn write_effects(path: &Path, sel: &Selection, taxa: &[String]) -> Result<()> {
    let mut w = create(path, "effects")?;
    rec(&mut w, path, EFFECT_HEADER)?;
    effect_row(&mut w, path, &sel.direct, taxa)?;
    for e in sel.overall.iter().chain(&sel.relative) {
        effect_row(&mut w, path, e, taxa)?;
    }
    finish(w, path)
}

/// Same layout as [`write_effects`] for an arbitrary list.
pub fn write_effect_list(path: &Path, effects: &[EffectSummary<f64>], taxa: &[String]) -> Result<()> {
    let mut w = create(path, "effects")?;
    rec(&mut w, path, EFFECT_HEADER)?;
    for e in effects {
        effect_row(&mut w, path, e, taxa)?;
    }
    finish(w, path)
}

/// Taxon-level and per-profile decisions.
pub fn write_selection(path: &Path, sel: &Selection, taxa: &[String]) -> Result<()> {
    let mut w = create(path, "selection")?;
    let mut header = vec!["taxon".to_string(), "selected".to_string()];
    if sel.per_profile.len() > 1 {
        header.extend((0..sel.per_profile.len()).map(|p| format!("profile{p}")));
    }
    rec(&mut w, path, &header)?;
    for (j, name) in taxa.iter().enumerate() {
        let mut row = vec![name.clone(), flag(sel.selected[j]).to_string()];
        if sel.per_profile.len() > 1 {
            row.extend(sel.per_profile.iter().map(|f| flag(f[j]).to_string()));
        }
        rec(&mut w, path, &row)?;
    }
    finish(w, path)
}

/// Marginal posterior inclusion probabilities of every indicator.
pub fn write_mppi(path: &Path, trace: &PosteriorTrace, data: &Dataset) -> Result<()> {
    let mut w = create(path, "mppi")?;
    rec(&mut w, path, ["family", "term", "mppi"])?;
    let families = [
        (IndicatorFamily::Treatment, "treatment"),
        (IndicatorFamily::Balance, "balance"),
        (IndicatorFamily::Covariate, "covariate"),
        (IndicatorFamily::DmCovariate, "dm_covariate"),
    ];
    for (fam, label) in families {
        for (k, m) in trace.mppi(fam)?.iter().enumerate() {
            let term = match fam {
                IndicatorFamily::Treatment => data.taxa[k].clone(),
                IndicatorFamily::Balance => {
                    format!("balance{}:{}", k + 1, data.taxa[trace.scheme.taxon_order()[k]])
                }
                IndicatorFamily::Covariate => data.covariate_names[k].clone(),
                IndicatorFamily::DmCovariate => {
                    let p = data.p_dm();
                    format!("{}:{}", data.taxa[k / p], data.dm_covariate_names[k % p])
                }
            };
            rec(&mut w, path, [label.to_string(), term, m.to_string()])?;
        }
    }
    finish(w, path)
}

pub fn write_trace_file(path: &Path, trace: &PosteriorTrace) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "# compmed-table v{SCHEMA_VERSION} trace").map_err(|e| Error::io(path, e))?;
    write_trace(trace, &mut buf).map_err(|e| Error::csv(path, e))?;
    buf.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_preprocess_log(path: &Path, log: &PreprocessLog) -> Result<()> {
    let mut w = create(path, "preprocess")?;
    rec(&mut w, path, ["taxon", "zero_fraction", "kept"])?;
    for (name, frac) in &log.zero_fraction {
        let kept = log.kept.contains(name);
        rec(&mut w, path, [name.clone(), frac.to_string(), flag(kept).to_string()])?;
    }
    finish(w, path)
}

/// One row per method: selection metrics and estimation metrics for the
/// direct and overall indirect effects.
pub fn write_study_report(path: &Path, reports: &[ScoreReport]) -> Result<()> {
    let mut w = create(path, "study")?;
    rec(
        &mut w,
        path,
        [
            "method", "replicates", "failed", "sens", "spec", "mcc", "direct_bias", "direct_mse",
            "direct_cov", "overall_bias", "overall_mse", "overall_cov", "library_min", "library_max",
        ],
    )?;
    for r in reports {
        rec(
            &mut w,
            path,
            [
                r.method.to_string(),
                r.rows.len().to_string(),
                r.failures.len().to_string(),
                r.sens.to_string(),
                r.spec.to_string(),
                r.mcc.to_string(),
                r.direct.bias.to_string(),
                r.direct.mse.to_string(),
                r.direct.coverage.to_string(),
                r.overall.bias.to_string(),
                r.overall.mse.to_string(),
                r.overall.coverage.to_string(),
                r.library_min.to_string(),
                r.library_max.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Per-replicate detail rows behind [`write_study_report`].
pub fn write_replicates(path: &Path, reports: &[ScoreReport]) -> Result<()> {
    let mut w = create(path, "replicates")?;
    rec(
        &mut w,
        path,
        [
            "method", "replicate", "tp", "fp", "tn", "fn", "sens", "spec", "mcc", "selected", "fits",
            "direct_mean", "direct_lower", "direct_upper", "true_direct", "overall_mean", "overall_lower",
            "overall_upper", "true_overall",
        ],
    )?;
    for r in reports {
        for row in &r.rows {
            let s = &row.score;
            let selected = row.selected.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" ");
            rec(
                &mut w,
                path,
                [
                    row.method.to_string(),
                    row.replicate.to_string(),
                    s.tp.to_string(),
                    s.fp.to_string(),
                    s.tn.to_string(),
                    s.fn_.to_string(),
                    s.sens.to_string(),
                    s.spec.to_string(),
                    s.mcc.to_string(),
                    selected,
                    row.fits.to_string(),
                    row.direct.mean.to_string(),
                    row.direct.lower.to_string(),
                    row.direct.upper.to_string(),
                    row.true_direct.to_string(),
                    row.overall.mean.to_string(),
                    row.overall.lower.to_string(),
                    row.overall.upper.to_string(),
                    row.true_overall.to_string(),
                ],
            )?;
        }
    }
    finish(w, path)
}

/// Replicates that failed, with the error message.
pub fn write_failures(path: &Path, reports: &[ScoreReport]) -> Result<()> {
    let mut w = create(path, "failures")?;
    rec(&mut w, path, ["replicate", "error"])?;
    if let Some(r) = reports.first() {
        for (rep, msg) in &r.failures {
            rec(&mut w, path, [rep.to_string(), msg.clone()])?;
        }
    }
    finish(w, path)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(path, "sweep")?;
    rec(&mut w, path, ["cell", "method", "sens", "spec", "mcc", "selected"])?;
    for r in rows {
        let selected = r.selected.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" ");
        rec(
            &mut w,
            path,
            [
                r.cell.clone(),
                r.method.to_string(),
                r.score.sens.to_string(),
                r.score.spec.to_string(),
                r.score.mcc.to_string(),
                selected,
            ],
        )?;
    }
    finish(w, path)
}
