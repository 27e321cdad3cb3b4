use std::io::Write;

use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DmParams, OutcomeParams};

use super::{AcceptanceStats, SamplerConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub outcome: OutcomeParams,
    pub dm: DmParams,
    /// `n × J` relative abundances, when `store_psi` was set.
    pub psi: Option<Matrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTrace {
    pub scheme: PartitionScheme,
    pub snapshots: Vec<Snapshot>,
    /// Posterior mean of `ψ` over retained samples.
    pub psi_mean: Matrix<f64>,
    pub acceptance: AcceptanceStats,
    pub config: SamplerConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndicatorFamily {
    /// ξ, one per balance.
    Balance,
    /// ν, one per outcome covariate.
    Covariate,
    /// φ-indicators, one per taxon.
    Treatment,
    /// ζ, `J × P_dm` row-major.
    DmCovariate,
}

impl PosteriorTrace {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<()> {
        if self.snapshots.is_empty() {
            Err(Error::Usage("posterior trace has no retained samples".into()))
        } else {
            Ok(())
        }
    }

    fn indicators(s: &Snapshot, which: IndicatorFamily) -> &[bool] {
        match which {
            IndicatorFamily::Balance => &s.outcome.xi,
            IndicatorFamily::Covariate => &s.outcome.nu,
            IndicatorFamily::Treatment => &s.dm.varphi,
            IndicatorFamily::DmCovariate => s.dm.zeta.as_slice(),
        }
    }

    pub fn mppi(&self, which: IndicatorFamily) -> Result<Vec<f64>> {
        self.ensure_nonempty()?;
        let width = Self::indicators(&self.snapshots[0], which).len();
        let mut acc = vec![0usize; width];
        for s in &self.snapshots {
            for (a, &on) in acc.iter_mut().zip(Self::indicators(s, which)) {
                *a += usize::from(on);
            }
        }
        let total = self.snapshots.len() as f64;
        Ok(acc.into_iter().map(|c| c as f64 / total).collect())
    }

    /// Column names of the trace table, in write order.
    pub fn column_names(&self) -> Vec<String> {
        let first = &self.snapshots[0];
        let mut cols = vec!["iteration".to_string(), "c0".into(), "c1".into(), "sigma2".into()];
        for k in 0..first.outcome.beta.len() {
            cols.push(format!("beta[{}]", k + 1));
        }
        for k in 0..first.outcome.xi.len() {
            cols.push(format!("xi[{}]", k + 1));
        }
        for p in 0..first.outcome.kappa.len() {
            cols.push(format!("kappa[{}]", p + 1));
        }
        for p in 0..first.outcome.nu.len() {
            cols.push(format!("nu[{}]", p + 1));
        }
        let parts = first.dm.alpha.len();
        for j in 0..parts {
            cols.push(format!("alpha[{}]", j + 1));
        }
        for j in 0..parts {
            cols.push(format!("phi[{}]", j + 1));
        }
        for j in 0..parts {
            cols.push(format!("varphi[{}]", j + 1));
        }
        let p_dm = first.dm.theta.cols();
        for j in 0..parts {
            for p in 0..p_dm {
                cols.push(format!("theta[{},{}]", j + 1, p + 1));
            }
        }
        for j in 0..parts {
            for p in 0..p_dm {
                cols.push(format!("zeta[{},{}]", j + 1, p + 1));
            }
        }
        cols
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes the trace as a comma-separated table: one header row naming every
/// parameter, one row per retained sample. Balance indices refer to ordered
/// balance positions; taxon indices to the original taxon order.
pub fn write_trace<W: Write>(trace: &PosteriorTrace, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    if trace.snapshots.is_empty() {
        w.flush()?;
        return Ok(());
    }
    w.write_record(trace.column_names())?;
    for s in &trace.snapshots {
        let mut row: Vec<String> = vec![
            s.iteration.to_string(),
            s.outcome.c0.to_string(),
            s.outcome.c1.to_string(),
            s.outcome.sigma2.to_string(),
        ];
        row.extend(s.outcome.beta.iter().map(f64::to_string));
        row.extend(s.outcome.xi.iter().map(|&b| flag(b).to_string()));
        row.extend(s.outcome.kappa.iter().map(f64::to_string));
        row.extend(s.outcome.nu.iter().map(|&b| flag(b).to_string()));
        row.extend(s.dm.alpha.iter().map(f64::to_string));
        row.extend(s.dm.phi.iter().map(f64::to_string));
        row.extend(s.dm.varphi.iter().map(|&b| flag(b).to_string()));
        row.extend(s.dm.theta.as_slice().iter().map(f64::to_string));
        row.extend(s.dm.zeta.as_slice().iter().map(|&b| flag(b).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
