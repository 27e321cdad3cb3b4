//! Direct, overall indirect and relative indirect effects computed from a
//! posterior trace.

use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mcmc::PosteriorTrace;
use crate::model::{Dataset, DmParams, OutcomeParams, MAX_LINEAR_PREDICTOR};
use crate::scalar::Real;
use crate::special::digamma;
use crate::summary::{equal_tail, mean};

/// Posterior summary of one estimand.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectSummary<T: Real> {
    pub name: String,
    /// Original taxon index for relative effects.
    pub taxon: Option<usize>,
    /// Index into the subject profiles; `None` at population level.
    pub profile: Option<usize>,
    pub samples: Vec<T>,
    pub mean: T,
    pub lower: T,
    pub upper: T,
    pub selected: bool,
    pub mppi: Option<T>,
}

impl<T: Real> EffectSummary<T> {
    pub fn from_samples(name: impl Into<String>, samples: Vec<T>, ci_level: T) -> Result<Self> {
        let (lower, upper) = equal_tail(&samples, ci_level)?;
        Ok(Self {
            name: name.into(),
            taxon: None,
            profile: None,
            mean: mean(&samples),
            lower,
            upper,
            samples,
            selected: false,
            mppi: None,
        })
    }

    /// True when the interval does not contain zero.
    pub fn excludes_zero(&self) -> bool {
        self.lower > T::zero() || self.upper < T::zero()
    }
}

/// `E[ln ψ_j] = Ψ(γ_j) − Ψ(Σ γ)` under `ψ ~ Dirichlet(γ)`.
pub fn expected_log_psi<T: Real>(gamma: &[T]) -> Result<Vec<T>> {
    if let Some(g) = gamma.iter().find(|g| !(**g > T::zero()) || !g.is_finite()) {
        return Err(Error::Domain(format!("concentration {g} is not positive and finite")));
    }
    let total: T = gamma.iter().copied().sum();
    let dt = digamma(total);
    Ok(gamma
        .iter()
        .map(|&g| digamma_gap(g, total).unwrap_or_else(|| digamma(g) - dt))
        .collect())
}

/// `Ψ(a) − Ψ(b)` by the recurrence `Ψ(x + 1) = Ψ(x) + 1/x` when `b − a` is
/// a small nonnegative integer.
fn digamma_gap<T: Real>(a: T, b: T) -> Option<T> {
    let gap = b - a;
    if gap < T::zero() || gap.fract() != T::zero() || gap > T::lit(64.0) || a + gap != b {
        return None;
    }
    let steps = gap.to_usize()?;
    let mut acc = T::zero();
    for k in 0..steps {
        acc -= T::one() / (a + T::from_usize_lossy(k));
    }
    Some(acc)
}

/// Concentrations `γ_j = exp(λ_j(t, x))` of one count-level sample.
pub fn concentrations(dm: &DmParams, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    (0..dm.parts())
        .map(|j| {
            let lam = dm.lambda(j, t, x);
            if lam > MAX_LINEAR_PREDICTOR {
                Err(Error::Domain(format!("linear predictor {lam} for taxon {j} overflows")))
            } else {
                Ok(lam.exp())
            }
        })
        .collect()
}

/// Expected balances `A · E[ln ψ]`.
pub fn expected_balance<T: Real>(gamma: &[T], scheme: &PartitionScheme) -> Result<Vec<T>> {
    if gamma.len() != scheme.parts() {
        return Err(Error::Dimension(format!(
            "{} concentrations for a {}-part scheme",
            gamma.len(),
            scheme.parts()
        )));
    }
    let e = expected_log_psi(gamma)?;
    let mut out = vec![T::zero(); scheme.balances()];
    scheme.apply(&e, &mut out);
    Ok(out)
}

/// Treatment shift `ϑ_j = E[ln ψ_j | t=1, x] − E[ln ψ_j | t=0, x]`.
pub fn treatment_shift(dm: &DmParams, x: &[f64]) -> Result<Vec<f64>> {
    let e1 = expected_log_psi(&concentrations(dm, 1.0, x)?)?;
    let e0 = expected_log_psi(&concentrations(dm, 0.0, x)?)?;
    Ok(e1.iter().zip(&e0).map(|(a, b)| a - b).collect())
}

/// Per-taxon relative indirect effects of one sample, indexed by original
/// taxon: `δ_j = (Aᵀβ)_j · ϑ_j`. They sum to the overall indirect effect.
pub fn relative_indirect_sample(
    outcome: &OutcomeParams,
    dm: &DmParams,
    scheme: &PartitionScheme,
    x: &[f64],
) -> Result<Vec<f64>> {
    let shift = treatment_shift(dm, x)?;
    let mut w = vec![0.0; scheme.parts()];
    scheme.apply_transpose(&outcome.beta, &mut w);
    Ok(w.iter().zip(&shift).map(|(a, b)| a * b).collect())
}

/// Overall indirect effect of one sample: `βᵀ A ϑ`.
pub fn overall_indirect_sample(
    outcome: &OutcomeParams,
    dm: &DmParams,
    scheme: &PartitionScheme,
    x: &[f64],
) -> Result<f64> {
    let shift = treatment_shift(dm, x)?;
    let mut b = vec![0.0; scheme.balances()];
    scheme.apply(&shift, &mut b);
    Ok(b.iter().zip(&outcome.beta).map(|(a, c)| a * c).sum())
}

/// Distinct rows of the count-level covariates, in first-appearance order.
/// A single empty profile when there are none.
pub fn subject_profiles(data: &Dataset) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..data.n() {
        let row = data.dm_covariates.row(i);
        if !out.iter().any(|p| p.as_slice() == row) {
            out.push(row.to_vec());
        }
    }
    if out.is_empty() {
        out.push(Vec::new());
    }
    out
}

fn check_profile(trace: &PosteriorTrace, x: &[f64]) -> Result<()> {
    trace.ensure_nonempty()?;
    let p_dm = trace.snapshots[0].dm.theta.cols();
    if x.len() != p_dm {
        return Err(Error::Dimension(format!(
            "profile has {} covariates, model has {p_dm}",
            x.len()
        )));
    }
    Ok(())
}

/// Direct effect: the `c1` samples.
pub fn direct_effect(trace: &PosteriorTrace, ci_level: f64) -> Result<EffectSummary<f64>> {
    trace.ensure_nonempty()?;
    let samples = trace.snapshots.iter().map(|s| s.outcome.c1).collect();
    EffectSummary::from_samples("direct", samples, ci_level)
}

pub fn overall_indirect(
    trace: &PosteriorTrace,
    profile: Option<(usize, &[f64])>,
    ci_level: f64,
) -> Result<EffectSummary<f64>> {
    let x = profile.map(|p| p.1).unwrap_or(&[]);
    check_profile(trace, x)?;
    let samples = trace
        .snapshots
        .iter()
        .map(|s| overall_indirect_sample(&s.outcome, &s.dm, &trace.scheme, x))
        .collect::<Result<Vec<_>>>()?;
    let mut out = EffectSummary::from_samples("overall_indirect", samples, ci_level)?;
    out.profile = profile.map(|p| p.0);
    Ok(out)
}

/// Relative indirect effects for every taxon, ordered by original taxon
/// index. `selected` is left false; strategies set it.
pub fn relative_indirect(
    trace: &PosteriorTrace,
    profile: Option<(usize, &[f64])>,
    ci_level: f64,
) -> Result<Vec<EffectSummary<f64>>> {
    let x = profile.map(|p| p.1).unwrap_or(&[]);
    check_profile(trace, x)?;
    let parts = trace.scheme.parts();
    let mut per_taxon = Matrix::filled(parts, trace.len(), 0.0);
    for (s_idx, s) in trace.snapshots.iter().enumerate() {
        let d = relative_indirect_sample(&s.outcome, &s.dm, &trace.scheme, x)?;
        for (j, v) in d.into_iter().enumerate() {
            per_taxon[(j, s_idx)] = v;
        }
    }
    (0..parts)
        .map(|j| {
            let mut e = EffectSummary::from_samples(
                format!("relative_indirect[{j}]"),
                per_taxon.row(j).to_vec(),
                ci_level,
            )?;
            e.taxon = Some(j);
            e.profile = profile.map(|p| p.0);
            Ok(e)
        })
        .collect()
}
