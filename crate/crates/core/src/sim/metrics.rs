use crate::error::{Error, Result};
use crate::estimands::EffectSummary;
use crate::scalar::Real;

/// Confusion counts and derived selection metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionScore {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub sens: f64,
    pub spec: f64,
    pub mcc: f64,
}

/// SENS, SPEC and MCC of a selection against the true active set. A rate
/// whose denominator is empty is vacuously 1; MCC is 0 when any margin of
/// its denominator is empty.
pub fn score_selection(selected: &[bool], truth: &[bool]) -> Result<SelectionScore> {
    if selected.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} selections for {} truth flags",
            selected.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &t) in selected.iter().zip(truth) {
        match (s, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let den = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
    let mcc = if den == 0.0 {
        0.0
    } else {
        (tpf * tnf - fpf * fnf) / den.sqrt()
    };
    Ok(SelectionScore {
        tp,
        fp,
        tn,
        fn_,
        sens: rate(tp, tp + fn_),
        spec: rate(tn, tn + fp),
        mcc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimationScore<T: Real> {
    pub bias: T,
    pub mse: T,
    pub coverage: T,
    pub replicates: usize,
}

/// Bias, mean squared error and interval coverage of posterior means
/// against per-replicate true values.
pub fn score_estimation<T: Real>(summaries: &[EffectSummary<T>], truth: &[T]) -> Result<EstimationScore<T>> {
    if summaries.is_empty() {
        return Err(Error::Usage("no replicates to score".into()));
    }
    if summaries.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} summaries for {} truth values",
            summaries.len(),
            truth.len()
        )));
    }
    let n = T::from_usize_lossy(summaries.len());
    let (mut bias, mut mse, mut covered) = (T::zero(), T::zero(), T::zero());
    for (s, &t) in summaries.iter().zip(truth) {
        let d = s.mean - t;
        bias += d;
        mse += d * d;
        if s.lower <= t && t <= s.upper {
            covered += T::one();
        }
    }
    Ok(EstimationScore {
        bias: bias / n,
        mse: mse / n,
        coverage: covered / n,
        replicates: summaries.len(),
    })
}
