//! Posterior summaries over sample vectors.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n − 1)·p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let h = T::from_usize_lossy(n - 1) * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

pub fn mean<T: Real>(samples: &[T]) -> T {
    samples.iter().copied().sum::<T>() / T::from_usize_lossy(samples.len())
}

/// Equal-tail credible interval at `level`.
pub fn equal_tail<T: Real>(samples: &[T], level: T) -> Result<(T, T)> {
    if samples.is_empty() {
        return Err(Error::Usage("no samples to summarize".into()));
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::Config(format!("credible level {level} outside (0, 1)")));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN in posterior samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let tail = (T::one() - level) / T::lit(2.0);
    Ok((
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, T::one() - tail),
    ))
}
