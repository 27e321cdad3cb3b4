//! Compositional algebra on the simplex: closure, multiplicative zero
//! replacement, sequential binary partitions and isometric log-ratio
//! balances.

use crate::error::{Error, Result};
use crate::scalar::Real;

const SUM_TOLERANCE: f64 = 1e-12;

/// A strictly positive vector of proportions summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition<T: Real> {
    values: Vec<T>,
}

impl<T: Real> Composition<T> {
    /// Wraps already-closed proportions, checking positivity and unit sum.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("composition must have at least one part".into()));
        }
        if let Some(pos) = values.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "composition part {pos} is not strictly positive and finite"
            )));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(SUM_TOLERANCE).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::Domain(format!("composition sums to {sum}, not 1")));
        }
        Ok(Self { values })
    }

    /// Closes a vector of counts after replacing zeros with `pseudocount`.
    pub fn from_counts(counts: &[T], pseudocount: T) -> Result<Self> {
        let replaced: Vec<T> = counts
            .iter()
            .map(|&c| if c > T::zero() { c } else { pseudocount })
            .collect();
        let closed = close(&replaced)?;
        Self::new(closed)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.values
    }
}

/// Coordinates of a composition in a balance basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceVector<T: Real>(pub Vec<T>);

impl<T: Real> BalanceVector<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// Rescales a nonnegative vector to sum to one.
///
/// Zeros are kept, so the output is only a [`Composition`] once every entry
/// is positive; see [`zero_replace`].
pub fn close<T: Real>(raw: &[T]) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Err(Error::Dimension("cannot close an empty vector".into()));
    }
    if let Some(pos) = raw.iter().position(|v| *v < T::zero() || !v.is_finite()) {
        return Err(Error::Domain(format!("entry {pos} is negative or not finite")));
    }
    let sum: T = raw.iter().copied().sum();
    if !(sum > T::zero()) {
        return Err(Error::DegenerateInput("all entries are zero".into()));
    }
    Ok(raw.iter().map(|&v| v / sum).collect())
}

/// Multiplicative replacement: zeros become `delta`, every nonzero entry is
/// shrunk by `1 − c·delta` where `c` is the number of zeros.
pub fn zero_replace<T: Real>(psi: &[T], delta: T) -> Result<Composition<T>> {
    if !(delta > T::zero()) {
        return Err(Error::Config(format!("pseudovalue must be positive, got {delta}")));
    }
    if let Some(pos) = psi.iter().position(|v| *v < T::zero() || !v.is_finite()) {
        return Err(Error::Domain(format!("entry {pos} is negative or not finite")));
    }
    let zeros = psi.iter().filter(|v| **v == T::zero()).count();
    let shrink = T::one() - T::from_usize_lossy(zeros) * delta;
    if !(shrink > T::zero()) {
        return Err(Error::Config(format!(
            "pseudovalue {delta} too large for {zeros} zero parts"
        )));
    }
    let values = psi
        .iter()
        .map(|&v| if v == T::zero() { delta } else { v * shrink })
        .collect();
    Composition::new(values)
}

/// Sequential binary partition of `J` parts under a taxon ordering.
///
/// Row `k` places the taxon at ordered position `k` in the numerator and all
/// later-ordered taxa in the denominator. Rows are stored in original taxon
/// indices, so reordering never permutes the data itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionScheme {
    parts: usize,
    taxon_order: Vec<usize>,
    position_of: Vec<usize>,
    eta: Vec<i8>,
}

impl PartitionScheme {
    /// Identity ordering.
    pub fn sequential(parts: usize) -> Result<Self> {
        Self::with_order((0..parts).collect())
    }

    /// Ordering where `first` leads and the remaining taxa keep their order.
    pub fn with_first(parts: usize, first: usize) -> Result<Self> {
        if first >= parts {
            return Err(Error::Dimension(format!(
                "taxon {first} out of range for {parts} parts"
            )));
        }
        let mut order = Vec::with_capacity(parts);
        order.push(first);
        order.extend((0..parts).filter(|&j| j != first));
        Self::with_order(order)
    }

    /// `taxon_order[k]` is the (0-based) taxon occupying ordered position `k`.
    pub fn with_order(taxon_order: Vec<usize>) -> Result<Self> {
        let parts = taxon_order.len();
        if parts < 2 {
            return Err(Error::Dimension(format!(
                "a partition needs at least 2 parts, got {parts}"
            )));
        }
        let mut position_of = vec![usize::MAX; parts];
        for (pos, &taxon) in taxon_order.iter().enumerate() {
            if taxon >= parts || position_of[taxon] != usize::MAX {
                return Err(Error::Dimension(format!(
                    "taxon order is not a permutation of 0..{parts}"
                )));
            }
            position_of[taxon] = pos;
        }
        let mut eta = vec![0i8; (parts - 1) * parts];
        for k in 0..parts - 1 {
            let row = &mut eta[k * parts..(k + 1) * parts];
            row[taxon_order[k]] = 1;
            for &taxon in &taxon_order[k + 1..] {
                row[taxon] = -1;
            }
        }
        Ok(Self {
            parts,
            taxon_order,
            position_of,
            eta,
        })
    }

    /// Number of parts `J`.
    pub fn parts(&self) -> usize {
        self.parts
    }

    /// Number of balances `J − 1`.
    pub fn balances(&self) -> usize {
        self.parts - 1
    }

    pub fn taxon_order(&self) -> &[usize] {
        &self.taxon_order
    }

    /// Ordered position of a taxon.
    pub fn position_of(&self, taxon: usize) -> usize {
        self.position_of[taxon]
    }

    pub fn first_taxon(&self) -> usize {
        self.taxon_order[0]
    }

    /// Sign row `k` in original taxon indices.
    pub fn eta_row(&self, k: usize) -> &[i8] {
        &self.eta[k * self.parts..(k + 1) * self.parts]
    }

    /// Scale factor √((J−k)/(J−k+1)) of balance `k` (0-based here).
    pub fn scale<T: Real>(&self, k: usize) -> T {
        let minus = T::from_usize_lossy(self.parts - 1 - k);
        (minus / (minus + T::one())).sqrt()
    }

    /// Dense ILR coefficient matrix, `(J−1) × J` row-major, original indices.
    pub fn ilr_matrix<T: Real>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); (self.parts - 1) * self.parts];
        for k in 0..self.parts - 1 {
            let row = self.eta_row(k);
            let plus = row.iter().filter(|&&s| s == 1).count();
            let minus = row.iter().filter(|&&s| s == -1).count();
            let (p, m) = (T::from_usize_lossy(plus), T::from_usize_lossy(minus));
            let norm = (p * m / (p + m)).sqrt();
            for (j, &s) in row.iter().enumerate() {
                out[k * self.parts + j] = match s {
                    1 => norm / p,
                    -1 => -norm / m,
                    _ => T::zero(),
                };
            }
        }
        out
    }

    /// Computes `A · v` for a length-`J` vector (e.g. log proportions),
    /// writing `J − 1` balance coordinates into `out`.
    pub fn apply<T: Real>(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.parts);
        debug_assert_eq!(out.len(), self.parts - 1);
        let j = self.parts;
        let mut suffix = T::zero();
        for k in (0..j - 1).rev() {
            suffix += v[self.taxon_order[k + 1]];
            let minus = T::from_usize_lossy(j - 1 - k);
            out[k] = self.scale::<T>(k) * (v[self.taxon_order[k]] - suffix / minus);
        }
    }

    /// Computes `Aᵀ · β`: the per-taxon log-contrast weights implied by
    /// balance coefficients, in original taxon indices.
    pub fn apply_transpose<T: Real>(&self, beta: &[T], out: &mut [T]) {
        debug_assert_eq!(beta.len(), self.parts - 1);
        debug_assert_eq!(out.len(), self.parts);
        let j = self.parts;
        let mut carried = T::zero();
        for m in 0..j {
            let own = if m < j - 1 {
                beta[m] * self.scale::<T>(m)
            } else {
                T::zero()
            };
            out[self.taxon_order[m]] = own - carried;
            if m < j - 1 {
                carried += beta[m] * self.scale::<T>(m) / T::from_usize_lossy(j - 1 - m);
            }
        }
    }

    /// Balance vector of a composition via the log-linear form.
    pub fn balances_all<T: Real>(&self, psi: &Composition<T>) -> Result<BalanceVector<T>> {
        if psi.len() != self.parts {
            return Err(Error::Dimension(format!(
                "composition has {} parts, partition expects {}",
                psi.len(),
                self.parts
            )));
        }
        let logs: Vec<T> = psi.values().iter().map(|v| v.ln()).collect();
        let mut out = vec![T::zero(); self.parts - 1];
        self.apply(&logs, &mut out);
        Ok(BalanceVector(out))
    }
}

/// Normalized log-ratio of geometric means between the `+1` and `−1`
/// groups of `eta`.
pub fn balance<T: Real>(eta: &[i8], psi: &[T]) -> Result<T> {
    if eta.len() != psi.len() {
        return Err(Error::Dimension(format!(
            "sign row has {} entries, composition {}",
            eta.len(),
            psi.len()
        )));
    }
    let (mut plus, mut minus) = (0usize, 0usize);
    let (mut log_plus, mut log_minus) = (T::zero(), T::zero());
    for (j, (&s, &v)) in eta.iter().zip(psi).enumerate() {
        if s == 0 {
            continue;
        }
        if !(v > T::zero()) {
            return Err(Error::Domain(format!(
                "part {j} is zero inside an active partition; replace zeros first"
            )));
        }
        if s > 0 {
            plus += 1;
            log_plus += v.ln();
        } else {
            minus += 1;
            log_minus += v.ln();
        }
    }
    if plus == 0 || minus == 0 {
        return Err(Error::Domain("both partitions must be nonempty".into()));
    }
    let (p, m) = (T::from_usize_lossy(plus), T::from_usize_lossy(minus));
    Ok((p * m / (p + m)).sqrt() * (log_plus / p - log_minus / m))
}
