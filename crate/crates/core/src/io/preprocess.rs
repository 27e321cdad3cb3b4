use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOptions {
    /// Taxa whose fraction of zero counts exceeds this are dropped.
    pub zero_threshold: f64,
    pub pseudocount: f64,
    /// Center and scale the outcome to mean 0, sd 1.
    pub standardize: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            zero_threshold: 0.9,
            pseudocount: 0.5,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessLog {
    /// `(taxon, zero fraction)` for every input taxon, in input order.
    pub zero_fraction: Vec<(String, f64)>,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    /// Mean and sd removed from the outcome, when standardized.
    pub outcome_scale: Option<(f64, f64)>,
}

pub fn preprocess(data: &Dataset, opts: &PreprocessOptions) -> Result<(Dataset, PreprocessLog)> {
    if !(0.0..=1.0).contains(&opts.zero_threshold) {
        return Err(Error::Config(format!(
            "zero threshold {} outside [0, 1]",
            opts.zero_threshold
        )));
    }
    if !(opts.pseudocount > 0.0 && opts.pseudocount.is_finite()) {
        return Err(Error::Config("pseudocount must be positive".into()));
    }
    let n = data.n();
    let mut zero_fraction = Vec::new();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..data.taxa_count() {
        let zeros = data.counts.column(j).filter(|&&c| c == 0).count();
        let frac = zeros as f64 / n as f64;
        zero_fraction.push((data.taxa[j].clone(), frac));
        if frac > opts.zero_threshold {
            dropped.push(data.taxa[j].clone());
        } else {
            keep.push(j);
        }
    }
    if keep.len() < 2 {
        return Err(Error::Config(format!(
            "only {} taxa pass the zero-prevalence filter; at least 2 are needed",
            keep.len()
        )));
    }
    let mut counts = Matrix::filled(n, keep.len(), 0u64);
    for i in 0..n {
        for (k, &j) in keep.iter().enumerate() {
            counts[(i, k)] = data.counts[(i, j)];
        }
    }
    let mut outcome = data.outcome.clone();
    let outcome_scale = if opts.standardize {
        let mean = outcome.iter().sum::<f64>() / n as f64;
        let var = outcome.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data("cannot standardize a constant outcome".into()));
        }
        outcome.iter_mut().for_each(|y| *y = (*y - mean) / sd);
        Some((mean, sd))
    } else {
        None
    };
    let ds = Dataset {
        taxa: keep.iter().map(|&j| data.taxa[j].clone()).collect(),
        counts,
        outcome,
        pseudocount: opts.pseudocount,
        ..data.clone()
    };
    ds.validate()?;
    Ok((
        ds,
        PreprocessLog {
            kept: keep.iter().map(|&j| data.taxa[j].clone()).collect(),
            zero_fraction,
            dropped,
            outcome_scale,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(counts: Vec<u64>, n: usize, outcome: Vec<f64>) -> Dataset {
        let j = counts.len() / n;
        Dataset::without_covariates(Matrix::from_vec(n, j, counts), outcome, vec![false; n]).unwrap()
    }

    #[test]
    fn drops_mostly_zero_taxa() {
        // taxon 2 is zero in 19 of 20 subjects (95%)
        let n = 20;
        let mut c = Vec::new();
        for i in 0..n {
            c.extend([5, 3, u64::from(i == 0)]);
        }
        let ds = data(c, n, (0..n).map(|i| i as f64).collect());
        let (out, log) = preprocess(&ds, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.taxa, vec!["taxon1", "taxon2"]);
        assert_eq!(log.dropped, vec!["taxon3"]);
        assert!((log.zero_fraction[2].1 - 0.95).abs() < 1e-15);
        assert_eq!(log.kept.len() + log.dropped.len(), 3);
    }

    #[test]
    fn standardizes_with_sample_sd() {
        let ds = data(vec![1, 2, 3, 4, 5, 6], 3, vec![1.0, 2.0, 3.0]);
        let (out, log) = preprocess(&ds, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.outcome, vec![-1.0, 0.0, 1.0]);
        assert_eq!(out.counts, ds.counts);
        assert_eq!(log.outcome_scale, Some((2.0, 1.0)));
        let raw = PreprocessOptions {
            standardize: false,
            ..PreprocessOptions::default()
        };
        assert_eq!(preprocess(&ds, &raw).unwrap().0, ds);
    }

    #[test]
    fn everything_dropped_is_config_error() {
        let ds = data(vec![0, 0, 1, 0, 0, 1, 0, 0, 1], 3, vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            preprocess(&ds, &PreprocessOptions::default()),
            Err(Error::Config(_))
        ));
    }
}
