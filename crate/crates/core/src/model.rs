//! Data, parameters and log-density pieces of the joint model.
//!
//! The outcome level is a Gaussian linear model on treatment, balances and
//! covariates; the count level is a Dirichlet-multinomial regression with a
//! log link on the concentrations. Both levels carry point-mass spike-and-slab
//! priors whose Beta-distributed inclusion probabilities are integrated out.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::special::ln_gamma;

/// Largest admissible linear predictor on the count level; `exp(700)` is
/// within a factor of ~10⁴ of `f64::MAX`.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<String>,
    pub taxa: Vec<String>,
    /// `n × J` taxa counts.
    pub counts: Matrix<u64>,
    pub outcome: Vec<f64>,
    pub treatment: Vec<bool>,
    /// `n × P` outcome-level covariates.
    pub covariates: Matrix<f64>,
    pub covariate_names: Vec<String>,
    /// `n × P_dm` count-level covariates.
    pub dm_covariates: Matrix<f64>,
    pub dm_covariate_names: Vec<String>,
    /// Value substituted for zero counts wherever observed compositions are
    /// formed (chain initialisation, empirical balances).
    pub pseudocount: f64,
}

impl Dataset {
    /// Dataset without covariates at either level, with default names.
    pub fn without_covariates(
        counts: Matrix<u64>,
        outcome: Vec<f64>,
        treatment: Vec<bool>,
    ) -> Result<Self> {
        let n = counts.rows();
        let j = counts.cols();
        let ds = Self {
            subjects: (1..=n).map(|i| format!("s{i}")).collect(),
            taxa: (1..=j).map(|k| format!("taxon{k}")).collect(),
            counts,
            outcome,
            treatment,
            covariates: Matrix::filled(n, 0, 0.0),
            covariate_names: Vec::new(),
            dm_covariates: Matrix::filled(n, 0, 0.0),
            dm_covariate_names: Vec::new(),
            pseudocount: 0.5,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.counts.rows();
        let j = self.counts.cols();
        let dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                Err(Error::Dimension(format!("{what} has length {got}, expected {want}")))
            } else {
                Ok(())
            }
        };
        if n == 0 {
            return Err(Error::Dimension("dataset has no subjects".into()));
        }
        if j < 2 {
            return Err(Error::Dimension(format!("need at least 2 taxa, got {j}")));
        }
        dim("outcome", self.outcome.len(), n)?;
        dim("treatment", self.treatment.len(), n)?;
        dim("subject ids", self.subjects.len(), n)?;
        dim("taxon names", self.taxa.len(), j)?;
        dim("covariate rows", self.covariates.rows(), n)?;
        dim("covariate names", self.covariate_names.len(), self.covariates.cols())?;
        dim("count-level covariate rows", self.dm_covariates.rows(), n)?;
        dim(
            "count-level covariate names",
            self.dm_covariate_names.len(),
            self.dm_covariates.cols(),
        )?;
        for i in 0..n {
            if self.row_total(i) == 0 {
                return Err(Error::Data(format!(
                    "subject {} has zero total count",
                    self.subjects[i]
                )));
            }
        }
        if let Some(i) = self.outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::Data(format!("outcome of subject {} is not finite", self.subjects[i])));
        }
        if self.covariates.as_slice().iter().any(|v| !v.is_finite())
            || self.dm_covariates.as_slice().iter().any(|v| !v.is_finite())
        {
            return Err(Error::Data("covariates must be finite".into()));
        }
        if !(self.pseudocount > 0.0) {
            return Err(Error::Config("pseudocount must be positive".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.counts.rows()
    }

    pub fn taxa_count(&self) -> usize {
        self.counts.cols()
    }

    pub fn p(&self) -> usize {
        self.covariates.cols()
    }

    pub fn p_dm(&self) -> usize {
        self.dm_covariates.cols()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts.row(i).iter().sum()
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        if self.treatment[i] {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeParams {
    pub c0: f64,
    pub c1: f64,
    pub beta: Vec<f64>,
    pub xi: Vec<bool>,
    pub kappa: Vec<f64>,
    pub nu: Vec<bool>,
    pub sigma2: f64,
}

impl OutcomeParams {
    pub fn empty(balances: usize, p: usize) -> Self {
        Self {
            c0: 0.0,
            c1: 0.0,
            beta: vec![0.0; balances],
            xi: vec![false; balances],
            kappa: vec![0.0; p],
            nu: vec![false; p],
            sigma2: 1.0,
        }
    }

    /// Excluded coefficients must be exactly zero.
    pub fn check_exclusion(&self) -> Result<()> {
        check_coupling("beta", &self.beta, &self.xi)?;
        check_coupling("kappa", &self.kappa, &self.nu)
    }

    pub fn included_count(&self) -> usize {
        self.xi.iter().filter(|&&x| x).count() + self.nu.iter().filter(|&&x| x).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmParams {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub varphi: Vec<bool>,
    /// `J × P_dm`.
    pub theta: Matrix<f64>,
    pub zeta: Matrix<bool>,
}

impl DmParams {
    pub fn empty(parts: usize, p_dm: usize) -> Self {
        Self {
            alpha: vec![0.0; parts],
            phi: vec![0.0; parts],
            varphi: vec![false; parts],
            theta: Matrix::filled(parts, p_dm, 0.0),
            zeta: Matrix::filled(parts, p_dm, false),
        }
    }

    pub fn parts(&self) -> usize {
        self.alpha.len()
    }

    /// λ_j = α_j + φ_j t + Σ_p θ_jp x_p.
    #[inline]
    pub fn lambda(&self, j: usize, t: f64, x: &[f64]) -> f64 {
        let mut lam = self.alpha[j] + self.phi[j] * t;
        for (p, &xv) in x.iter().enumerate() {
            lam += self.theta[(j, p)] * xv;
        }
        lam
    }

    pub fn check_exclusion(&self) -> Result<()> {
        check_coupling("phi", &self.phi, &self.varphi)?;
        check_coupling("theta", self.theta.as_slice(), self.zeta.as_slice())
    }
}

fn check_coupling(name: &str, coef: &[f64], ind: &[bool]) -> Result<()> {
    match coef.iter().zip(ind).position(|(c, on)| !on && *c != 0.0) {
        Some(k) => Err(Error::Invariant(format!(
            "{name}[{k}] = {} while its inclusion indicator is 0",
            coef[k]
        ))),
        None => Ok(()),
    }
}

/// Gamma data-augmentation latents. `log_k` is stored rather than `k` so
/// that tiny concentrations never underflow to an exact zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmentation {
    pub log_k: Matrix<f64>,
    pub u: Vec<f64>,
}

impl Augmentation {
    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.log_k[(i, j)].exp()
    }

    /// ψ_i = k_i / Σ_j k_ij, computed stably from the logs.
    pub fn psi_row(&self, i: usize, out: &mut [f64]) {
        let row = self.log_k.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &l) in out.iter_mut().zip(row) {
            *o = (l - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }
}

/// Beta(a, b) hyperprior on an inclusion probability; integrating it out
/// leaves each indicator Bernoulli(a / (a + b)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub const UNIFORM: BetaPrior = BetaPrior { a: 1.0, b: 1.0 };

    pub fn inclusion_probability(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// Log prior odds of inclusion versus exclusion.
    pub fn log_odds(&self) -> f64 {
        (self.a / self.b).ln()
    }

    pub fn log_mass(&self, included: bool) -> f64 {
        if included {
            (self.a / (self.a + self.b)).ln()
        } else {
            (self.b / (self.a + self.b)).ln()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub h_c: f64,
    pub h_beta: f64,
    pub h_kappa: f64,
    pub a0: f64,
    pub b0: f64,
    pub sigma2_alpha: f64,
    /// Slab variance per taxon for both treatment and covariate terms.
    pub r2: Vec<f64>,
    /// Balance indicators ξ.
    pub balance_prior: BetaPrior,
    /// Outcome covariate indicators ν.
    pub covariate_prior: BetaPrior,
    /// Treatment indicators φ on the count level.
    pub treatment_prior: BetaPrior,
    /// Count-level covariate indicators ζ.
    pub dm_covariate_prior: BetaPrior,
}

impl Hyperparameters {
    /// Weakly informative defaults: h = 1, a0 = b0 = 1, σ²_α = 1, r² = 10,
    /// uniform Beta(1, 1) on every inclusion probability.
    pub fn defaults(parts: usize) -> Self {
        Self {
            h_c: 1.0,
            h_beta: 1.0,
            h_kappa: 1.0,
            a0: 1.0,
            b0: 1.0,
            sigma2_alpha: 1.0,
            r2: vec![10.0; parts],
            balance_prior: BetaPrior::UNIFORM,
            covariate_prior: BetaPrior::UNIFORM,
            treatment_prior: BetaPrior::UNIFORM,
            dm_covariate_prior: BetaPrior::UNIFORM,
        }
    }

    /// Same Beta(a, b) on all four indicator families.
    pub fn with_inclusion_prior(mut self, prior: BetaPrior) -> Self {
        self.balance_prior = prior;
        self.covariate_prior = prior;
        self.treatment_prior = prior;
        self.dm_covariate_prior = prior;
        self
    }

    pub fn validate(&self, parts: usize) -> Result<()> {
        let scalars = [
            ("h_c", self.h_c),
            ("h_beta", self.h_beta),
            ("h_kappa", self.h_kappa),
            ("a0", self.a0),
            ("b0", self.b0),
            ("sigma2_alpha", self.sigma2_alpha),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.r2.len() != parts {
            return Err(Error::Dimension(format!(
                "r2 has {} entries, expected {parts}",
                self.r2.len()
            )));
        }
        if self.r2.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("every r2 must be positive".into()));
        }
        for (name, bp) in [
            ("balance", self.balance_prior),
            ("covariate", self.covariate_prior),
            ("treatment", self.treatment_prior),
            ("dm covariate", self.dm_covariate_prior),
        ] {
            if !(bp.a > 0.0 && bp.b > 0.0) {
                return Err(Error::Config(format!("{name} Beta prior must be positive")));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// Gaussian log-likelihood of the outcome given `n × (J−1)` balances.
pub fn log_lik_outcome(state: &OutcomeParams, balances: &Matrix<f64>, data: &Dataset) -> Result<f64> {
    let n = data.n();
    if balances.rows() != n || balances.cols() != state.beta.len() {
        return Err(Error::Dimension(format!(
            "balances are {}x{}, expected {n}x{}",
            balances.rows(),
            balances.cols(),
            state.beta.len()
        )));
    }
    if state.kappa.len() != data.p() {
        return Err(Error::Dimension(format!(
            "{} covariate coefficients for {} covariates",
            state.kappa.len(),
            data.p()
        )));
    }
    if !(state.sigma2 > 0.0) {
        return Err(Error::Domain("sigma2 must be positive".into()));
    }
    let mut sse = 0.0;
    for i in 0..n {
        let mut pred = state.c0 + state.c1 * data.t(i);
        pred += balances
            .row(i)
            .iter()
            .zip(&state.beta)
            .map(|(b, c)| b * c)
            .sum::<f64>();
        pred += data
            .covariates
            .row(i)
            .iter()
            .zip(&state.kappa)
            .map(|(x, c)| x * c)
            .sum::<f64>();
        let r = data.outcome[i] - pred;
        sse += r * r;
    }
    Ok(-0.5 * n as f64 * (2.0 * PI * state.sigma2).ln() - sse / (2.0 * state.sigma2))
}

/// Log prior split into independent blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PriorBlocks {
    pub intercept_treatment: f64,
    pub balances: f64,
    pub covariates: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub treatment: f64,
    pub dm_covariates: f64,
}

impl PriorBlocks {
    pub fn total(&self) -> f64 {
        self.intercept_treatment
            + self.balances
            + self.covariates
            + self.sigma2
            + self.alpha
            + self.treatment
            + self.dm_covariates
    }
}

fn spike_slab_block(coef: &[f64], ind: &[bool], slab_var: impl Fn(usize) -> f64, prior: BetaPrior) -> f64 {
    coef.iter()
        .zip(ind)
        .enumerate()
        .map(|(k, (&c, &on))| {
            prior.log_mass(on) + if on { log_normal_density(c, 0.0, slab_var(k)) } else { 0.0 }
        })
        .sum()
}

pub fn log_prior_blocks(outcome: &OutcomeParams, dm: &DmParams, hp: &Hyperparameters) -> PriorBlocks {
    let s2 = outcome.sigma2;
    let p_dm = dm.theta.cols();
    PriorBlocks {
        intercept_treatment: log_normal_density(outcome.c0, 0.0, hp.h_c * s2)
            + log_normal_density(outcome.c1, 0.0, hp.h_c * s2),
        balances: spike_slab_block(&outcome.beta, &outcome.xi, |_| hp.h_beta * s2, hp.balance_prior),
        covariates: spike_slab_block(&outcome.kappa, &outcome.nu, |_| hp.h_kappa * s2, hp.covariate_prior),
        sigma2: hp.a0 * hp.b0.ln() - ln_gamma(hp.a0) - (hp.a0 + 1.0) * s2.ln() - hp.b0 / s2,
        alpha: dm
            .alpha
            .iter()
            .map(|&a| log_normal_density(a, 0.0, hp.sigma2_alpha))
            .sum(),
        treatment: spike_slab_block(&dm.phi, &dm.varphi, |j| hp.r2[j], hp.treatment_prior),
        dm_covariates: spike_slab_block(
            dm.theta.as_slice(),
            dm.zeta.as_slice(),
            |k| hp.r2[k / p_dm.max(1)],
            hp.dm_covariate_prior,
        ),
    }
}

/// Joint log prior with inclusion probabilities integrated out.
pub fn log_prior_state(outcome: &OutcomeParams, dm: &DmParams, hp: &Hyperparameters) -> f64 {
    log_prior_blocks(outcome, dm, hp).total()
}

/// γ_ij = exp(λ_ij) for every subject and taxon.
pub fn gamma_concentrations(dm: &DmParams, data: &Dataset) -> Result<Matrix<f64>> {
    let n = data.n();
    let parts = data.taxa_count();
    if dm.parts() != parts || dm.theta.cols() != data.p_dm() {
        return Err(Error::Dimension("count-level parameters do not match the dataset".into()));
    }
    let mut out = Matrix::filled(n, parts, 0.0);
    for i in 0..n {
        let x = data.dm_covariates.row(i);
        let t = data.t(i);
        for j in 0..parts {
            let lam = dm.lambda(j, t, x);
            if !(lam <= MAX_LINEAR_PREDICTOR) {
                return Err(Error::NumericalRange {
                    subject: i,
                    taxon: j,
                    value: lam,
                    limit: MAX_LINEAR_PREDICTOR,
                });
            }
            out[(i, j)] = lam.exp();
        }
    }
    Ok(out)
}
