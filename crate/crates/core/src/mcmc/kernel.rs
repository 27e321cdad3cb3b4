use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{
    Augmentation, BetaPrior, Dataset, DmParams, Hyperparameters, OutcomeParams, MAX_LINEAR_PREDICTOR,
};
use crate::special::ln_gamma;

use super::rng::{accept, chain_rng, gamma_variate, log_gamma_variate, std_normal, ChainRng};
use super::{AcceptanceStats, FitOptions, KUpdate, SamplerConfig, Scan};

/// State of one chain plus the caches its updates share.
///
/// Caches: `lambda`, `gamma` and `lgamma` hold the count-level linear
/// predictor, its exponential and `lnΓ` of it for every subject/taxon;
/// `balances` holds the balances of the current latents and `resid` the
/// outcome residuals `y − ŷ`. Every update leaves them consistent.
pub struct Chain<'a> {
    data: &'a Dataset,
    hp: &'a Hyperparameters,
    cfg: SamplerConfig,
    likelihood: bool,
    fixed_dm: bool,
    exclude_balances: bool,
    free_treatment: Vec<usize>,
    scheme: PartitionScheme,
    rng: ChainRng,

    outcome: OutcomeParams,
    dm: DmParams,
    aug: Augmentation,

    z: Matrix<f64>,
    zdot: Vec<f64>,
    t: Vec<f64>,
    lambda: Matrix<f64>,
    gamma: Matrix<f64>,
    lgamma: Matrix<f64>,
    balances: Matrix<f64>,
    resid: Vec<f64>,
    weights: Vec<f64>,

    prop_lambda: Vec<f64>,
    prop_gamma: Vec<f64>,
    prop_lgamma: Vec<f64>,
    prop_theta: Vec<f64>,
    prop_logk: Vec<f64>,

    stats: AcceptanceStats,
}

impl<'a> Chain<'a> {
    /// Starts a chain with every coefficient at zero, every indicator off,
    /// `α_j = ln(mean count of taxon j + 0.5)`, `k_ij = z_ij + pseudocount`
    /// and `σ² = 1`.
    pub fn new(
        data: &'a Dataset,
        hp: &'a Hyperparameters,
        cfg: &SamplerConfig,
        opts: &FitOptions,
    ) -> Result<Self> {
        data.validate()?;
        cfg.validate()?;
        let n = data.n();
        let parts = data.taxa_count();
        hp.validate(parts)?;

        let scheme = match &opts.scheme {
            Some(s) if s.parts() != parts => {
                return Err(Error::Dimension(format!(
                    "partition has {} parts, data has {parts} taxa",
                    s.parts()
                )))
            }
            Some(s) => s.clone(),
            None => PartitionScheme::sequential(parts)?,
        };
        if let Some(&bad) = opts.excluded_treatment.iter().find(|&&j| j >= parts) {
            return Err(Error::Dimension(format!("excluded taxon {bad} out of range")));
        }
        let free_treatment: Vec<usize> = (0..parts)
            .filter(|j| !opts.excluded_treatment.contains(j))
            .collect();

        let dm = match &opts.fixed_dm {
            Some(fixed) => {
                if fixed.parts() != parts || fixed.theta.cols() != data.p_dm() {
                    return Err(Error::Dimension("fixed count-level parameters do not match data".into()));
                }
                fixed.check_exclusion()?;
                fixed.clone()
            }
            None => {
                let mut dm = DmParams::empty(parts, data.p_dm());
                for j in 0..parts {
                    let mean = data.counts.column(j).map(|&c| c as f64).sum::<f64>() / n as f64;
                    dm.alpha[j] = (mean + 0.5).ln();
                }
                dm
            }
        };

        let z = Matrix::from_vec(
            n,
            parts,
            data.counts.as_slice().iter().map(|&c| c as f64).collect(),
        );
        let zdot: Vec<f64> = (0..n).map(|i| data.row_total(i) as f64).collect();
        let t: Vec<f64> = (0..n).map(|i| data.t(i)).collect();

        let log_k = Matrix::from_vec(
            n,
            parts,
            z.as_slice()
                .iter()
                .map(|&c| if c > 0.0 { c } else { data.pseudocount }.ln())
                .collect(),
        );
        let u = (0..n)
            .map(|i| zdot[i] / log_k.row(i).iter().map(|l| l.exp()).sum::<f64>())
            .collect();

        let mut chain = Self {
            data,
            hp,
            cfg: cfg.clone(),
            likelihood: opts.likelihood,
            fixed_dm: opts.fixed_dm.is_some(),
            exclude_balances: opts.exclude_balances,
            free_treatment,
            scheme,
            rng: chain_rng(cfg.seed),
            outcome: OutcomeParams::empty(parts - 1, data.p()),
            dm,
            aug: Augmentation { log_k, u },
            z,
            zdot,
            t,
            lambda: Matrix::filled(n, parts, 0.0),
            gamma: Matrix::filled(n, parts, 0.0),
            lgamma: Matrix::filled(n, parts, 0.0),
            balances: Matrix::filled(n, parts - 1, 0.0),
            resid: data.outcome.clone(),
            weights: vec![0.0; parts],
            prop_lambda: vec![0.0; n],
            prop_gamma: vec![0.0; n],
            prop_lgamma: vec![0.0; n],
            prop_theta: vec![0.0; data.p_dm()],
            prop_logk: vec![0.0; parts],
            stats: AcceptanceStats::default(),
        };
        chain.refresh_concentrations()?;
        chain.refresh_balances();
        chain.refresh_residuals();
        Ok(chain)
    }

    pub fn params(&self) -> (&OutcomeParams, &DmParams) {
        (&self.outcome, &self.dm)
    }

    pub fn augmentation(&self) -> &Augmentation {
        &self.aug
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    /// Current `n × (J−1)` balances of the latent compositions.
    pub fn balances(&self) -> &Matrix<f64> {
        &self.balances
    }

    /// One full sweep in the fixed order u, k, α, count-level
    /// spike-and-slab, outcome block.
    pub fn sweep(&mut self) -> Result<()> {
        if self.likelihood {
            self.update_u()?;
            self.update_k()?;
        }
        if !self.fixed_dm {
            self.update_alpha()?;
            self.update_spike_slab_dm()?;
        }
        self.update_outcome_block()
    }

    fn refresh_concentrations(&mut self) -> Result<()> {
        for i in 0..self.data.n() {
            let x = self.data.dm_covariates.row(i);
            for j in 0..self.dm.parts() {
                let lam = self.dm.lambda(j, self.t[i], x);
                if !(lam <= MAX_LINEAR_PREDICTOR) {
                    return Err(Error::NumericalRange {
                        subject: i,
                        taxon: j,
                        value: lam,
                        limit: MAX_LINEAR_PREDICTOR,
                    });
                }
                let g = lam.exp();
                self.lambda[(i, j)] = lam;
                self.gamma[(i, j)] = g;
                self.lgamma[(i, j)] = ln_gamma(g);
            }
        }
        Ok(())
    }

    fn refresh_balances(&mut self) {
        for i in 0..self.data.n() {
            self.scheme
                .apply(self.aug.log_k.row(i), self.balances.row_mut(i));
        }
    }

    fn predictor(&self, i: usize) -> f64 {
        let o = &self.outcome;
        let mut pred = o.c0 + o.c1 * self.t[i];
        if !self.exclude_balances {
            for (b, c) in self.balances.row(i).iter().zip(&o.beta) {
                if *c != 0.0 {
                    pred += b * c;
                }
            }
        }
        for (x, c) in self.data.covariates.row(i).iter().zip(&o.kappa) {
            if *c != 0.0 {
                pred += x * c;
            }
        }
        pred
    }

    fn refresh_residuals(&mut self) {
        for i in 0..self.data.n() {
            self.resid[i] = self.data.outcome[i] - self.predictor(i);
        }
    }

    /// Exact Gibbs draw `u_i ~ Gamma(ż_i, Σ_j k_ij)`.
    pub fn update_u(&mut self) -> Result<()> {
        for i in 0..self.data.n() {
            let total: f64 = self.aug.log_k.row(i).iter().map(|l| l.exp()).sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Invariant(format!(
                    "latent total for subject {i} is {total}"
                )));
            }
            self.aug.u[i] = gamma_variate(&mut self.rng, self.zdot[i], total);
        }
        Ok(())
    }

    /// Independence Metropolis-Hastings for the latents: proposals come
    /// from `Gamma(γ_ij + z_ij, 1 + u_i)` and are corrected by the outcome
    /// likelihood ratio. With all balance coefficients zero every proposal
    /// is accepted.
    pub fn update_k(&mut self) -> Result<()> {
        let parts = self.dm.parts();
        if self.exclude_balances {
            self.weights.iter_mut().for_each(|w| *w = 0.0);
        } else {
            self.scheme
                .apply_transpose(&self.outcome.beta, &mut self.weights);
        }
        let two_s2 = 2.0 * self.outcome.sigma2;
        for i in 0..self.data.n() {
            let rate = 1.0 + self.aug.u[i];
            let mut r = self.resid[i];
            match self.cfg.k_update {
                KUpdate::PerTaxon => {
                    for j in 0..parts {
                        let shape = self.gamma[(i, j)] + self.z[(i, j)];
                        let proposal = log_gamma_variate(&mut self.rng, shape, rate);
                        let w = self.weights[j];
                        let ok = if w == 0.0 {
                            true
                        } else {
                            let r_new = r - w * (proposal - self.aug.log_k[(i, j)]);
                            let log_ratio = (r * r - r_new * r_new) / two_s2;
                            if !log_ratio.is_finite() {
                                return Err(Error::Invariant(format!(
                                    "non-finite latent acceptance ratio at subject {i}, taxon {j}"
                                )));
                            }
                            let ok = accept(&mut self.rng, log_ratio);
                            if ok {
                                r = r_new;
                            }
                            ok
                        };
                        if ok {
                            self.aug.log_k[(i, j)] = proposal;
                        }
                        self.stats.k.record(ok);
                    }
                }
                KUpdate::FullRow => {
                    let mut shift = 0.0;
                    for j in 0..parts {
                        let shape = self.gamma[(i, j)] + self.z[(i, j)];
                        self.prop_logk[j] = log_gamma_variate(&mut self.rng, shape, rate);
                        shift += self.weights[j] * (self.prop_logk[j] - self.aug.log_k[(i, j)]);
                    }
                    let r_new = r - shift;
                    let log_ratio = (r * r - r_new * r_new) / two_s2;
                    if !log_ratio.is_finite() {
                        return Err(Error::Invariant(format!(
                            "non-finite latent acceptance ratio at subject {i}"
                        )));
                    }
                    let ok = shift == 0.0 || accept(&mut self.rng, log_ratio);
                    if ok {
                        self.aug.log_k.row_mut(i).copy_from_slice(&self.prop_logk);
                        r = r_new;
                    }
                    self.stats.k.record(ok);
                }
            }
            self.resid[i] = r;
        }
        Ok(())
    }

    /// Writes the proposed concentration column for taxon `j` under
    /// (`alpha`, `phi`, `prop_theta`) into the proposal buffers and returns
    /// the change in the augmented count-level log-likelihood
    /// `Σ_i γ_ij ln k_ij − lnΓ(γ_ij)`.
    fn propose_column(&mut self, j: usize, alpha: f64, phi: f64) -> Result<f64> {
        let mut diff = 0.0;
        for i in 0..self.data.n() {
            let mut lam = alpha + phi * self.t[i];
            for (th, x) in self.prop_theta.iter().zip(self.data.dm_covariates.row(i)) {
                lam += th * x;
            }
            self.prop_lambda[i] = lam;
            if lam == self.lambda[(i, j)] {
                self.prop_gamma[i] = self.gamma[(i, j)];
                self.prop_lgamma[i] = self.lgamma[(i, j)];
                continue;
            }
            if !(lam <= MAX_LINEAR_PREDICTOR) {
                return Err(Error::NumericalRange {
                    subject: i,
                    taxon: j,
                    value: lam,
                    limit: MAX_LINEAR_PREDICTOR,
                });
            }
            let g = lam.exp();
            let lg = ln_gamma(g);
            self.prop_gamma[i] = g;
            self.prop_lgamma[i] = lg;
            diff += (g - self.gamma[(i, j)]) * self.aug.log_k[(i, j)] - (lg - self.lgamma[(i, j)]);
        }
        Ok(if self.likelihood { diff } else { 0.0 })
    }

    fn commit_column(&mut self, j: usize) {
        for i in 0..self.data.n() {
            self.lambda[(i, j)] = self.prop_lambda[i];
            self.gamma[(i, j)] = self.prop_gamma[i];
            self.lgamma[(i, j)] = self.prop_lgamma[i];
        }
    }

    fn load_theta_row(&mut self, j: usize) {
        self.prop_theta.copy_from_slice(self.dm.theta.row(j));
    }

    /// Gaussian random-walk Metropolis on each intercept `α_j`.
    pub fn update_alpha(&mut self) -> Result<()> {
        let var = self.hp.sigma2_alpha;
        for j in 0..self.dm.parts() {
            let current = self.dm.alpha[j];
            let proposal = current + self.cfg.rw_sd_alpha * std_normal(&mut self.rng);
            self.load_theta_row(j);
            let ll = self.propose_column(j, proposal, self.dm.phi[j])?;
            let prior = (current * current - proposal * proposal) / (2.0 * var);
            let ok = accept(&mut self.rng, ll + prior);
            if ok {
                self.dm.alpha[j] = proposal;
                self.commit_column(j);
            }
            self.stats.alpha.record(ok);
        }
        Ok(())
    }

    fn pick(&mut self, scan: Scan, candidates: &[usize]) -> Vec<usize> {
        use rand::Rng;
        match scan {
            Scan::Full => candidates.to_vec(),
            Scan::Single if candidates.is_empty() => Vec::new(),
            Scan::Single => vec![candidates[self.rng.random_range(0..candidates.len())]],
        }
    }

    /// Add-Delete Metropolis-Hastings for the treatment terms `(φ_j, ϕ_j)`
    /// and covariate terms `(θ_jp, ζ_jp)`: adds draw the coefficient from
    /// its slab, deletes set it to exactly zero. Included coefficients then
    /// get a Gaussian random-walk refresh.
    pub fn update_spike_slab_dm(&mut self) -> Result<()> {
        let free = self.free_treatment.clone();
        let prior = self.hp.treatment_prior;
        for j in self.pick(self.cfg.scan, &free) {
            self.phi_add_delete(j, prior)?;
        }
        for &j in &free {
            if self.dm.varphi[j] {
                self.phi_refresh(j)?;
            }
        }

        let p_dm = self.data.p_dm();
        if p_dm > 0 {
            let all: Vec<usize> = (0..self.dm.parts() * p_dm).collect();
            let prior = self.hp.dm_covariate_prior;
            for idx in self.pick(self.cfg.scan, &all) {
                self.theta_add_delete(idx / p_dm, idx % p_dm, prior)?;
            }
            for idx in all {
                let (j, p) = (idx / p_dm, idx % p_dm);
                if self.dm.zeta[(j, p)] {
                    self.theta_refresh(j, p)?;
                }
            }
        }
        Ok(())
    }

    fn phi_add_delete(&mut self, j: usize, prior: BetaPrior) -> Result<()> {
        self.load_theta_row(j);
        let on = self.dm.varphi[j];
        let proposal = if on {
            0.0
        } else {
            self.hp.r2[j].sqrt() * std_normal(&mut self.rng)
        };
        let ll = self.propose_column(j, self.dm.alpha[j], proposal)?;
        let log_ratio = if on { ll - prior.log_odds() } else { ll + prior.log_odds() };
        let ok = accept(&mut self.rng, log_ratio);
        if ok {
            self.dm.phi[j] = proposal;
            self.dm.varphi[j] = !on;
            self.commit_column(j);
        }
        self.stats.phi_add_delete.record(ok);
        Ok(())
    }

    fn phi_refresh(&mut self, j: usize) -> Result<()> {
        self.load_theta_row(j);
        let current = self.dm.phi[j];
        let proposal = current + self.cfg.rw_sd_coef * std_normal(&mut self.rng);
        let ll = self.propose_column(j, self.dm.alpha[j], proposal)?;
        let prior = (current * current - proposal * proposal) / (2.0 * self.hp.r2[j]);
        let ok = proposal != 0.0 && accept(&mut self.rng, ll + prior);
        if ok {
            self.dm.phi[j] = proposal;
            self.commit_column(j);
        }
        self.stats.phi_refresh.record(ok);
        Ok(())
    }

    fn theta_add_delete(&mut self, j: usize, p: usize, prior: BetaPrior) -> Result<()> {
        self.load_theta_row(j);
        let on = self.dm.zeta[(j, p)];
        let proposal = if on {
            0.0
        } else {
            self.hp.r2[j].sqrt() * std_normal(&mut self.rng)
        };
        self.prop_theta[p] = proposal;
        let ll = self.propose_column(j, self.dm.alpha[j], self.dm.phi[j])?;
        let log_ratio = if on { ll - prior.log_odds() } else { ll + prior.log_odds() };
        let ok = accept(&mut self.rng, log_ratio);
        if ok {
            self.dm.theta[(j, p)] = proposal;
            self.dm.zeta[(j, p)] = !on;
            self.commit_column(j);
        }
        self.stats.theta_add_delete.record(ok);
        Ok(())
    }

    fn theta_refresh(&mut self, j: usize, p: usize) -> Result<()> {
        self.load_theta_row(j);
        let current = self.dm.theta[(j, p)];
        let proposal = current + self.cfg.rw_sd_coef * std_normal(&mut self.rng);
        self.prop_theta[p] = proposal;
        let ll = self.propose_column(j, self.dm.alpha[j], self.dm.phi[j])?;
        let prior = (current * current - proposal * proposal) / (2.0 * self.hp.r2[j]);
        let ok = proposal != 0.0 && accept(&mut self.rng, ll + prior);
        if ok {
            self.dm.theta[(j, p)] = proposal;
            self.commit_column(j);
        }
        self.stats.theta_refresh.record(ok);
        Ok(())
    }

    /// Outcome level: joint conjugate draw of `(c0, c1)`, Add-Delete for
    /// each `(β_j, ξ_j)` and `(κ_p, ν_p)` with the coefficient integrated
    /// out of the acceptance ratio and drawn from its conditional on
    /// acceptance, conjugate refresh of included coefficients, and the
    /// inverse-gamma draw of `σ²`.
    pub fn update_outcome_block(&mut self) -> Result<()> {
        if !self.exclude_balances {
            self.refresh_balances();
        }
        self.refresh_residuals();
        self.draw_intercept_treatment();

        let sigma2 = self.outcome.sigma2;
        if !self.exclude_balances {
            let all: Vec<usize> = (0..self.outcome.beta.len()).collect();
            let prior = self.hp.balance_prior;
            for k in self.pick(self.cfg.scan, &all) {
                let ok = update_coefficient(
                    &self.balances,
                    k,
                    &mut self.resid,
                    &mut self.outcome.beta[k],
                    &mut self.outcome.xi[k],
                    CoefficientPrior { h: self.hp.h_beta, inclusion: prior },
                    sigma2,
                    self.likelihood,
                    true,
                    &mut self.rng,
                );
                self.stats.beta_add_delete.record(ok);
            }
            for k in all {
                if self.outcome.xi[k] {
                    update_coefficient(
                        &self.balances,
                        k,
                        &mut self.resid,
                        &mut self.outcome.beta[k],
                        &mut self.outcome.xi[k],
                        CoefficientPrior { h: self.hp.h_beta, inclusion: prior },
                        sigma2,
                        self.likelihood,
                        false,
                        &mut self.rng,
                    );
                }
            }
        }

        if self.data.p() > 0 {
            let all: Vec<usize> = (0..self.data.p()).collect();
            let prior = self.hp.covariate_prior;
            for p in self.pick(self.cfg.scan, &all) {
                let ok = update_coefficient(
                    &self.data.covariates,
                    p,
                    &mut self.resid,
                    &mut self.outcome.kappa[p],
                    &mut self.outcome.nu[p],
                    CoefficientPrior { h: self.hp.h_kappa, inclusion: prior },
                    sigma2,
                    self.likelihood,
                    true,
                    &mut self.rng,
                );
                self.stats.kappa_add_delete.record(ok);
            }
            for p in all {
                if self.outcome.nu[p] {
                    update_coefficient(
                        &self.data.covariates,
                        p,
                        &mut self.resid,
                        &mut self.outcome.kappa[p],
                        &mut self.outcome.nu[p],
                        CoefficientPrior { h: self.hp.h_kappa, inclusion: prior },
                        sigma2,
                        self.likelihood,
                        false,
                        &mut self.rng,
                    );
                }
            }
        }

        self.outcome.sigma2 = self.draw_sigma2();
        Ok(())
    }

    fn draw_intercept_treatment(&mut self) {
        let n = self.data.n();
        let inv_h = 1.0 / self.hp.h_c;
        let (c0, c1) = (self.outcome.c0, self.outcome.c1);
        for i in 0..n {
            self.resid[i] += c0 + c1 * self.t[i];
        }
        let (mut m00, mut m01, mut m11, mut r0, mut r1) = (inv_h, 0.0, inv_h, 0.0, 0.0);
        if self.likelihood {
            for i in 0..n {
                let t = self.t[i];
                let e = self.resid[i];
                m00 += 1.0;
                m01 += t;
                m11 += t * t;
                r0 += e;
                r1 += t * e;
            }
        }
        let det = m00 * m11 - m01 * m01;
        let mean0 = (m11 * r0 - m01 * r1) / det;
        let mean1 = (m00 * r1 - m01 * r0) / det;
        // M = L Lᵀ; m + σ L⁻ᵀ z has covariance σ² M⁻¹
        let l00 = m00.sqrt();
        let l10 = m01 / l00;
        let l11 = (m11 - l10 * l10).sqrt();
        let sd = self.outcome.sigma2.sqrt();
        let z0 = std_normal(&mut self.rng);
        let z1 = std_normal(&mut self.rng);
        let x1 = z1 / l11;
        let x0 = (z0 - l10 * x1) / l00;
        self.outcome.c0 = mean0 + sd * x0;
        self.outcome.c1 = mean1 + sd * x1;
        let (c0, c1) = (self.outcome.c0, self.outcome.c1);
        for i in 0..n {
            self.resid[i] -= c0 + c1 * self.t[i];
        }
    }

    /// `σ² ~ InvGamma(a0 + n/2 + (2 + m)/2, b0 + SSE/2 + penalty/2)` where
    /// `m` counts included β and κ and the penalty pools `c0`, `c1` and the
    /// included coefficients scaled by their slab multipliers.
    fn draw_sigma2(&mut self) -> f64 {
        let (shape, rate) = self.sigma2_conditional();
        1.0 / gamma_variate(&mut self.rng, shape, rate)
    }

    pub(crate) fn sigma2_conditional(&self) -> (f64, f64) {
        let o = &self.outcome;
        let hp = self.hp;
        let m = o.included_count() as f64;
        let mut shape = hp.a0 + (2.0 + m) / 2.0;
        let mut rate = hp.b0
            + (o.c0 * o.c0 + o.c1 * o.c1) / (2.0 * hp.h_c)
            + o.beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * hp.h_beta)
            + o.kappa.iter().map(|k| k * k).sum::<f64>() / (2.0 * hp.h_kappa);
        if self.likelihood {
            shape += self.data.n() as f64 / 2.0;
            rate += self.resid.iter().map(|r| r * r).sum::<f64>() / 2.0;
        }
        (shape, rate)
    }

    #[cfg(test)]
    pub(crate) fn set_outcome(&mut self, outcome: OutcomeParams) {
        self.outcome = outcome;
        self.refresh_residuals();
    }

    #[cfg(test)]
    pub(crate) fn set_log_k(&mut self, log_k: Matrix<f64>) {
        self.aug.log_k = log_k;
        self.refresh_balances();
        self.refresh_residuals();
    }

    #[cfg(test)]
    pub(crate) fn draw_sigma2_only(&mut self) -> f64 {
        self.draw_sigma2()
    }
}

#[derive(Clone, Copy)]
struct CoefficientPrior {
    h: f64,
    inclusion: BetaPrior,
}

/// Spike-and-slab coefficient update against one design column.
///
/// With `toggle`, proposes flipping the indicator, accepting with the
/// Bayes factor of the coefficient integrated out of its Gaussian slab
/// (variance `h·σ²`) times the prior odds. Afterwards an included
/// coefficient is drawn from its full conditional and an excluded one is
/// set to exactly zero. Returns whether a flip was accepted.
#[allow(clippy::too_many_arguments)]
fn update_coefficient(
    design: &Matrix<f64>,
    col: usize,
    resid: &mut [f64],
    coef: &mut f64,
    on: &mut bool,
    prior: CoefficientPrior,
    sigma2: f64,
    likelihood: bool,
    toggle: bool,
    rng: &mut ChainRng,
) -> bool {
    let n = resid.len();
    if *coef != 0.0 {
        for (i, r) in resid.iter_mut().enumerate() {
            *r += *coef * design[(i, col)];
        }
    }
    let (mut vv, mut ve) = (0.0, 0.0);
    if likelihood {
        for i in 0..n {
            let v = design[(i, col)];
            vv += v * v;
            ve += v * resid[i];
        }
    }
    let q = vv + 1.0 / prior.h;
    let mut flipped = false;
    if toggle {
        let log_bf = -0.5 * (prior.h * q).ln() + ve * ve / (2.0 * sigma2 * q);
        let log_ratio = if *on {
            -log_bf - prior.inclusion.log_odds()
        } else {
            log_bf + prior.inclusion.log_odds()
        };
        if accept(rng, log_ratio) {
            *on = !*on;
            flipped = true;
        }
    }
    *coef = if *on {
        ve / q + (sigma2 / q).sqrt() * std_normal(rng)
    } else {
        0.0
    };
    if *coef != 0.0 {
        for (i, r) in resid.iter_mut().enumerate() {
            *r -= *coef * design[(i, col)];
        }
    }
    flipped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::testing::tiny_dataset;
    use crate::model::log_lik_outcome;
    use crate::model::log_prior_state;

    fn short_cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            iterations: 100,
            burn_in: 0,
            thin: 1,
            seed,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn u_update_gamma_mean() {
        // one subject, ż = 5, Σk = 2 → E[u] = 2.5
        let counts = Matrix::from_vec(1, 2, vec![3, 2]);
        let ds = Dataset::without_covariates(counts, vec![0.0], vec![false]).unwrap();
        let hp = Hyperparameters::defaults(2);
        let cfg = short_cfg(3);
        let opts = FitOptions::default();
        let mut chain = Chain::new(&ds, &hp, &cfg, &opts).unwrap();
        chain.set_log_k(Matrix::from_vec(1, 2, vec![0.0, 0.0]));
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            chain.update_u().unwrap();
            sum += chain.aug.u[0];
        }
        let mean = sum / draws as f64;
        assert!((mean - 2.5).abs() < 0.025, "mean {mean}");
    }

    #[test]
    fn u_update_is_reproducible() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let opts = FitOptions::default();
        let mut a = Chain::new(&ds, &hp, &short_cfg(8), &opts).unwrap();
        let mut b = Chain::new(&ds, &hp, &short_cfg(8), &opts).unwrap();
        a.update_u().unwrap();
        b.update_u().unwrap();
        assert_eq!(a.aug.u, b.aug.u);
    }

    #[test]
    fn k_update_accepts_everything_without_balances_in_model() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let opts = FitOptions::default();
        let mut chain = Chain::new(&ds, &hp, &short_cfg(1), &opts).unwrap();
        for _ in 0..50 {
            chain.update_u().unwrap();
            chain.update_k().unwrap();
        }
        assert_eq!(chain.stats.k.accepted, chain.stats.k.proposed);
    }

    #[test]
    fn k_update_with_active_balance_rejects_sometimes() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let opts = FitOptions::default();
        let mut chain = Chain::new(&ds, &hp, &short_cfg(2), &opts).unwrap();
        let mut out = OutcomeParams::empty(2, 0);
        out.beta = vec![1.5, -0.8];
        out.xi = vec![true, true];
        out.sigma2 = 0.3;
        chain.set_outcome(out);
        for _ in 0..200 {
            chain.update_u().unwrap();
            chain.update_k().unwrap();
        }
        let rate = chain.stats.k.rate();
        assert!(rate > 0.0 && rate < 1.0, "rate {rate}");
    }

    #[test]
    fn residuals_stay_consistent_through_sweeps() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        for k_update in [KUpdate::PerTaxon, KUpdate::FullRow] {
            let cfg = SamplerConfig {
                k_update,
                ..short_cfg(4)
            };
            let opts = FitOptions::default();
            let mut chain = Chain::new(&ds, &hp, &cfg, &opts).unwrap();
            for _ in 0..100 {
                chain.sweep().unwrap();
                chain.update_u().unwrap();
                chain.update_k().unwrap();
                let cached = chain.resid.clone();
                chain.refresh_balances();
                chain.refresh_residuals();
                for (a, b) in cached.iter().zip(&chain.resid) {
                    assert!((a - b).abs() < 1e-9);
                }
                let conc = chain.gamma.clone();
                chain.refresh_concentrations().unwrap();
                assert_eq!(conc, chain.gamma);
            }
        }
    }

    /// Grid integration of α_1's full conditional given fixed latents.
    #[test]
    fn alpha_update_matches_grid_posterior() {
        let counts = Matrix::from_vec(5, 2, vec![3, 1, 2, 4, 5, 1, 1, 1, 2, 2]);
        let ds = Dataset::without_covariates(counts, vec![0.1, 0.4, -0.3, 0.0, 0.2], vec![false; 5])
            .unwrap();
        let hp = Hyperparameters::defaults(2);
        let opts = FitOptions::default();
        let cfg = short_cfg(17);
        let mut chain = Chain::new(&ds, &hp, &cfg, &opts).unwrap();
        let log_k: Vec<f64> = vec![0.3, -1.0, -0.2, 0.5, 0.9, -2.0, -0.4, -0.1, 0.0, 0.2];
        chain.set_log_k(Matrix::from_vec(5, 2, log_k.clone()));

        let log_target = |a: f64| {
            let g = a.exp();
            let mut s = -a * a / 2.0;
            for i in 0..5 {
                s += g * log_k[2 * i] - ln_gamma(g);
            }
            s
        };
        let (lo, hi, steps) = (-6.0, 6.0, 24_000);
        let h = (hi - lo) / steps as f64;
        let (mut z, mut m) = (0.0, 0.0);
        for s in 0..=steps {
            let a = lo + s as f64 * h;
            let w = log_target(a).exp();
            z += w;
            m += a * w;
        }
        let oracle = m / z;

        let draws = 60_000;
        let mut vals = Vec::with_capacity(draws);
        for _ in 0..draws {
            chain.update_alpha().unwrap();
            vals.push(chain.dm.alpha[0]);
        }
        let mean = vals.iter().sum::<f64>() / draws as f64;
        // batch-means standard error
        let batches = 100;
        let size = draws / batches;
        let bm: Vec<f64> = (0..batches)
            .map(|b| vals[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let var = bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((mean - oracle).abs() < 4.0 * se + 1e-3, "mean {mean} oracle {oracle} se {se}");
        let rate = chain.stats.alpha.rate();
        assert!(rate > 0.05 && rate < 0.95);
    }

    #[test]
    fn tiny_random_walk_step_is_almost_always_accepted() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let cfg = SamplerConfig {
            rw_sd_alpha: 1e-9,
            ..short_cfg(6)
        };
        let opts = FitOptions::default();
        let mut chain = Chain::new(&ds, &hp, &cfg, &opts).unwrap();
        for _ in 0..200 {
            chain.update_alpha().unwrap();
        }
        assert!(chain.stats.alpha.rate() > 0.99);
    }

    /// Gibbs draws of σ² versus a 1-D grid over the joint density.
    #[test]
    fn sigma2_draws_match_grid_posterior_mean() {
        let ds = tiny_dataset();
        let hp = Hyperparameters::defaults(3);
        let opts = FitOptions::default();
        let mut chain = Chain::new(&ds, &hp, &short_cfg(21), &opts).unwrap();
        let out = OutcomeParams {
            c0: 0.2,
            c1: -0.1,
            beta: vec![0.4, 0.0],
            xi: vec![true, false],
            kappa: vec![],
            nu: vec![],
            sigma2: 1.0,
        };
        chain.set_outcome(out.clone());
        let balances = chain.balances().clone();
        let dm = chain.dm.clone();

        let log_joint = |s2: f64| {
            let o = OutcomeParams { sigma2: s2, ..out.clone() };
            log_lik_outcome(&o, &balances, &ds).unwrap() + log_prior_state(&o, &dm, &hp)
        };
        let (lo, hi, steps) = (1e-3, 30.0, 200_000);
        let h = (hi - lo) / steps as f64;
        let peak = (0..=steps)
            .map(|s| log_joint(lo + s as f64 * h))
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m) = (0.0, 0.0);
        for s in 0..=steps {
            let v = lo + s as f64 * h;
            let w = (log_joint(v) - peak).exp();
            z += w;
            m += v * w;
        }
        let oracle = m / z;

        let draws = 100_000;
        let mean = (0..draws).map(|_| chain.draw_sigma2_only()).sum::<f64>() / draws as f64;
        assert!((mean - oracle).abs() / oracle < 0.02, "mean {mean} oracle {oracle}");
    }
}
