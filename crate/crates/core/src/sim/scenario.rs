use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::composition::PartitionScheme;
use crate::error::{Error, Result};
use crate::estimands::expected_log_psi;
use crate::io::kv;
use crate::matrix::Matrix;
use crate::mcmc::rng::{chain_rng, log_gamma_variate, std_normal};
use crate::model::Dataset;

/// Data-generating settings for one simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    /// 1 correct model, 2 unmodelled count-level confounders, 3 unmodelled
    /// outcome confounders, 4 both.
    pub scenario: u8,
    pub n: usize,
    pub taxa: usize,
    pub p_treat: f64,
    /// Assign exactly `round(n · p_treat)` treated subjects instead of
    /// independent Bernoulli draws.
    pub fixed_allocation: bool,
    pub phi: Vec<f64>,
    pub beta_log: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub noise_sd: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub library_min: u64,
    pub library_max: u64,
    pub seed: u64,
}

fn padded(head: &[f64], len: usize) -> Vec<f64> {
    let mut v = head.to_vec();
    v.resize(len, 0.0);
    v
}

impl ScenarioSpec {
    /// The main simulation design: n = 200, J = 50, three active taxa.
    pub fn scenario(scenario: u8) -> Self {
        Self::with_shape(scenario, 200, 50)
    }

    pub fn with_shape(scenario: u8, n: usize, taxa: usize) -> Self {
        Self {
            scenario,
            n,
            taxa,
            p_treat: 0.5,
            fixed_allocation: false,
            phi: padded(&[1.0, 1.2, 1.5], taxa),
            beta_log: padded(&[3.0, -1.5, -1.5], taxa),
            c0: 0.0,
            c1: 1.0,
            noise_sd: 1.0,
            alpha_min: -2.0,
            alpha_max: 0.5,
            nu1: padded(&[0.8, 0.0, 0.0, 0.0, 1.2], taxa),
            nu2: padded(&[0.0, 1.2, 0.0, 0.8], taxa),
            kappa1: 1.2,
            kappa2: 1.2,
            library_min: 5000,
            library_max: 10000,
            seed: 1,
        }
    }

    /// Scenario 1 with a quarter of subjects treated.
    pub fn skewed_treatment() -> Self {
        Self {
            p_treat: 0.25,
            ..Self::scenario(1)
        }
    }

    /// Small study resembling the application: n = J = 36, 2:1 treated to
    /// control.
    pub fn application_like(scenario: u8) -> Self {
        let mut s = Self::with_shape(scenario, 36, 36);
        s.p_treat = 2.0 / 3.0;
        s.fixed_allocation = true;
        s.phi = padded(&[0.7, 1.0, 1.2], 36);
        s.beta_log = padded(&[1.8, -1.0, -0.8], 36);
        s
    }

    /// Named presets: `scenario1`..`scenario4`, `skewed`, `n50-j50`,
    /// `n50-j100`, `application1`..`application4`.
    pub fn preset(name: &str) -> Result<Self> {
        let digit = |prefix: &str| -> Option<u8> {
            name.strip_prefix(prefix)
                .and_then(|d| d.parse::<u8>().ok())
                .filter(|d| (1..=4).contains(d))
        };
        if let Some(k) = digit("scenario") {
            return Ok(Self::scenario(k));
        }
        if let Some(k) = digit("application") {
            return Ok(Self::application_like(k));
        }
        match name {
            "skewed" => Ok(Self::skewed_treatment()),
            "n50-j50" => Ok(Self::with_shape(1, 50, 50)),
            "n50-j100" => Ok(Self::with_shape(1, 50, 100)),
            _ => Err(Error::Config(format!("unknown scenario preset `{name}`"))),
        }
    }

    pub fn dm_confounding(&self) -> bool {
        matches!(self.scenario, 2 | 4)
    }

    pub fn outcome_confounding(&self) -> bool {
        matches!(self.scenario, 3 | 4)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=4).contains(&self.scenario) {
            return bad(format!("scenario {} not in 1..=4", self.scenario));
        }
        if self.n < 2 || self.taxa < 2 {
            return bad(format!("need n ≥ 2 and J ≥ 2, got n={} J={}", self.n, self.taxa));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return bad(format!("treatment probability {} outside (0, 1)", self.p_treat));
        }
        for (name, v) in [
            ("phi", &self.phi),
            ("beta_log", &self.beta_log),
            ("nu1", &self.nu1),
            ("nu2", &self.nu2),
        ] {
            if v.len() != self.taxa {
                return bad(format!("{name} has {} entries, expected {}", v.len(), self.taxa));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        if !(self.alpha_min <= self.alpha_max) {
            return bad("alpha_min exceeds alpha_max".into());
        }
        if self.library_min == 0 || self.library_min > self.library_max {
            return bad("library size range must be positive and ordered".into());
        }
        if !(self.noise_sd > 0.0) {
            return bad("noise_sd must be positive".into());
        }
        Ok(())
    }

    /// Taxa with both a treatment effect and an outcome effect.
    pub fn active(&self) -> Vec<bool> {
        self.phi
            .iter()
            .zip(&self.beta_log)
            .map(|(p, b)| *p != 0.0 && *b != 0.0)
            .collect()
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("scenario", self.scenario.to_string()),
            ("n", self.n.to_string()),
            ("taxa", self.taxa.to_string()),
            ("p_treat", self.p_treat.to_string()),
            ("fixed_allocation", self.fixed_allocation.to_string()),
            ("phi", kv::render_list(&self.phi)),
            ("beta_log", kv::render_list(&self.beta_log)),
            ("c0", self.c0.to_string()),
            ("c1", self.c1.to_string()),
            ("noise_sd", self.noise_sd.to_string()),
            ("alpha_min", self.alpha_min.to_string()),
            ("alpha_max", self.alpha_max.to_string()),
            ("nu1", kv::render_list(&self.nu1)),
            ("nu2", kv::render_list(&self.nu2)),
            ("kappa1", self.kappa1.to_string()),
            ("kappa2", self.kappa2.to_string()),
            ("library_min", self.library_min.to_string()),
            ("library_max", self.library_max.to_string()),
            ("seed", self.seed.to_string()),
        ];
        v.drain(..).map(|(k, val)| (k.to_string(), val)).collect()
    }

    /// Reads a scenario from `key = value` text. A `preset` key selects the
    /// starting point (default `scenario1`); vectors shorter than `taxa`
    /// are zero-padded.
    pub fn from_config(text: &str) -> Result<Self> {
        let pairs = kv::parse(text)?;
        let preset = pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.as_str())
            .unwrap_or("scenario1");
        let mut s = Self::preset(preset)?;
        let mut lists: Vec<(&str, Vec<f64>)> = Vec::new();
        for (k, v) in &pairs {
            match k.as_str() {
                "preset" => {}
                "scenario" => s.scenario = kv::parse_value(k, v)?,
                "n" => s.n = kv::parse_value(k, v)?,
                "taxa" => s.taxa = kv::parse_value(k, v)?,
                "p_treat" => s.p_treat = kv::parse_value(k, v)?,
                "fixed_allocation" => s.fixed_allocation = kv::parse_bool(k, v)?,
                "phi" | "beta_log" | "nu1" | "nu2" => {
                    lists.push((k.as_str(), kv::parse_list(k, v)?));
                }
                "c0" => s.c0 = kv::parse_value(k, v)?,
                "c1" => s.c1 = kv::parse_value(k, v)?,
                "noise_sd" => s.noise_sd = kv::parse_value(k, v)?,
                "alpha_min" => s.alpha_min = kv::parse_value(k, v)?,
                "alpha_max" => s.alpha_max = kv::parse_value(k, v)?,
                "kappa1" => s.kappa1 = kv::parse_value(k, v)?,
                "kappa2" => s.kappa2 = kv::parse_value(k, v)?,
                "library_min" => s.library_min = kv::parse_value(k, v)?,
                "library_max" => s.library_max = kv::parse_value(k, v)?,
                "seed" => s.seed = kv::parse_value(k, v)?,
                other => return Err(Error::Config(format!("unknown scenario key `{other}`"))),
            }
        }
        for v in [&mut s.phi, &mut s.beta_log, &mut s.nu1, &mut s.nu2] {
            v.resize(s.taxa, 0.0);
        }
        for (k, mut v) in lists {
            if v.len() > s.taxa {
                return Err(Error::Config(format!("{k} longer than taxa = {}", s.taxa)));
            }
            v.resize(s.taxa, 0.0);
            match k {
                "phi" => s.phi = v,
                "beta_log" => s.beta_log = v,
                "nu1" => s.nu1 = v,
                _ => s.nu2 = v,
            }
        }
        s.validate()?;
        Ok(s)
    }
}

/// Generating parameters and target values of a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub beta_log: Vec<f64>,
    /// `A · β_log` under the identity ordering; reproduces the log-linear
    /// outcome term exactly when `β_log` sums to zero.
    pub beta_balance: Vec<f64>,
    pub active: Vec<bool>,
    pub direct: f64,
    pub overall_indirect: f64,
    /// `n × J` Dirichlet draws, log scale.
    pub log_psi: Matrix<f64>,
    pub confounders: Vec<(bool, f64)>,
}

/// True overall indirect effect `Σ_j β_log,j (E[ln ψ_j | t=1] − E[ln ψ_j | t=0])`
/// with `γ_j(t) = exp(α_j + φ_j t)`.
pub fn true_overall_indirect(alpha: &[f64], phi: &[f64], beta_log: &[f64]) -> Result<f64> {
    let g1: Vec<f64> = alpha.iter().zip(phi).map(|(a, p)| (a + p).exp()).collect();
    let g0: Vec<f64> = alpha.iter().map(|a| a.exp()).collect();
    let e1 = expected_log_psi(&g1)?;
    let e0 = expected_log_psi(&g0)?;
    Ok(beta_log
        .iter()
        .zip(e1.iter().zip(&e0))
        .map(|(b, (x, y))| b * (x - y))
        .sum())
}

/// Draws `ln ψ` for `ψ ~ Dirichlet(γ)` without underflow.
pub fn log_dirichlet<R: Rng + ?Sized>(rng: &mut R, gamma: &[f64], out: &mut [f64]) {
    for (o, &g) in out.iter_mut().zip(gamma) {
        *o = log_gamma_variate(rng, g, 1.0);
    }
    let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + out.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    out.iter_mut().for_each(|v| *v -= lse);
}

/// Simulates one dataset. Confounders are drawn for every subject but enter
/// only the levels their scenario names, and never the returned dataset.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = chain_rng(spec.seed);
    let (n, parts) = (spec.n, spec.taxa);

    let alpha: Vec<f64> = (0..parts)
        .map(|_| rng.random_range(spec.alpha_min..=spec.alpha_max))
        .collect();
    let treatment: Vec<bool> = if spec.fixed_allocation {
        let treated = ((n as f64) * spec.p_treat).round() as usize;
        let mut t: Vec<bool> = (0..n).map(|i| i < treated).collect();
        t.shuffle(&mut rng);
        t
    } else {
        (0..n).map(|_| rng.random_bool(spec.p_treat)).collect()
    };
    let confounders: Vec<(bool, f64)> = (0..n)
        .map(|_| (rng.random_bool(0.5), std_normal(&mut rng)))
        .collect();

    let mut counts = Matrix::filled(n, parts, 0u64);
    let mut log_psi = Matrix::filled(n, parts, 0.0);
    let mut outcome = Vec::with_capacity(n);
    let mut gamma = vec![0.0; parts];
    for i in 0..n {
        let t = if treatment[i] { 1.0 } else { 0.0 };
        let (u1, u2) = (if confounders[i].0 { 1.0 } else { 0.0 }, confounders[i].1);
        for j in 0..parts {
            let mut lam = alpha[j] + spec.phi[j] * t;
            if spec.dm_confounding() {
                lam += spec.nu1[j] * u1 + spec.nu2[j] * u2;
            }
            gamma[j] = lam.exp();
        }
        log_dirichlet(&mut rng, &gamma, log_psi.row_mut(i));

        let library = rng.random_range(spec.library_min..=spec.library_max);
        let mut remaining = library;
        let mut mass_left = 1.0;
        for j in 0..parts {
            let p = log_psi[(i, j)].exp();
            let c = if j + 1 == parts || remaining == 0 {
                remaining
            } else {
                let q = (p / mass_left).clamp(0.0, 1.0);
                Binomial::new(remaining, q)
                    .map_err(|e| Error::Domain(format!("multinomial draw: {e}")))?
                    .sample(&mut rng)
            };
            counts[(i, j)] = c;
            remaining -= c;
            mass_left -= p;
        }

        let mut y = spec.c0 + spec.c1 * t;
        for j in 0..parts {
            if spec.beta_log[j] != 0.0 {
                y += spec.beta_log[j] * log_psi[(i, j)];
            }
        }
        if spec.outcome_confounding() {
            y += spec.kappa1 * u1 + spec.kappa2 * u2;
        }
        y += spec.noise_sd * std_normal(&mut rng);
        outcome.push(y);
    }

    let mut ds = Dataset::without_covariates(counts, outcome, treatment)?;
    ds.subjects = (1..=n).map(|i| format!("subject{i}")).collect();

    let scheme = PartitionScheme::sequential(parts)?;
    let mut beta_balance = vec![0.0; parts - 1];
    scheme.apply(&spec.beta_log, &mut beta_balance);
    let truth = GroundTruth {
        overall_indirect: true_overall_indirect(&alpha, &spec.phi, &spec.beta_log)?,
        alpha,
        phi: spec.phi.clone(),
        beta_log: spec.beta_log.clone(),
        beta_balance,
        active: spec.active(),
        direct: spec.c1,
        log_psi,
        confounders,
    };
    Ok((ds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_documented_shapes() {
        let s = ScenarioSpec::scenario(1);
        assert_eq!((s.n, s.taxa, s.p_treat), (200, 50, 0.5));
        assert_eq!(&s.phi[..4], &[1.0, 1.2, 1.5, 0.0]);
        assert_eq!(&s.beta_log[..4], &[3.0, -1.5, -1.5, 0.0]);
        assert_eq!(s.active().iter().filter(|a| **a).count(), 3);
        let s4 = ScenarioSpec::scenario(4);
        assert_eq!(&s4.nu1[..6], &[0.8, 0.0, 0.0, 0.0, 1.2, 0.0]);
        assert_eq!(&s4.nu2[..6], &[0.0, 1.2, 0.0, 0.8, 0.0, 0.0]);
        assert!(s4.dm_confounding() && s4.outcome_confounding());
        let app = ScenarioSpec::application_like(1);
        assert_eq!((app.n, app.taxa), (36, 36));
        assert_eq!(&app.phi[..3], &[0.7, 1.0, 1.2]);
        assert_eq!(&app.beta_log[..3], &[1.8, -1.0, -0.8]);
        assert!(ScenarioSpec::preset("scenario5").is_err());
        assert_eq!(ScenarioSpec::preset("n50-j100").unwrap().taxa, 100);
    }

    #[test]
    fn generated_data_respects_invariants() {
        let spec = ScenarioSpec {
            seed: 42,
            ..ScenarioSpec::scenario(4)
        };
        let (ds, truth) = generate(&spec).unwrap();
        assert_eq!((ds.n(), ds.taxa_count()), (200, 50));
        for i in 0..ds.n() {
            let total = ds.row_total(i);
            assert!((5000..=10000).contains(&total));
            let s: f64 = truth.log_psi.row(i).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(truth.log_psi.row(i).iter().all(|v| v.is_finite()));
        }
        assert_eq!(truth.active[..4], [true, true, true, false]);
        let (again, _) = generate(&spec).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn fixed_allocation_is_exact() {
        let (ds, _) = generate(&ScenarioSpec::application_like(1)).unwrap();
        assert_eq!(ds.treatment.iter().filter(|t| **t).count(), 24);
    }

    #[test]
    fn null_effects_have_zero_truth() {
        let mut spec = ScenarioSpec::scenario(1);
        spec.phi = vec![0.0; 50];
        spec.beta_log = vec![0.0; 50];
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.overall_indirect, 0.0);
        spec.beta_log = padded(&[3.0, -1.5, -1.5], 50);
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.overall_indirect, 0.0);
    }

    /// Monte-Carlo estimate of E[Σ β_log ln ψ | t=1] − E[· | t=0].
    #[test]
    fn truth_matches_simulated_outcome_contrast() {
        let spec = ScenarioSpec {
            seed: 9,
            ..ScenarioSpec::with_shape(1, 10, 8)
        };
        let (_, truth) = generate(&spec).unwrap();
        let mut rng = chain_rng(77);
        let draws = 200_000;
        let mut lp = vec![0.0; 8];
        let mut diff = 0.0;
        let mut var = 0.0;
        for t in [0.0, 1.0] {
            let g: Vec<f64> = truth.alpha.iter().zip(&truth.phi).map(|(a, p)| (a + p * t).exp()).collect();
            let (mut acc, mut acc2) = (0.0, 0.0);
            for _ in 0..draws {
                log_dirichlet(&mut rng, &g, &mut lp);
                let v = lp.iter().zip(&truth.beta_log).map(|(l, b)| l * b).sum::<f64>();
                acc += v;
                acc2 += v * v;
            }
            let m = acc / draws as f64;
            var += (acc2 / draws as f64 - m * m) / draws as f64;
            diff += if t == 1.0 { m } else { -m };
        }
        let se = var.sqrt();
        assert!(
            (diff - truth.overall_indirect).abs() < 4.0 * se,
            "mc {diff} truth {} se {se}",
            truth.overall_indirect
        );
        // balance-coordinate coefficients reproduce the log-linear term
        let scheme = PartitionScheme::sequential(8).unwrap();
        let mut b = vec![0.0; 7];
        scheme.apply(truth.log_psi.row(0), &mut b);
        let via_balances: f64 = b.iter().zip(&truth.beta_balance).map(|(x, y)| x * y).sum();
        let direct: f64 = truth.log_psi.row(0).iter().zip(&truth.beta_log).map(|(x, y)| x * y).sum();
        assert!((via_balances - direct).abs() < 1e-10);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let spec = ScenarioSpec::application_like(3);
        let text = kv::render(&spec.to_pairs());
        let back = ScenarioSpec::from_config(&format!("preset = application3\n{text}")).unwrap();
        assert_eq!(back, spec);
        let small = ScenarioSpec::from_config("taxa = 5\nn = 20\nphi = 1\nbeta_log = 2,-2").unwrap();
        assert_eq!(small.phi, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(ScenarioSpec::from_config("p_treat = 1.5").is_err());
        assert!(ScenarioSpec::from_config("bogus = 1").is_err());
        assert!(generate(&ScenarioSpec { n: 1, ..ScenarioSpec::scenario(1) }).is_err());
    }
}
