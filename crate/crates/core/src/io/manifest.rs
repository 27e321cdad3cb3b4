use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::ingest::InputPaths;
use crate::io::kv;
use crate::io::preprocess::PreprocessOptions;
use crate::mcmc::SamplerConfig;
use crate::model::{BetaPrior, Hyperparameters};
use crate::strategy::{Strategy, StrategyConfig};

/// Scalar hyperparameter settings; expanded per taxon by [`HyperSettings::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct HyperSettings {
    pub h_c: f64,
    pub h_beta: f64,
    pub h_kappa: f64,
    pub a0: f64,
    pub b0: f64,
    pub sigma2_alpha: f64,
    pub r2: f64,
    /// Beta(a, b) on every inclusion indicator.
    pub prior_a: f64,
    pub prior_b: f64,
}

impl Default for HyperSettings {
    fn default() -> Self {
        Self {
            h_c: 1.0,
            h_beta: 1.0,
            h_kappa: 1.0,
            a0: 1.0,
            b0: 1.0,
            sigma2_alpha: 1.0,
            r2: 10.0,
            prior_a: 1.0,
            prior_b: 1.0,
        }
    }
}

impl HyperSettings {
    pub fn build(&self, parts: usize) -> Result<Hyperparameters> {
        let mut hp = Hyperparameters::defaults(parts).with_inclusion_prior(BetaPrior {
            a: self.prior_a,
            b: self.prior_b,
        });
        hp.h_c = self.h_c;
        hp.h_beta = self.h_beta;
        hp.h_kappa = self.h_kappa;
        hp.a0 = self.a0;
        hp.b0 = self.b0;
        hp.sigma2_alpha = self.sigma2_alpha;
        hp.r2 = vec![self.r2; parts];
        hp.validate(parts)?;
        Ok(hp)
    }
}

/// Everything a run depends on besides the contents of its input files.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub counts: Option<PathBuf>,
    pub outcome: Option<PathBuf>,
    pub treatment: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub dm_covariates: Option<PathBuf>,
    pub preprocess: PreprocessOptions,
    pub hyper: HyperSettings,
    pub sampler: SamplerConfig,
    pub strategy: StrategyConfig,
    /// Preset name or 1–4.
    pub scenario: String,
    pub scenario_config: Option<PathBuf>,
    pub replicates: usize,
    pub methods: Vec<Strategy>,
    pub out: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            counts: None,
            outcome: None,
            treatment: None,
            covariates: None,
            dm_covariates: None,
            preprocess: PreprocessOptions::default(),
            hyper: HyperSettings::default(),
            sampler: SamplerConfig::default(),
            strategy: StrategyConfig::new(Strategy::CMbvs1),
            scenario: "1".into(),
            scenario_config: None,
            replicates: 50,
            methods: vec![Strategy::CMbvs1, Strategy::CMbvs2, Strategy::CMbvs3],
            out: None,
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let s = &self.sampler;
        let h = &self.hyper;
        let pairs: Vec<(&str, String)> = vec![
            ("command", self.command.clone()),
            ("counts", path(&self.counts)),
            ("outcome", path(&self.outcome)),
            ("treatment", path(&self.treatment)),
            ("covariates", path(&self.covariates)),
            ("dm_covariates", path(&self.dm_covariates)),
            ("zero_threshold", self.preprocess.zero_threshold.to_string()),
            ("pseudocount", self.preprocess.pseudocount.to_string()),
            ("standardize", self.preprocess.standardize.to_string()),
            ("iterations", s.iterations.to_string()),
            ("burn_in", s.burn_in.to_string()),
            ("thin", s.thin.to_string()),
            ("seed", s.seed.to_string()),
            ("rw_sd_alpha", s.rw_sd_alpha.to_string()),
            ("rw_sd_coef", s.rw_sd_coef.to_string()),
            ("scan", s.scan.to_string()),
            ("k_update", s.k_update.to_string()),
            ("h_c", h.h_c.to_string()),
            ("h_beta", h.h_beta.to_string()),
            ("h_kappa", h.h_kappa.to_string()),
            ("a0", h.a0.to_string()),
            ("b0", h.b0.to_string()),
            ("sigma2_alpha", h.sigma2_alpha.to_string()),
            ("r2", h.r2.to_string()),
            ("prior_a", h.prior_a.to_string()),
            ("prior_b", h.prior_b.to_string()),
            ("strategy", self.strategy.strategy.to_string()),
            ("mppi_threshold", self.strategy.mppi_threshold.to_string()),
            ("ci_level", self.strategy.ci_level.to_string()),
            ("exhaustive", self.strategy.exhaustive.to_string()),
            ("scenario", self.scenario.clone()),
            ("scenario_config", path(&self.scenario_config)),
            ("replicates", self.replicates.to_string()),
            (
                "methods",
                self.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("out", path(&self.out)),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn render(&self) -> String {
        kv::render(&self.to_pairs())
    }

    /// Applies `key = value` pairs on top of the current values. Empty
    /// path values clear the path.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        for (k, v) in pairs {
            let v = v.as_str();
            match k.as_str() {
                "command" => {
                    if v != self.command {
                        return Err(Error::Usage(format!(
                            "manifest is for `{v}`, not `{}`",
                            self.command
                        )));
                    }
                }
                "counts" => self.counts = opt_path(v),
                "outcome" => self.outcome = opt_path(v),
                "treatment" => self.treatment = opt_path(v),
                "covariates" => self.covariates = opt_path(v),
                "dm_covariates" => self.dm_covariates = opt_path(v),
                "zero_threshold" => self.preprocess.zero_threshold = kv::parse_value(k, v)?,
                "pseudocount" => self.preprocess.pseudocount = kv::parse_value(k, v)?,
                "standardize" => self.preprocess.standardize = kv::parse_bool(k, v)?,
                "iterations" => self.sampler.iterations = kv::parse_value(k, v)?,
                "burn_in" => self.sampler.burn_in = kv::parse_value(k, v)?,
                "thin" => self.sampler.thin = kv::parse_value(k, v)?,
                "seed" => self.sampler.seed = kv::parse_value(k, v)?,
                "rw_sd_alpha" => self.sampler.rw_sd_alpha = kv::parse_value(k, v)?,
                "rw_sd_coef" => self.sampler.rw_sd_coef = kv::parse_value(k, v)?,
                "scan" => self.sampler.scan = v.parse()?,
                "k_update" => self.sampler.k_update = v.parse()?,
                "h_c" => self.hyper.h_c = kv::parse_value(k, v)?,
                "h_beta" => self.hyper.h_beta = kv::parse_value(k, v)?,
                "h_kappa" => self.hyper.h_kappa = kv::parse_value(k, v)?,
                "a0" => self.hyper.a0 = kv::parse_value(k, v)?,
                "b0" => self.hyper.b0 = kv::parse_value(k, v)?,
                "sigma2_alpha" => self.hyper.sigma2_alpha = kv::parse_value(k, v)?,
                "r2" => self.hyper.r2 = kv::parse_value(k, v)?,
                "prior_a" => self.hyper.prior_a = kv::parse_value(k, v)?,
                "prior_b" => self.hyper.prior_b = kv::parse_value(k, v)?,
                "strategy" => self.strategy.strategy = v.parse()?,
                "mppi_threshold" => self.strategy.mppi_threshold = kv::parse_value(k, v)?,
                "ci_level" => self.strategy.ci_level = kv::parse_value(k, v)?,
                "exhaustive" => self.strategy.exhaustive = kv::parse_bool(k, v)?,
                "scenario" => self.scenario = v.to_string(),
                "scenario_config" => self.scenario_config = opt_path(v),
                "replicates" => self.replicates = kv::parse_value(k, v)?,
                "methods" => {
                    self.methods = v
                        .split(',')
                        .filter(|m| !m.trim().is_empty())
                        .map(|m| m.trim().parse())
                        .collect::<Result<_>>()?
                }
                "out" => self.out = opt_path(v),
                other => return Err(Error::Config(format!("unknown manifest key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn load(path: &Path, command: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::new(command);
        m.apply_pairs(&kv::parse(&text)?)?;
        Ok(m)
    }

    pub fn input_paths(&self) -> Result<InputPaths> {
        let need = |p: &Option<PathBuf>, flag: &str| {
            p.clone()
                .ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
        };
        Ok(InputPaths {
            counts: need(&self.counts, "counts")?,
            outcome: need(&self.outcome, "outcome")?,
            treatment: need(&self.treatment, "treatment")?,
            covariates: self.covariates.clone(),
            dm_covariates: self.dm_covariates.clone(),
        })
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Usage("missing required --out".into()))
    }

    /// Range checks plus existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.strategy.validate()?;
        if !(0.0..=1.0).contains(&self.preprocess.zero_threshold) {
            return Err(Error::Config("zero_threshold must lie in [0, 1]".into()));
        }
        if !(self.preprocess.pseudocount > 0.0) {
            return Err(Error::Config("pseudocount must be positive".into()));
        }
        for p in [
            &self.counts,
            &self.outcome,
            &self.treatment,
            &self.covariates,
            &self.dm_covariates,
            &self.scenario_config,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::Data(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_reload_round_trip() {
        let mut m = RunManifest::new("study");
        m.sampler.seed = 99;
        m.methods = vec![Strategy::CMbvs2];
        m.out = Some("results".into());
        m.hyper.prior_a = 0.2;
        let mut back = RunManifest::new("study");
        back.apply_pairs(&kv::parse(&m.render()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_unknown_keys_and_wrong_command() {
        let mut m = RunManifest::new("fit");
        assert!(m.apply_pairs(&[("colour".into(), "red".into())]).is_err());
        assert!(m.apply_pairs(&[("command".into(), "sweep".into())]).is_err());
        assert!(matches!(m.input_paths(), Err(Error::Usage(_))));
    }

    #[test]
    fn settings_expand_per_taxon() {
        let hp = HyperSettings { r2: 5.0, prior_a: 0.2, prior_b: 1.8, ..Default::default() }
            .build(4)
            .unwrap();
        assert_eq!(hp.r2, vec![5.0; 4]);
        assert!((hp.balance_prior.inclusion_probability() - 0.1).abs() < 1e-12);
    }
}
