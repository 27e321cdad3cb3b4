//! `compmed` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimands::{direct_effect, overall_indirect, relative_indirect, subject_profiles};
use crate::io::{self, ingest, preprocess, tables, RunManifest};
use crate::mcmc::{run_chain, KUpdate, Scan};
use crate::sim::{default_grid, generate, run_study, sensitivity_sweep, ScenarioSpec, StudyConfig};
use crate::strategy::{mediate, Strategy};

#[derive(Parser, Debug)]
#[command(name = "compmed", version, about = "Bayesian compositional mediation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one chain and write its trace and summaries.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        ci_level: Option<f64>,
    },
    /// Select mediating taxa with one of the strategies.
    Mediate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
    /// Simulate a dataset from a scenario.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Replicated simulation study scored against the truth.
    Study {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long)]
        replicates: Option<usize>,
        /// Comma-separated strategies.
        #[arg(long)]
        methods: Option<String>,
    },
    /// Hyperparameter sensitivity grid on one simulated dataset.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long)]
        methods: Option<String>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Start from a `key = value` manifest; flags override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<PathBuf>,
    #[arg(long)]
    treatment: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    dm_covariates: Option<PathBuf>,
    #[arg(long)]
    zero_threshold: Option<f64>,
    #[arg(long)]
    pseudocount: Option<f64>,
    #[arg(long)]
    standardize: Option<bool>,
}

#[derive(Args, Debug)]
struct SamplerArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    rw_sd_alpha: Option<f64>,
    #[arg(long)]
    rw_sd_coef: Option<f64>,
    /// single | full
    #[arg(long)]
    scan: Option<String>,
    /// per-taxon | full-row
    #[arg(long)]
    k_update: Option<String>,
}

#[derive(Args, Debug)]
struct HyperArgs {
    #[arg(long)]
    h_c: Option<f64>,
    #[arg(long)]
    h_beta: Option<f64>,
    #[arg(long)]
    h_kappa: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    sigma2_alpha: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    prior_a: Option<f64>,
    #[arg(long)]
    prior_b: Option<f64>,
}

#[derive(Args, Debug)]
struct StrategyArgs {
    /// cmbvs1 | cmbvs2 | cmbvs3
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    mppi_threshold: Option<f64>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long)]
    exhaustive: Option<bool>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// 1-4 or a preset: scenarioK, applicationK, skewed, n50-j50, n50-j100.
    #[arg(long)]
    scenario: Option<String>,
    /// `key = value` scenario file; overrides `--scenario`.
    #[arg(long)]
    scenario_config: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl CommonArgs {
    fn manifest(&self, command: &str) -> Result<RunManifest> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::load(p, command)?,
            None => RunManifest::new(command),
        };
        if self.out.is_some() {
            m.out = self.out.clone();
        }
        set(&mut m.sampler.seed, self.seed);
        Ok(m)
    }
}

impl DataArgs {
    fn apply(&self, m: &mut RunManifest) {
        for (slot, v) in [
            (&mut m.counts, &self.counts),
            (&mut m.outcome, &self.outcome),
            (&mut m.treatment, &self.treatment),
            (&mut m.covariates, &self.covariates),
            (&mut m.dm_covariates, &self.dm_covariates),
        ] {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut m.preprocess.zero_threshold, self.zero_threshold);
        set(&mut m.preprocess.pseudocount, self.pseudocount);
        set(&mut m.preprocess.standardize, self.standardize);
    }
}

impl SamplerArgs {
    fn apply(&self, m: &mut RunManifest) -> Result<()> {
        let s = &mut m.sampler;
        set(&mut s.iterations, self.iterations);
        set(&mut s.burn_in, self.burn_in);
        set(&mut s.thin, self.thin);
        set(&mut s.rw_sd_alpha, self.rw_sd_alpha);
        set(&mut s.rw_sd_coef, self.rw_sd_coef);
        set(&mut s.scan, self.scan.as_deref().map(str::parse::<Scan>).transpose()?);
        set(&mut s.k_update, self.k_update.as_deref().map(str::parse::<KUpdate>).transpose()?);
        Ok(())
    }
}

impl HyperArgs {
    fn apply(&self, m: &mut RunManifest) {
        let h = &mut m.hyper;
        set(&mut h.h_c, self.h_c);
        set(&mut h.h_beta, self.h_beta);
        set(&mut h.h_kappa, self.h_kappa);
        set(&mut h.a0, self.a0);
        set(&mut h.b0, self.b0);
        set(&mut h.sigma2_alpha, self.sigma2_alpha);
        set(&mut h.r2, self.r2);
        set(&mut h.prior_a, self.prior_a);
        set(&mut h.prior_b, self.prior_b);
    }
}

impl StrategyArgs {
    fn apply(&self, m: &mut RunManifest) -> Result<()> {
        let s = &mut m.strategy;
        set(&mut s.strategy, self.strategy.as_deref().map(str::parse::<Strategy>).transpose()?);
        set(&mut s.mppi_threshold, self.mppi_threshold);
        set(&mut s.ci_level, self.ci_level);
        set(&mut s.exhaustive, self.exhaustive);
        Ok(())
    }
}

impl ScenarioArgs {
    fn apply(&self, m: &mut RunManifest) {
        set(&mut m.scenario, self.scenario.clone());
        if self.scenario_config.is_some() {
            m.scenario_config = self.scenario_config.clone();
        }
    }
}

fn parse_methods(list: &str) -> Result<Vec<Strategy>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// Scenario from the manifest: a config file if given, else a preset
/// (`1`–`4` are shorthand for `scenario1`–`scenario4`). The manifest seed
/// seeds the simulation.
fn scenario_spec(m: &RunManifest) -> Result<ScenarioSpec> {
    let mut spec = match &m.scenario_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            ScenarioSpec::from_config(&text)?
        }
        None => {
            let name = if m.scenario.chars().all(|c| c.is_ascii_digit()) {
                format!("scenario{}", m.scenario)
            } else {
                m.scenario.clone()
            };
            ScenarioSpec::preset(&name)?
        }
    };
    spec.seed = m.sampler.seed;
    spec.validate()?;
    Ok(spec)
}

fn prepare_out(m: &RunManifest) -> Result<PathBuf> {
    let dir = m.out_dir()?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    tables::write_text(&dir.join("manifest.txt"), &m.render())?;
    Ok(dir)
}

fn load_data(m: &RunManifest, dir: &Path) -> Result<crate::model::Dataset> {
    let (raw, report) = ingest(&m.input_paths()?)?;
    let (data, log) = preprocess(&raw, &m.preprocess)?;
    tables::write_preprocess_log(&dir.join("preprocess.csv"), &log)?;
    for (file, subject) in &report.unmatched {
        eprintln!("note: {file}: subject `{subject}` not in counts table, ignored");
    }
    Ok(data)
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit {
            common,
            data,
            sampler,
            hyper,
            ci_level,
        } => {
            let mut m = common.manifest("fit")?;
            data.apply(&mut m);
            sampler.apply(&mut m)?;
            hyper.apply(&mut m);
            set(&mut m.strategy.ci_level, ci_level);
            m.validate()?;
            let dir = prepare_out(&m)?;
            let ds = load_data(&m, &dir)?;
            let hp = m.hyper.build(ds.taxa_count())?;
            let trace = run_chain(&ds, &hp, &m.sampler)?;
            tables::write_trace_file(&dir.join("trace.csv"), &trace)?;
            tables::write_text(&dir.join("acceptance.txt"), &trace.acceptance.to_string())?;
            tables::write_mppi(&dir.join("mppi.csv"), &trace, &ds)?;
            let level = m.strategy.ci_level;
            let profiles = subject_profiles(&ds);
            let mut effects = vec![direct_effect(&trace, level)?];
            for (p, x) in profiles.iter().enumerate() {
                let arg = (!x.is_empty()).then_some((p, x.as_slice()));
                effects.push(overall_indirect(&trace, arg, level)?);
                effects.extend(relative_indirect(&trace, arg, level)?);
            }
            tables::write_effect_list(&dir.join("effects.csv"), &effects, &ds.taxa)
        }
        Command::Mediate {
            common,
            data,
            sampler,
            hyper,
            strategy,
        } => {
            let mut m = common.manifest("mediate")?;
            data.apply(&mut m);
            sampler.apply(&mut m)?;
            hyper.apply(&mut m);
            strategy.apply(&mut m)?;
            m.validate()?;
            let dir = prepare_out(&m)?;
            let ds = load_data(&m, &dir)?;
            let hp = m.hyper.build(ds.taxa_count())?;
            let sel = mediate(&ds, &hp, &m.sampler, &m.strategy)?;
            tables::write_effects(&dir.join("effects.csv"), &sel, &ds.taxa)?;
            tables::write_selection(&dir.join("selection.csv"), &sel, &ds.taxa)?;
            tables::write_text(&dir.join("acceptance.txt"), &sel.trace.acceptance.to_string())
        }
        Command::Simulate { common, scenario } => {
            let mut m = common.manifest("simulate")?;
            scenario.apply(&mut m);
            m.validate()?;
            let spec = scenario_spec(&m)?;
            let dir = prepare_out(&m)?;
            let (ds, truth) = generate(&spec)?;
            tables::write_dataset(&dir, &ds)?;
            tables::write_truth(&dir.join("truth.csv"), &ds, &truth)?;
            tables::write_text(&dir.join("scenario.txt"), &io::kv::render(&spec.to_pairs()))
        }
        Command::Study {
            common,
            scenario,
            sampler,
            hyper,
            strategy,
            replicates,
            methods,
        } => {
            let mut m = common.manifest("study")?;
            scenario.apply(&mut m);
            sampler.apply(&mut m)?;
            hyper.apply(&mut m);
            strategy.apply(&mut m)?;
            set(&mut m.replicates, replicates);
            set(&mut m.methods, methods.as_deref().map(parse_methods).transpose()?);
            m.validate()?;
            let spec = scenario_spec(&m)?;
            let dir = prepare_out(&m)?;
            let hp = m.hyper.build(spec.taxa)?;
            let study = study_config(&m);
            let reports = run_study(&spec, &study, &hp, &m.sampler)?;
            tables::write_study_report(&dir.join("report.csv"), &reports)?;
            tables::write_replicates(&dir.join("replicates.csv"), &reports)?;
            tables::write_failures(&dir.join("failures.csv"), &reports)
        }
        Command::Sweep {
            common,
            scenario,
            sampler,
            hyper,
            strategy,
            methods,
        } => {
            let mut m = common.manifest("sweep")?;
            scenario.apply(&mut m);
            sampler.apply(&mut m)?;
            hyper.apply(&mut m);
            strategy.apply(&mut m)?;
            set(&mut m.methods, methods.as_deref().map(parse_methods).transpose()?);
            m.validate()?;
            let spec = scenario_spec(&m)?;
            let dir = prepare_out(&m)?;
            let hp = m.hyper.build(spec.taxa)?;
            let (ds, truth) = generate(&spec)?;
            let study = study_config(&m);
            let rows = sensitivity_sweep(&hp, &default_grid(), &ds, &truth, &m.sampler, &study)?;
            tables::write_sweep(&dir.join("sweep.csv"), &rows)
        }
    }
}

fn study_config(m: &RunManifest) -> StudyConfig {
    StudyConfig {
        replicates: m.replicates,
        methods: m.methods.clone(),
        mppi_threshold: m.strategy.mppi_threshold,
        ci_level: m.strategy.ci_level,
        exhaustive: m.strategy.exhaustive,
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit status: 0 success, 1 usage, 2 data, 3 numerical.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}
