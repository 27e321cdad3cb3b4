use rayon::prelude::*;

use super::metrics::{score_estimation, score_selection, EstimationScore, SelectionScore};
use super::scenario::{generate, GroundTruth, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimands::EffectSummary;
use crate::mcmc::rng::derive_seed;
use crate::mcmc::{run_chain_with, FitOptions, SamplerConfig};
use crate::model::{BetaPrior, Dataset, Hyperparameters};
use crate::strategy::{select_cmbvs1_from, select_cmbvs2, select_cmbvs3_from, Selection, Strategy, StrategyConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub replicates: usize,
    pub methods: Vec<Strategy>,
    pub mppi_threshold: f64,
    pub ci_level: f64,
    pub exhaustive: bool,
}

impl StudyConfig {
    pub fn new(replicates: usize, methods: Vec<Strategy>) -> Self {
        Self {
            replicates,
            methods,
            mppi_threshold: 0.5,
            ci_level: 0.95,
            exhaustive: false,
        }
    }

    fn strategy(&self, strategy: Strategy) -> StrategyConfig {
        StrategyConfig {
            strategy,
            mppi_threshold: self.mppi_threshold,
            ci_level: self.ci_level,
            exhaustive: self.exhaustive,
        }
    }
}

/// Result of one method on one replicate.
#[derive(Clone, Debug)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: Strategy,
    pub score: SelectionScore,
    pub selected: Vec<usize>,
    pub direct: EffectSummary<f64>,
    pub overall: EffectSummary<f64>,
    pub true_direct: f64,
    pub true_overall: f64,
    pub fits: usize,
}

/// Averages over replicates for one method.
#[derive(Clone, Debug)]
pub struct ScoreReport {
    pub method: Strategy,
    pub sens: f64,
    pub spec: f64,
    pub mcc: f64,
    pub direct: EstimationScore<f64>,
    pub overall: EstimationScore<f64>,
    pub rows: Vec<ReplicateRow>,
    /// `(replicate, message)` for replicates that failed.
    pub failures: Vec<(usize, String)>,
    pub library_min: u64,
    pub library_max: u64,
}

fn strip_samples(mut e: EffectSummary<f64>) -> EffectSummary<f64> {
    e.samples = Vec::new();
    e
}

/// Runs every requested method on one dataset. The identity-ordered fit
/// is shared: it is the CMbvs2 fit, the first stage of CMbvs3 and the
/// initial fit of CMbvs1.
pub fn run_replicate(
    data: &Dataset,
    truth: &GroundTruth,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
    methods: &[Strategy],
    template: &StrategyConfig,
    replicate: usize,
) -> Result<Vec<ReplicateRow>> {
    let initial = run_chain_with(data, hp, cfg, &FitOptions::default())?;
    methods
        .iter()
        .map(|&m| {
            let scfg = StrategyConfig {
                strategy: m,
                ..template.clone()
            };
            let sel: Selection = match m {
                Strategy::CMbvs1 => select_cmbvs1_from(initial.clone(), data, hp, cfg, &scfg)?,
                Strategy::CMbvs2 => select_cmbvs2(initial.clone(), data, &scfg)?,
                Strategy::CMbvs3 => select_cmbvs3_from(&initial, data, hp, cfg, &scfg)?,
            };
            Ok(ReplicateRow {
                replicate,
                method: m,
                score: score_selection(&sel.selected, &truth.active)?,
                selected: sel.selected_taxa(),
                direct: strip_samples(sel.direct.clone()),
                overall: strip_samples(sel.overall[0].clone()),
                true_direct: truth.direct,
                true_overall: truth.overall_indirect,
                fits: sel.fits,
            })
        })
        .collect()
}

fn aggregate(method: Strategy, rows: Vec<ReplicateRow>, failures: Vec<(usize, String)>, spec: &ScenarioSpec) -> Result<ScoreReport> {
    let n = rows.len() as f64;
    let avg = |f: fn(&SelectionScore) -> f64| rows.iter().map(|r| f(&r.score)).sum::<f64>() / n;
    let directs: Vec<_> = rows.iter().map(|r| r.direct.clone()).collect();
    let overalls: Vec<_> = rows.iter().map(|r| r.overall.clone()).collect();
    let td: Vec<f64> = rows.iter().map(|r| r.true_direct).collect();
    let to: Vec<f64> = rows.iter().map(|r| r.true_overall).collect();
    Ok(ScoreReport {
        method,
        sens: avg(|s| s.sens),
        spec: avg(|s| s.spec),
        mcc: avg(|s| s.mcc),
        direct: score_estimation(&directs, &td)?,
        overall: score_estimation(&overalls, &to)?,
        rows,
        failures,
        library_min: spec.library_min,
        library_max: spec.library_max,
    })
}

/// Replicated study: replicate `r` simulates with seed
/// `derive_seed(spec.seed, 2r)` and samples with `derive_seed(cfg.seed, 2r + 1)`.
/// Failed replicates are recorded and skipped.
pub fn run_study(
    spec: &ScenarioSpec,
    study: &StudyConfig,
    hp: &Hyperparameters,
    cfg: &SamplerConfig,
) -> Result<Vec<ScoreReport>> {
    if study.replicates == 0 {
        return Err(Error::Usage("a study needs at least one replicate".into()));
    }
    if study.methods.is_empty() {
        return Err(Error::Usage("a study needs at least one method".into()));
    }
    spec.validate()?;
    hp.validate(spec.taxa)?;
    cfg.validate()?;
    let template = study.strategy(study.methods[0]);
    template.validate()?;

    let outcomes: Vec<(usize, Result<Vec<ReplicateRow>>)> = (0..study.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_spec = ScenarioSpec {
                seed: derive_seed(spec.seed, 2 * r as u64),
                ..spec.clone()
            };
            let rep_cfg = SamplerConfig {
                seed: derive_seed(cfg.seed, 2 * r as u64 + 1),
                ..cfg.clone()
            };
            let res = generate(&rep_spec)
                .and_then(|(data, truth)| run_replicate(&data, &truth, hp, &rep_cfg, &study.methods, &template, r));
            (r, res)
        })
        .collect();

    let mut rows: Vec<ReplicateRow> = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in outcomes {
        match res {
            Ok(v) => rows.extend(v),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(Error::Invariant(format!(
            "all {} replicates failed; first: {}",
            study.replicates, failures[0].1
        )));
    }
    study
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<ReplicateRow> = rows.iter().filter(|r| r.method == m).cloned().collect();
            aggregate(m, mine, failures.clone(), spec)
        })
        .collect()
}

/// One cell of a hyperparameter sensitivity grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HyperChange {
    Baseline,
    /// Beta(a, b) on every inclusion indicator.
    InclusionPrior(BetaPrior),
    /// Count-level slab variance `r²` for every taxon.
    SlabVariance(f64),
    /// `h_c = h_β = h_κ`.
    Scale(f64),
    /// `a0 = b0`.
    ErrorPrior(f64),
}

impl HyperChange {
    pub fn label(&self) -> String {
        match self {
            HyperChange::Baseline => "baseline".into(),
            HyperChange::InclusionPrior(p) => format!("prior_inclusion={}", p.inclusion_probability()),
            HyperChange::SlabVariance(v) => format!("r2={v}"),
            HyperChange::Scale(v) => format!("h={v}"),
            HyperChange::ErrorPrior(v) => format!("a0=b0={v}"),
        }
    }

    pub fn apply(&self, base: &Hyperparameters) -> Hyperparameters {
        let mut hp = base.clone();
        match *self {
            HyperChange::Baseline => {}
            HyperChange::InclusionPrior(p) => hp = hp.with_inclusion_prior(p),
            HyperChange::SlabVariance(v) => hp.r2.iter_mut().for_each(|r| *r = v),
            HyperChange::Scale(v) => {
                hp.h_c = v;
                hp.h_beta = v;
                hp.h_kappa = v;
            }
            HyperChange::ErrorPrior(v) => {
                hp.a0 = v;
                hp.b0 = v;
            }
        }
        hp
    }
}

/// Baseline plus one-at-a-time changes: inclusion 1% and 10%, `r²` 5 and
/// 20, `h` 5 and 20, `a0 = b0` 0.1 and 10.
pub fn default_grid() -> Vec<HyperChange> {
    vec![
        HyperChange::Baseline,
        HyperChange::InclusionPrior(BetaPrior { a: 0.02, b: 1.98 }),
        HyperChange::InclusionPrior(BetaPrior { a: 0.2, b: 1.8 }),
        HyperChange::SlabVariance(5.0),
        HyperChange::SlabVariance(20.0),
        HyperChange::Scale(5.0),
        HyperChange::Scale(20.0),
        HyperChange::ErrorPrior(0.1),
        HyperChange::ErrorPrior(10.0),
    ]
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub cell: String,
    pub method: Strategy,
    pub score: SelectionScore,
    pub selected: Vec<usize>,
}

/// Refits one dataset under every grid cell and scores each method.
pub fn sensitivity_sweep(
    base: &Hyperparameters,
    grid: &[HyperChange],
    data: &Dataset,
    truth: &GroundTruth,
    cfg: &SamplerConfig,
    study: &StudyConfig,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() || study.methods.is_empty() {
        return Err(Error::Usage("sweep needs at least one cell and one method".into()));
    }
    let template = study.strategy(study.methods[0]);
    let cells: Vec<Result<Vec<SweepRow>>> = grid
        .par_iter()
        .map(|cell| {
            let hp = cell.apply(base);
            hp.validate(data.taxa_count())?;
            let rows = run_replicate(data, truth, &hp, cfg, &study.methods, &template, 0)?;
            Ok(rows
                .into_iter()
                .map(|r| SweepRow {
                    cell: cell.label(),
                    method: r.method,
                    score: r.score,
                    selected: r.selected,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for c in cells {
        out.extend(c?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ScenarioSpec {
        ScenarioSpec {
            seed: 3,
            ..ScenarioSpec::with_shape(1, 30, 6)
        }
    }

    fn quick_cfg() -> SamplerConfig {
        SamplerConfig {
            iterations: 400,
            burn_in: 100,
            thin: 5,
            seed: 2,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn zero_replicates_is_usage_error() {
        let study = StudyConfig::new(0, vec![Strategy::CMbvs2]);
        let err = run_study(&tiny_spec(), &study, &Hyperparameters::defaults(6), &quick_cfg()).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn study_reports_every_method_and_is_deterministic() {
        let study = StudyConfig::new(2, vec![Strategy::CMbvs1, Strategy::CMbvs2, Strategy::CMbvs3]);
        let hp = Hyperparameters::defaults(6);
        let a = run_study(&tiny_spec(), &study, &hp, &quick_cfg()).unwrap();
        let b = run_study(&tiny_spec(), &study, &hp, &quick_cfg()).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rows.len(), 2);
            assert!(x.failures.is_empty());
            assert_eq!((x.sens, x.spec, x.mcc), (y.sens, y.spec, y.mcc));
            assert_eq!(x.direct, y.direct);
            assert!((0.0..=1.0).contains(&x.sens) && (0.0..=1.0).contains(&x.direct.coverage));
        }
    }

    #[test]
    fn grid_cells_change_the_right_fields() {
        let base = Hyperparameters::defaults(4);
        assert_eq!(HyperChange::Baseline.apply(&base), base);
        let g = default_grid();
        assert_eq!(g.len(), 9);
        let ten = HyperChange::InclusionPrior(BetaPrior { a: 0.2, b: 1.8 }).apply(&base);
        assert!((ten.treatment_prior.inclusion_probability() - 0.1).abs() < 1e-12);
        assert_eq!(HyperChange::SlabVariance(5.0).apply(&base).r2, vec![5.0; 4]);
        let h = HyperChange::Scale(20.0).apply(&base);
        assert_eq!((h.h_c, h.h_beta, h.h_kappa), (20.0, 20.0, 20.0));
    }

    #[test]
    fn baseline_cell_equals_standard_run() {
        let (data, truth) = generate(&tiny_spec()).unwrap();
        let hp = Hyperparameters::defaults(6);
        let study = StudyConfig::new(1, vec![Strategy::CMbvs2]);
        let sweep = sensitivity_sweep(&hp, &[HyperChange::Baseline], &data, &truth, &quick_cfg(), &study).unwrap();
        let direct = run_replicate(
            &data,
            &truth,
            &hp,
            &quick_cfg(),
            &[Strategy::CMbvs2],
            &StrategyConfig::new(Strategy::CMbvs2),
            0,
        )
        .unwrap();
        assert_eq!(sweep[0].score, direct[0].score);
        assert_eq!(sweep[0].selected, direct[0].selected);
    }
}
