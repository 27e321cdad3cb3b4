//! Acceptance suite: one line per criterion, tolerances pinned below.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use compmed::composition::{Composition, PartitionScheme};
use compmed::estimands::{expected_log_psi, overall_indirect, relative_indirect};
use compmed::io::kv;
use compmed::matrix::Matrix;
use compmed::mcmc::{run_chain_with, FitOptions, IndicatorFamily, PosteriorTrace, SamplerConfig};
use compmed::model::{BetaPrior, Dataset, DmParams, Hyperparameters};
use compmed::sim::{generate, run_study, ScenarioSpec, ScoreReport, StudyConfig};
use compmed::strategy::{select_cmbvs1, Strategy, StrategyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn study_cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        iterations: 5000,
        burn_in: 250,
        thin: 10,
        seed,
        ..SamplerConfig::default()
    }
}

fn conjugacy() -> Outcome {
    let start = Instant::now();
    let counts = Matrix::from_vec(1, 3, vec![5, 3, 2]);
    let ds = Dataset::without_covariates(counts, vec![0.0], vec![false]).map_err(|e| e.to_string())?;
    let mut dm = DmParams::empty(3, 0);
    dm.alpha = vec![2f64.ln(), 0.0, 0.0];
    let cfg = SamplerConfig {
        iterations: 10_000,
        burn_in: 0,
        thin: 1,
        seed: 11,
        ..SamplerConfig::default()
    };
    let opts = FitOptions {
        fixed_dm: Some(dm),
        exclude_balances: true,
        ..FitOptions::default()
    };
    let trace = run_chain_with(&ds, &Hyperparameters::defaults(3), &cfg, &opts).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let err = trace
        .psi_mean
        .row(0)
        .iter()
        .zip([7.0 / 14.0, 4.0 / 14.0, 3.0 / 14.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        err < 0.01 && elapsed < Duration::from_secs(5),
        format!("max |mean - Dirichlet mean| = {err:.4} (tol 0.01), {:.2} s (limit 5 s)", elapsed.as_secs_f64()),
    )
}

fn digamma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (g1, g2) = (Gamma::new(2.0, 1.0).unwrap(), Gamma::new(1.0, 1.0).unwrap());
    let draws = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        let (a, b): (f64, f64) = (g1.sample(&mut rng), g2.sample(&mut rng));
        sum += (a / (a + b)).ln();
    }
    let mc = sum / draws as f64;
    let e = expected_log_psi(&[2.0f64, 1.0]).map_err(|e| e.to_string())?;
    let exact = expected_log_psi(&[1.0f64, 1.0, 1.0]).map_err(|e| e.to_string())?;
    let err = (e[0] - mc).abs();
    check(
        err < 0.005 && exact.iter().all(|v| *v == -1.5),
        format!("|E - MC| = {err:.5} (tol 0.005); gamma=(1,1,1) gives {:?}", exact),
    )
}

fn decomposition_gap(trace: &PosteriorTrace) -> Result<f64, String> {
    let overall = overall_indirect(trace, None, 0.95).map_err(|e| e.to_string())?;
    let rel = relative_indirect(trace, None, 0.95).map_err(|e| e.to_string())?;
    Ok(overall
        .samples
        .iter()
        .enumerate()
        .map(|(i, t)| (rel.iter().map(|r| r.samples[i]).sum::<f64>() - t).abs())
        .fold(0.0, f64::max))
}

fn decomposition() -> Outcome {
    let mut worst: f64 = 0.0;
    let traces = 100;
    for r in 0..traces {
        let taxa = 3 + r % 6;
        let spec = ScenarioSpec {
            seed: 1000 + r as u64,
            ..ScenarioSpec::with_shape(1 + (r % 4) as u8, 12, taxa)
        };
        let (ds, _) = generate(&spec).map_err(|e| e.to_string())?;
        let scheme = PartitionScheme::with_first(taxa, r % taxa).map_err(|e| e.to_string())?;
        let cfg = SamplerConfig {
            iterations: 60,
            burn_in: 10,
            thin: 1,
            seed: r as u64,
            ..SamplerConfig::default()
        };
        let trace = run_chain_with(&ds, &Hyperparameters::defaults(taxa), &cfg, &FitOptions::with_scheme(scheme))
            .map_err(|e| e.to_string())?;
        worst = worst.max(decomposition_gap(&trace)?);
    }
    let spec = ScenarioSpec {
        seed: 77,
        ..ScenarioSpec::application_like(1)
    };
    let (ds, _) = generate(&spec).map_err(|e| e.to_string())?;
    let trace = run_chain_with(&ds, &Hyperparameters::defaults(36), &study_cfg(77), &FitOptions::default())
        .map_err(|e| e.to_string())?;
    let app = decomposition_gap(&trace)?;
    check(
        worst < 1e-10 && app < 1e-10,
        format!("max |sum - overall| = {worst:.2e} over {traces} traces, {app:.2e} on application-shaped fit (tol 1e-10)"),
    )
}

fn ilr_structure() -> Outcome {
    let mut ortho: f64 = 0.0;
    for parts in [2usize, 3, 10, 50] {
        let a: Vec<f64> = PartitionScheme::sequential(parts).unwrap().ilr_matrix();
        for r in 0..parts - 1 {
            let row = &a[r * parts..(r + 1) * parts];
            ortho = ortho.max(row.iter().sum::<f64>().abs());
            for s in 0..parts - 1 {
                let dot: f64 = row.iter().zip(&a[s * parts..(s + 1) * parts]).map(|(x, y)| x * y).sum();
                ortho = ortho.max((dot - if r == s { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lin: f64 = 0.0;
    for _ in 0..1000 {
        let parts = rng.random_range(2..60);
        let raw: Vec<f64> = (0..parts).map(|_| rng.random_range(1e-8..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let psi = Composition::new(raw.iter().map(|v| v / total).collect()).map_err(|e| e.to_string())?;
        let scheme = PartitionScheme::sequential(parts).unwrap();
        let b = scheme.balances_all(&psi).map_err(|e| e.to_string())?;
        let a: Vec<f64> = scheme.ilr_matrix();
        for r in 0..parts - 1 {
            let v: f64 = (0..parts).map(|j| a[r * parts + j] * psi.values()[j].ln()).sum();
            lin = lin.max((v - b.values()[r]).abs());
        }
    }
    check(
        ortho < 1e-12 && lin < 1e-10,
        format!("orthonormality/zero-sum error {ortho:.2e} (tol 1e-12); |B - A log psi| {lin:.2e} (tol 1e-10)"),
    )
}

fn prior_recovery() -> Outcome {
    let n = 6;
    let counts = Matrix::from_vec(n, 4, (0..4 * n as u64).map(|v| 1 + v % 7).collect());
    let mut ds = Dataset::without_covariates(
        counts,
        (0..n).map(|i| i as f64 * 0.5).collect(),
        (0..n).map(|i| i % 2 == 0).collect(),
    )
    .map_err(|e| e.to_string())?;
    ds.covariates = Matrix::from_vec(n, 2, (0..2 * n).map(|v| (v as f64).cos()).collect());
    ds.covariate_names = vec!["x1".into(), "x2".into()];
    ds.dm_covariates = Matrix::from_vec(n, 2, (0..2 * n).map(|v| (v % 3) as f64).collect());
    ds.dm_covariate_names = vec!["w1".into(), "w2".into()];
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for prior in [BetaPrior::UNIFORM, BetaPrior { a: 0.2, b: 1.8 }] {
        let cfg = SamplerConfig {
            iterations: 10_000,
            burn_in: 0,
            thin: 1,
            seed: 6,
            ..SamplerConfig::default()
        };
        let opts = FitOptions {
            likelihood: false,
            ..FitOptions::default()
        };
        let hp = Hyperparameters::defaults(4).with_inclusion_prior(prior);
        let trace = run_chain_with(&ds, &hp, &cfg, &opts).map_err(|e| e.to_string())?;
        let target = prior.inclusion_probability();
        for fam in [
            IndicatorFamily::Balance,
            IndicatorFamily::Covariate,
            IndicatorFamily::Treatment,
            IndicatorFamily::DmCovariate,
        ] {
            let m = trace.mppi(fam).map_err(|e| e.to_string())?;
            let f = m.iter().sum::<f64>() / m.len() as f64;
            worst = worst.max((f - target).abs());
            parts.push(format!("{f:.3}"));
        }
    }
    check(
        worst < 0.02,
        format!("max |freq - a/(a+b)| = {worst:.4} (tol 0.02); frequencies {}", parts.join(" ")),
    )
}

fn cmbvs1_study(spec: &ScenarioSpec, replicates: usize, seed: u64) -> Result<ScoreReport, String> {
    let study = StudyConfig::new(replicates, vec![Strategy::CMbvs1]);
    let reports = run_study(spec, &study, &Hyperparameters::defaults(spec.taxa), &study_cfg(seed))
        .map_err(|e| e.to_string())?;
    let r = reports.into_iter().next().ok_or("no report")?;
    if !r.failures.is_empty() {
        return Err(format!("failed replicates: {:?}", r.failures));
    }
    Ok(r)
}

fn covered(rows: impl Iterator<Item = (f64, f64, f64)>) -> usize {
    rows.filter(|(lo, hi, t)| lo <= t && t <= hi).count()
}

fn scenario1(report: &Result<ScoreReport, String>) -> Outcome {
    let r = report.as_ref().map_err(Clone::clone)?;
    check(
        r.sens >= 0.85 && r.spec >= 0.98 && r.mcc >= 0.85,
        format!("SENS {:.3} (>= 0.85), SPEC {:.3} (>= 0.98), MCC {:.3} (>= 0.85)", r.sens, r.spec, r.mcc),
    )
}

fn scenario4() -> Outcome {
    let spec = ScenarioSpec {
        seed: 404,
        ..ScenarioSpec::scenario(4)
    };
    let r = cmbvs1_study(&spec, 10, 405)?;
    check(
        r.spec >= 0.98 && (0.3..=0.9).contains(&r.sens),
        format!("SENS {:.3} (in [0.3, 0.9]), SPEC {:.3} (>= 0.98), MCC {:.3}", r.sens, r.spec, r.mcc),
    )
}

fn coverage(report: &Result<ScoreReport, String>) -> Outcome {
    let r = report.as_ref().map_err(Clone::clone)?;
    let direct = covered(r.rows.iter().map(|x| (x.direct.lower, x.direct.upper, x.true_direct)));
    let overall = covered(r.rows.iter().map(|x| (x.overall.lower, x.overall.upper, x.true_overall)));
    check(
        direct >= 8 && overall >= 9 && r.rows.len() == 10,
        format!("direct covered {direct}/{} (>= 8), overall indirect {overall}/{} (>= 9)", r.rows.len(), r.rows.len()),
    )
}

fn pad(v: &mut Vec<f64>, len: usize) {
    v.resize(len, 0.0);
}

fn runtime() -> Outcome {
    let mut spec = ScenarioSpec {
        seed: 9,
        ..ScenarioSpec::application_like(1)
    };
    spec.taxa = 37;
    for v in [&mut spec.phi, &mut spec.beta_log, &mut spec.nu1, &mut spec.nu2] {
        pad(v, 37);
    }
    let (ds, _) = generate(&spec).map_err(|e| e.to_string())?;
    let hp = Hyperparameters::defaults(37);
    let cfg = SamplerConfig {
        iterations: 15_000,
        burn_in: 750,
        thin: 10,
        seed: 9,
        ..SamplerConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    pool.install(|| {
        let start = Instant::now();
        run_chain_with(&ds, &hp, &cfg, &FitOptions::default()).map_err(|e| e.to_string())?;
        let single = start.elapsed();
        let scfg = StrategyConfig {
            exhaustive: true,
            ..StrategyConfig::new(Strategy::CMbvs1)
        };
        let start = Instant::now();
        let sel = select_cmbvs1(&ds, &hp, &cfg, &scfg).map_err(|e| e.to_string())?;
        let sweep = start.elapsed();
        check(
            single < Duration::from_secs(60) && sweep < Duration::from_secs(30 * 60),
            format!(
                "single fit {:.1} s (limit 60 s); exhaustive CMbvs1 with {} fits {:.1} s (limit 1800 s), one thread",
                single.as_secs_f64(),
                sel.fits,
                sweep.as_secs_f64()
            ),
        )
    })
}

fn compmed(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_compmed"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        out.insert(
            e.file_name().to_string_lossy().into_owned(),
            fs::read(e.path()).map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let r = root.path();
    let p = |name: &str| r.join(name).to_string_lossy().into_owned();
    let spec = ScenarioSpec::with_shape(3, 40, 8);
    fs::write(p("scenario.txt"), kv::render(&spec.to_pairs())).map_err(|e| e.to_string())?;
    let scen = p("scenario.txt");
    let data = p("data");
    compmed(&["simulate", "--scenario-config", &scen, "--seed", "2", "--out", &data])?;
    let d = |f: &str| format!("{data}/{f}");
    let (counts, outcome, treatment) = (d("counts.csv"), d("outcome.csv"), d("treatment.csv"));
    let input = ["--counts", &counts, "--outcome", &outcome, "--treatment", &treatment];
    let fast = ["--iterations", "400", "--burn-in", "50", "--thin", "2", "--seed", "3"];
    let with = |head: &[&'static str], extra: &[&str]| -> Vec<String> {
        head.iter().chain(extra).chain(&fast).map(|s| s.to_string()).collect()
    };
    let runs: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--scenario-config".into(), scen.clone(), "--seed".into(), "2".into()],
        with(&["fit"], &input),
        with(&["mediate", "--strategy", "cmbvs1"], &input),
        with(&["mediate", "--strategy", "cmbvs2"], &input),
        with(&["mediate", "--strategy", "cmbvs3"], &input),
        with(&["study", "--replicates", "2", "--scenario-config"], &[&scen]),
        with(&["sweep", "--methods", "cmbvs2", "--scenario-config"], &[&scen]),
    ];
    let mut names = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let out = p(&format!("run{i}"));
        let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
        full.extend(["--out", &out]);
        compmed(&full)?;
        let first = snapshot(Path::new(&out))?;
        fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        compmed(&full)?;
        if first != snapshot(Path::new(&out))? {
            return Err(format!("{} outputs differ between runs", args[0]));
        }
        names.push(format!("{}({} files)", args[0], first.len()));
    }
    Ok(format!("byte-identical reruns: {}", names.join(", ")))
}

fn application_like() -> Outcome {
    let spec = ScenarioSpec {
        seed: 36,
        ..ScenarioSpec::application_like(1)
    };
    let r = cmbvs1_study(&spec, 10, 37)?;
    check(
        r.mcc >= 0.4,
        format!("MCC {:.3} (>= 0.4), SENS {:.3}, SPEC {:.3}", r.mcc, r.sens, r.spec),
    )
}

fn main() {
    let s1 = {
        let spec = ScenarioSpec {
            seed: 101,
            ..ScenarioSpec::scenario(1)
        };
        cmbvs1_study(&spec, 10, 102)
    };
    let criteria: Vec<Criterion> = vec![
        ("1 conjugacy oracle", Box::new(conjugacy)),
        ("2 digamma oracle", Box::new(digamma)),
        ("3 decomposition identity", Box::new(decomposition)),
        ("4 ILR structure", Box::new(ilr_structure)),
        ("5 prior recovery", Box::new(prior_recovery)),
        ("6 scenario-1 selection", Box::new(|| scenario1(&s1))),
        ("7 scenario-4 robustness", Box::new(scenario4)),
        ("8 estimation coverage", Box::new(|| coverage(&s1))),
        ("9 runtime anchor", Box::new(runtime)),
        ("10 determinism", Box::new(determinism)),
        ("note application-like CMbvs1", Box::new(application_like)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
