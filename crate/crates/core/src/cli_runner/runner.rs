//! Experiment orchestration and artifact emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{canonical_toml, Built, BuiltModel, ExperimentConfig, Family, Format};
use super::output::fmt_f64;
use crate::coupling_harnack::{
    default_bank, estimate_harnack, synchronous_couple, synchronous_couple_degenerate, CouplingRecord,
};
use crate::ergodics::{
    epsilon_threshold, estimate_concentration, fit_contraction_rate, sample_invariant, w_cauchy_gap, State,
};
use crate::error::{Error, Result};
use crate::fernique::{compute_coeffs, empirical_sup_tail, TailBoundKind};
use crate::fspde_sim::{simulate_degenerate_with, simulate_nondegenerate_with, SimOptions};
use crate::numerics::stats::{linear_fit, mean_se};
use crate::spectral_model::{check_degenerate, check_nondegenerate, ConditionReport};

/// What a run emitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical TOML serialization of the config.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub families: Vec<String>,
    /// Emitted files, relative to the output directory.
    pub files: Vec<String>,
    /// False if any condition check failed.
    pub conditions_passed: bool,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canon = canonical_toml(cfg)?;
    let digest = Sha256::digest(canon.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Artifacts of one run, keyed by file name.
#[derive(Debug, Default)]
struct Artifacts {
    files: BTreeMap<String, String>,
    conditions_passed: bool,
}

impl Artifacts {
    fn add(&mut self, cfg: &ExperimentConfig, name: &str, body: String) {
        let fmt = if name.ends_with(".csv") { Format::Csv } else { Format::Txt };
        if cfg.output.formats.contains(&fmt) {
            self.files.insert(name.to_string(), body);
        }
    }
}

/// Runs `families` (or the config's list when empty) and writes the
/// artifacts plus `manifest.toml` under `out_dir` (or `output.dir`).
pub fn run_experiment(cfg: &ExperimentConfig, families: &[Family], out_dir: Option<&Path>) -> Result<RunManifest> {
    let fams: Vec<Family> = if families.is_empty() {
        cfg.checks.experiments.clone()
    } else {
        families.to_vec()
    };
    let run = || -> Result<Artifacts> {
        let built = cfg.build()?;
        let mut art = Artifacts {
            conditions_passed: true,
            ..Default::default()
        };
        for f in &fams {
            run_family(cfg, &built, *f, &mut art).map_err(|e| e.context(format!("experiment `{}`", f.as_str())))?;
        }
        Ok(art)
    };
    let art = match cfg.run.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let dir: PathBuf = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)?;
    for (name, body) in &art.files {
        std::fs::write(dir.join(name), body)?;
    }
    let manifest = RunManifest {
        config_hash: config_hash(cfg)?,
        seed: cfg.run.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        families: fams.iter().map(|f| f.as_str().to_string()).collect(),
        files: art.files.keys().cloned().collect(),
        conditions_passed: art.conditions_passed,
    };
    std::fs::write(dir.join("manifest.toml"), manifest.to_toml())?;
    Ok(manifest)
}

fn run_family(cfg: &ExperimentConfig, built: &Built, fam: Family, art: &mut Artifacts) -> Result<()> {
    match fam {
        Family::Check => check(cfg, built, art),
        Family::Simulate => simulate(cfg, built, art),
        Family::Couple => couple(cfg, built, art),
        Family::Harnack => harnack(cfg, built, art),
        Family::Fernique => fernique(cfg, built, art),
        Family::Contract => contract(cfg, built, art),
        Family::Concentrate => concentrate(cfg, built, art),
        Family::Invariant => invariant(cfg, built, art),
    }
}

fn condition_report(cfg: &ExperimentConfig, built: &Built) -> Result<ConditionReport> {
    match &built.model {
        BuiltModel::Nondegenerate(m) => check_nondegenerate(m),
        BuiltModel::Degenerate(m) => check_degenerate(m, &cfg.checks.b4_times, &cfg.checks.tolerances),
    }
}

fn check(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let report = condition_report(cfg, built)?;
    art.conditions_passed &= report.all_passed();
    art.add(cfg, "check_report.txt", report.to_report_lines());
    art.add(cfg, "check.txt", report.to_key_values());
    let mut csv = String::from("name,passed,value\n");
    for e in report.entries() {
        let _ = writeln!(csv, "{},{},{}", e.name, e.passed, fmt_f64(e.value));
    }
    art.add(cfg, "check.csv", csv);
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let seed = cfg.run.seed;
    let one = |p: u64, modes: bool| {
        let opts = SimOptions {
            path_index: p,
            record_modes: modes,
        };
        match (&built.model, &built.initial) {
            (BuiltModel::Nondegenerate(m), State::Nondegenerate(x)) => {
                simulate_nondegenerate_with(m, x, cfg.run.t_end, seed, opts)
            }
            (BuiltModel::Degenerate(m), State::Degenerate(x, y)) => {
                simulate_degenerate_with(m, (x, y), cfg.run.t_end, seed, opts)
            }
            _ => unreachable!("built state matches the model"),
        }
    };
    let first = one(0, true)?;
    art.add(cfg, "simulate.csv", first.to_csv());
    use rayon::prelude::*;
    let terminal: Vec<f64> = (0..cfg.run.paths as u64)
        .into_par_iter()
        .map(|p| one(p, false).map(|r| *r.supnorms.last().unwrap_or(&0.0)))
        .collect::<Result<_>>()?;
    let (m, se) = mean_se(&terminal);
    let mut s = String::new();
    let _ = writeln!(s, "paths={}", cfg.run.paths);
    let _ = writeln!(s, "t_end={}", fmt_f64(cfg.run.t_end));
    let _ = writeln!(s, "dt={}", fmt_f64(built.grid.dt()));
    let _ = writeln!(s, "terminal_supnorm.mean={}", fmt_f64(m));
    let _ = writeln!(s, "terminal_supnorm.se={}", fmt_f64(se));
    art.add(cfg, "simulate.txt", s);
    Ok(())
}

fn coupling_records(cfg: &ExperimentConfig, built: &Built) -> Result<Vec<CouplingRecord>> {
    use rayon::prelude::*;
    let seed = cfg.run.seed;
    (0..cfg.run.paths as u64)
        .into_par_iter()
        .map(|p| match (&built.model, &built.initial, &built.initial_bar) {
            (BuiltModel::Nondegenerate(m), State::Nondegenerate(a), State::Nondegenerate(b)) => {
                synchronous_couple(m, a, b, cfg.run.t_end, seed, p)
            }
            (BuiltModel::Degenerate(m), State::Degenerate(x1, y1), State::Degenerate(x2, y2)) => {
                synchronous_couple_degenerate(m, (x1, y1), (x2, y2), cfg.run.t_end, seed, p)
            }
            _ => unreachable!("built state matches the model"),
        })
        .collect()
}

fn couple(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let recs = coupling_records(cfg, built)?;
    art.add(cfg, "couple.csv", recs[0].to_csv());
    let rate = built.model.as_ref().rate()?;
    let r0 = built.grid.r0();
    let tol = 1.0 + 10.0 * built.grid.dt();
    let mut s = String::new();
    let _ = writeln!(s, "paths={}", recs.len());
    let _ = writeln!(s, "rate={}", fmt_f64(rate.rate));
    let _ = writeln!(s, "rate_positive={}", rate.positive);
    let ratios: Vec<f64> = recs.iter().filter_map(|r| r.max_envelope_ratio(r0)).collect();
    if !ratios.is_empty() {
        let worst = ratios.iter().cloned().fold(0.0, f64::max);
        let violations = ratios.iter().filter(|v| **v > tol).count();
        let _ = writeln!(s, "max_envelope_ratio={}", fmt_f64(worst));
        let _ = writeln!(s, "envelope_violations={violations}");
    }
    if let Some(a) = recs[0].alpha {
        let _ = writeln!(s, "alpha={}", fmt_f64(a));
    }
    let finals: Vec<f64> = recs.iter().map(|r| *r.combined_gap().last().unwrap_or(&0.0)).collect();
    let (m, se) = mean_se(&finals);
    let _ = writeln!(s, "final_gap.mean={}", fmt_f64(m));
    let _ = writeln!(s, "final_gap.se={}", fmt_f64(se));
    art.add(cfg, "couple.txt", s);
    Ok(())
}

fn harnack(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let (BuiltModel::Degenerate(m), State::Degenerate(x, y), State::Degenerate(xb, yb)) =
        (&built.model, &built.initial, &built.initial_bar)
    else {
        return Err(Error::invalid(
            "the change-of-measure coupling is built for the degenerate model only",
        ));
    };
    let t0 = cfg.checks.harnack.t0.unwrap_or(built.grid.r0() + 1.0);
    let bank = cfg.checks.harnack.functionals.clone().unwrap_or_else(default_bank);
    let rep = estimate_harnack(m, (x, y), (xb, yb), t0, &bank, cfg.run.paths, cfg.run.seed)?;
    art.add(cfg, "harnack.txt", rep.to_key_values());
    art.add(cfg, "harnack.csv", rep.to_csv());
    Ok(())
}

fn fernique(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let fc = &cfg.checks.fernique;
    let spec = built.model.noise_spectrum();
    let r0 = built.grid.r0();
    let coeffs = compute_coeffs(spec, built.model.delta_reg(), r0, fc.t0)?;
    let lam = fc.lambda_frac * coeffs.lambda_tilde;
    let mut s = coeffs.to_key_values();
    let _ = writeln!(s, "lambda={}", fmt_f64(lam));
    if coeffs.series_converges && lam.is_finite() {
        let steps = fc.window_steps.unwrap_or(cfg.run.m);
        let rep = empirical_sup_tail(
            spec,
            fc.t0,
            r0,
            cfg.run.paths,
            steps,
            &fc.r_grid,
            cfg.run.seed,
            TailBoundKind::PerMode { coeffs: &coeffs, lam },
        )?;
        let _ = writeln!(s, "samples={}", rep.samples);
        let _ = writeln!(s, "all_dominated={}", rep.all_dominated());
        let _ = writeln!(s, "any_violated={}", rep.any_violated());
        art.add(cfg, "fernique.csv", rep.to_csv());
    }
    art.add(cfg, "fernique.txt", s);
    Ok(())
}

fn contract(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let recs = coupling_records(cfg, built)?;
    let rate = built.model.as_ref().rate()?;
    let t_min = cfg.checks.contract.t_min.unwrap_or(built.grid.r0());
    let fit = fit_contraction_rate(&recs, t_min, rate.rate)?;
    let mut s = fit.to_key_values();
    let gaps: Vec<Vec<f64>> = recs.iter().map(|r| r.combined_gap()).collect();
    let mut csv = String::from("time,mean_gap\n");
    for (k, t) in recs[0].times.iter().enumerate() {
        let m = gaps.iter().map(|g| g[k]).sum::<f64>() / gaps.len() as f64;
        let _ = writeln!(csv, "{},{}", fmt_f64(*t), fmt_f64(m));
    }
    art.add(cfg, "contract.csv", csv);

    let cc = &cfg.checks.contract;
    if !cc.t1_grid.is_empty() {
        let mut w = String::from("t1,t2,mean_gap,se,ci_lower,ci_upper\n");
        let (mut ts, mut ls) = (Vec::new(), Vec::new());
        for &t1 in &cc.t1_grid {
            let est = w_cauchy_gap(built.model.as_ref(), &built.initial, t1, t1 + cc.t2_offset, cfg.run.paths, cfg.run.seed)?;
            let _ = writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(est.t1),
                fmt_f64(est.t2),
                fmt_f64(est.mean_gap),
                fmt_f64(est.se),
                fmt_f64(est.ci.0),
                fmt_f64(est.ci.1)
            );
            ts.push(t1);
            ls.push(est.mean_gap.max(crate::ergodics::LOG_FLOOR).ln());
        }
        if let Some(f) = linear_fit(&ts, &ls) {
            let _ = writeln!(s, "w_cauchy.slope={}", fmt_f64(f.slope));
            let _ = writeln!(s, "w_cauchy.r_squared={}", fmt_f64(f.r_squared));
        }
        art.add(cfg, "wcauchy.csv", w);
    }
    art.add(cfg, "contract.txt", s);
    Ok(())
}

fn concentrate(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let cc = &cfg.checks.concentrate;
    let rate = built.model.as_ref().rate()?;
    let coeffs = compute_coeffs(
        built.model.noise_spectrum(),
        built.model.delta_reg(),
        built.grid.r0(),
        cfg.checks.fernique.t0,
    )?;
    let threshold = if coeffs.series_converges && rate.positive {
        epsilon_threshold(coeffs.lambda_tilde, rate.rate)
    } else {
        0.0
    };
    let table = estimate_concentration(
        built.model.as_ref(),
        &built.initial,
        &cc.eps,
        &cc.times,
        cfg.run.paths,
        cfg.run.seed,
        threshold,
    )?;
    let mut s = String::new();
    let _ = writeln!(s, "threshold={}", fmt_f64(threshold));
    let _ = writeln!(s, "monotone={}", table.is_monotone());
    let _ = writeln!(s, "rate_warning={}", table.rate_warning);
    for (e, st) in table.eps.iter().zip(&table.stable) {
        let v = st.map_or("n/a".to_string(), |b| b.to_string());
        let _ = writeln!(s, "stable.{}={v}", fmt_f64(*e));
    }
    art.add(cfg, "concentrate.txt", s);
    art.add(cfg, "concentrate.csv", table.to_csv());
    Ok(())
}

fn invariant(cfg: &ExperimentConfig, built: &Built, art: &mut Artifacts) -> Result<()> {
    let sum = sample_invariant(
        built.model.as_ref(),
        &built.initial,
        cfg.run.burn_in,
        cfg.checks.invariant.eps,
        cfg.run.paths,
        cfg.run.seed,
    )?;
    art.add(cfg, "invariant.txt", sum.to_key_values());
    Ok(())
}
