//! Monte Carlo check of the Harnack inequality
//! `(P_{t0} f(ξ̄, η̄))² ≤ P_{t0} f²(ξ, η) · E[R²]`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{build_plan, run_plan_path, HarnackPlan};
use crate::cli_runner::output::fmt_f64;
use crate::error::{Error, Result};
use crate::fspde_sim::{segment_sup_norm, Segment};
use crate::numerics::stats::{log_mean_exp, mean_se, Z95};
use crate::spectral_model::DegenerateModel;

/// Bounded functional of the terminal segment pair `(X_{t0}, Y_{t0})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctional {
    Constant { value: f64 },
    /// `min(‖(X, Y)‖_∞, cap)` over the segment.
    ClippedSup { cap: f64 },
    /// `sin(freq · X(t0)_coord)`.
    SinX { coord: usize, freq: f64 },
    /// `1{‖Y_{t0}‖_∞ ≤ radius}`.
    BallY { radius: f64 },
    /// `exp(-|Y(t0)|² / scale²)`.
    BumpY { scale: f64 },
}

impl TestFunctional {
    pub fn name(&self) -> String {
        match self {
            TestFunctional::Constant { value } => format!("constant({value})"),
            TestFunctional::ClippedSup { cap } => format!("clipped_sup({cap})"),
            TestFunctional::SinX { coord, freq } => format!("sin_x{coord}({freq})"),
            TestFunctional::BallY { radius } => format!("ball_y({radius})"),
            TestFunctional::BumpY { scale } => format!("bump_y({scale})"),
        }
    }

    pub fn eval(&self, x: &Segment, y: &Segment) -> f64 {
        match *self {
            TestFunctional::Constant { value } => value,
            TestFunctional::ClippedSup { cap } => {
                let sx = segment_sup_norm(x);
                let sy = segment_sup_norm(y);
                sx.hypot(sy).min(cap)
            }
            TestFunctional::SinX { coord, freq } => {
                x.newest().get(coord).map_or(0.0, |v| (freq * v).sin())
            }
            TestFunctional::BallY { radius } => {
                if segment_sup_norm(y) <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunctional::BumpY { scale } => {
                let r2: f64 = y.newest().iter().map(|v| v * v).sum();
                (-r2 / (scale * scale)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunctional::Constant { value } => value.is_finite(),
            TestFunctional::ClippedSup { cap } => cap.is_finite() && cap > 0.0,
            TestFunctional::SinX { freq, .. } => freq.is_finite(),
            TestFunctional::BallY { radius } => radius.is_finite() && radius >= 0.0,
            TestFunctional::BumpY { scale } => scale.is_finite() && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("test functional {} is not bounded", self.name())))
        }
    }
}

/// Five bounded functionals used when none are configured.
pub fn default_bank() -> Vec<TestFunctional> {
    vec![
        TestFunctional::Constant { value: 1.0 },
        TestFunctional::ClippedSup { cap: 1.0 },
        TestFunctional::SinX { coord: 0, freq: 1.0 },
        TestFunctional::BallY { radius: 0.5 },
        TestFunctional::BumpY { scale: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalRow {
    pub name: String,
    /// `E[R f]`, the reweighted estimate of `P_{t0} f(ξ̄, η̄)`.
    pub weighted_mean: f64,
    pub weighted_se: f64,
    /// `E[f²]` under the unweighted law from `(ξ, η)`.
    pub second_moment: f64,
    /// `(E[R f])²`
    pub lhs: f64,
    /// `E[R²] E[f²]`
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub paths: usize,
    pub t0: f64,
    pub seed: u64,
    pub mean_r: f64,
    pub se_r: f64,
    pub mean_r2: f64,
    pub se_r2: f64,
    /// `E[R²]` through `exp(logmeanexp(2 log R))`.
    pub mean_r2_log_domain: f64,
    pub ci_r2: (f64, f64),
    pub mean_phi_sq: f64,
    /// `‖ξ - ξ̄‖²_∞ + ‖η - η̄‖²_∞`
    pub dist_sq: f64,
    /// `log E[R²] / dist²`; NaN when the pairs coincide.
    pub c_hat: f64,
    /// Largest terminal gap seen on any path.
    pub max_terminal_gap: f64,
    pub rows: Vec<FunctionalRow>,
}

impl HarnackReport {
    /// `true` if every row has nonnegative slack.
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.slack >= 0.0)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("paths", self.paths.to_string());
        kv("t0", fmt_f64(self.t0));
        kv("seed", self.seed.to_string());
        kv("mean_r", fmt_f64(self.mean_r));
        kv("se_r", fmt_f64(self.se_r));
        kv("mean_r2", fmt_f64(self.mean_r2));
        kv("se_r2", fmt_f64(self.se_r2));
        kv("mean_r2_log_domain", fmt_f64(self.mean_r2_log_domain));
        kv("ci_r2_lower", fmt_f64(self.ci_r2.0));
        kv("ci_r2_upper", fmt_f64(self.ci_r2.1));
        kv("mean_phi_sq", fmt_f64(self.mean_phi_sq));
        kv("dist_sq", fmt_f64(self.dist_sq));
        kv("c_hat", fmt_f64(self.c_hat));
        kv("max_terminal_gap", fmt_f64(self.max_terminal_gap));
        kv("holds", self.holds().to_string());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("functional,weighted_mean,weighted_se,second_moment,lhs,rhs,slack\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.name,
                fmt_f64(r.weighted_mean),
                fmt_f64(r.weighted_se),
                fmt_f64(r.second_moment),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.slack)
            );
        }
        s
    }
}

struct PathSample {
    log_r: f64,
    phi_sq: f64,
    gap: f64,
    f: Vec<f64>,
}

fn pair_dist_sq(a: (&Segment, &Segment), b: (&Segment, &Segment)) -> Result<f64> {
    let dx = segment_sup_norm(&a.0.diff(b.0)?);
    let dy = segment_sup_norm(&a.1.diff(b.1)?);
    Ok(dx * dx + dy * dy)
}

/// Runs `paths` coupled paths of `plan` and evaluates the bank on the
/// terminal segments of the unbarred process.
pub fn estimate_harnack_with_plan(
    plan: &HarnackPlan,
    model: &DegenerateModel,
    bank: &[TestFunctional],
    paths: usize,
    seed: u64,
) -> Result<HarnackReport> {
    if paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    if bank.is_empty() {
        return Err(Error::invalid("empty test-functional bank"));
    }
    for f in bank {
        f.validate()?;
    }
    let samples: Vec<PathSample> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let out = run_plan_path(plan, model, seed, i)?;
            let (x, y) = &out.terminal;
            let gap = pair_dist_sq((x, y), (&out.terminal_bar.0, &out.terminal_bar.1))?.sqrt();
            Ok(PathSample {
                log_r: out.girsanov.log_r,
                phi_sq: out.girsanov.phi_sq_integral,
                gap,
                f: bank.iter().map(|f| f.eval(x, y)).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let m = paths as f64;
    let r: Vec<f64> = samples.iter().map(|s| s.log_r.exp()).collect();
    let r2: Vec<f64> = r.iter().map(|v| v * v).collect();
    let two_log_r: Vec<f64> = samples.iter().map(|s| 2.0 * s.log_r).collect();
    let (mean_r, se_r) = mean_se(&r);
    let (mean_r2, se_r2) = mean_se(&r2);
    let mean_phi_sq = samples.iter().map(|s| s.phi_sq).sum::<f64>() / m;
    let max_terminal_gap = samples.iter().map(|s| s.gap).fold(0.0, f64::max);

    let rows = bank
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let rf: Vec<f64> = samples.iter().zip(&r).map(|(s, w)| w * s.f[j]).collect();
            let (wm, wse) = mean_se(&rf);
            let second = samples.iter().map(|s| s.f[j] * s.f[j]).sum::<f64>() / m;
            let lhs = wm * wm;
            let rhs = mean_r2 * second;
            FunctionalRow {
                name: f.name(),
                weighted_mean: wm,
                weighted_se: wse,
                second_moment: second,
                lhs,
                rhs,
                slack: rhs - lhs,
            }
        })
        .collect();

    let dist_sq = pair_dist_sq(
        (&plan.initial.0, &plan.initial.1),
        (&plan.initial_bar.0, &plan.initial_bar.1),
    )?;
    let mean_r2_log_domain = log_mean_exp(&two_log_r).exp();
    let c_hat = if dist_sq > 0.0 { log_mean_exp(&two_log_r) / dist_sq } else { f64::NAN };
    Ok(HarnackReport {
        paths,
        t0: plan.t0,
        seed,
        mean_r,
        se_r,
        mean_r2,
        se_r2,
        mean_r2_log_domain,
        ci_r2: ((mean_r2 - Z95 * se_r2).max(0.0), mean_r2 + Z95 * se_r2),
        mean_phi_sq,
        dist_sq,
        c_hat,
        max_terminal_gap,
        rows,
    })
}

/// Builds the coupling from `pair` to `pair_bar` and checks the inequality
/// for every functional in `bank`.
pub fn estimate_harnack(
    model: &DegenerateModel,
    pair: (&Segment, &Segment),
    pair_bar: (&Segment, &Segment),
    t0: f64,
    bank: &[TestFunctional],
    paths: usize,
    seed: u64,
) -> Result<HarnackReport> {
    let dt = pair.0.grid().dt();
    let plan = build_plan(model, pair, pair_bar, t0, dt)?;
    estimate_harnack_with_plan(&plan, model, bank, paths, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspde_sim::{DriftSpec2, SegmentGrid};
    use crate::spectral_model::SpectralData;
    use nalgebra::DMatrix;

    fn model() -> DegenerateModel {
        DegenerateModel::new(
            DMatrix::from_element(1, 1, -1.0),
            SpectralData::new(vec![1.0], vec![1.0]).unwrap(),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DriftSpec2::zero(1, 1),
            0.0,
            0.5,
            0.5,
            Some(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn same_pair_has_equal_sides() {
        let m = model();
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let z = Segment::zeros(g, 1);
        let rep = estimate_harnack(&m, (&z, &z), (&z, &z), 1.0, &default_bank(), 200, 5).unwrap();
        assert_eq!(rep.mean_r, 1.0);
        assert_eq!(rep.mean_r2, 1.0);
        assert!(rep.holds());
        assert!(rep.c_hat.is_nan());
        // f = 1 row: lhs = rhs = 1
        assert_eq!(rep.rows[0].lhs, 1.0);
        assert_eq!(rep.rows[0].slack, 0.0);
    }

    #[test]
    fn constant_functional_gives_jensen_floor() {
        let m = model();
        let g = SegmentGrid::new(0.5, 16).unwrap();
        let z = Segment::zeros(g, 1);
        let o = Segment::constant(g, &[0.1]).unwrap();
        let rep = estimate_harnack(&m, (&z, &z), (&o, &o), 1.0, &default_bank(), 500, 9).unwrap();
        assert!(rep.mean_r2 >= rep.mean_r * rep.mean_r);
        assert!(rep.holds());
        let rel = (rep.mean_r2_log_domain - rep.mean_r2).abs() / rep.mean_r2;
        assert!(rel < 1e-12);
        assert!(rep.to_csv().lines().count() == 6);
    }

    #[test]
    fn functional_serde() {
        for f in default_bank() {
            let s = toml::to_string(&f).unwrap();
            assert_eq!(toml::from_str::<TestFunctional>(&s).unwrap(), f);
        }
    }
}
