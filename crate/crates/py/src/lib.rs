//! Python bindings: config-driven experiments plus a few closed-form helpers.

use std::path::PathBuf;

use fspde_core::cli_runner::config::Family;
use fspde_core::cli_runner::{self, config_hash, parse_config, parse_config_str, BuiltModel, ExperimentConfig};
use fspde_core::coupling_harnack::{
    default_bank, estimate_harnack, synchronous_couple, synchronous_couple_degenerate,
};
use fspde_core::ergodics::{sample_invariant, State};
use fspde_core::fernique::{compute_coeffs, normal_tail as core_normal_tail, one_dim_fernique_bound as core_one_dim};
use fspde_core::fspde_sim::{simulate_degenerate_with, simulate_nondegenerate_with, SimOptions};
use fspde_core::spectral_model::{check_degenerate, check_nondegenerate, compute_rate_lambda};
use fspde_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(fspde, InputError, PyValueError, "Rejected configuration or arguments.");
create_exception!(fspde, NumericalError, PyArithmeticError, "A numerical step failed.");

fn to_py(err: Error) -> PyErr {
    if cli_runner::exit_code(&err) == cli_runner::exit::NUMERICAL_FAILURE {
        NumericalError::new_err(err.to_string())
    } else {
        InputError::new_err(err.to_string())
    }
}

fn parse_family(name: &str) -> PyResult<Family> {
    Family::ALL
        .into_iter()
        .find(|f| f.as_str() == name)
        .ok_or_else(|| InputError::new_err(format!("unknown experiment family `{name}`")))
}

/// A parsed and validated experiment configuration.
#[pyclass(module = "fspde", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Experiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl Experiment {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: parse_config_str(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            cfg: parse_config(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.run.seed
    }

    #[getter]
    fn paths(&self) -> usize {
        self.cfg.run.paths
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.cfg.run.t_end
    }

    #[getter]
    fn degenerate(&self) -> PyResult<bool> {
        let built = self.cfg.build().map_err(to_py)?;
        Ok(matches!(built.model, BuiltModel::Degenerate(_)))
    }

    fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.run.seed = seed;
        Self { cfg }
    }

    fn with_paths(&self, paths: usize) -> PyResult<Self> {
        if paths == 0 {
            return Err(InputError::new_err("paths must be positive"));
        }
        let mut cfg = self.cfg.clone();
        cfg.run.paths = paths;
        Ok(Self { cfg })
    }

    fn config_hash(&self) -> PyResult<String> {
        config_hash(&self.cfg).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        fspde_core::cli_runner::config::canonical_toml(&self.cfg).map_err(to_py)
    }

    /// Condition checks as a list of dicts with name, passed, value, diagnostic.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let built = self.cfg.build().map_err(to_py)?;
        let report = match &built.model {
            BuiltModel::Nondegenerate(m) => check_nondegenerate(m),
            BuiltModel::Degenerate(m) => {
                check_degenerate(m, &self.cfg.checks.b4_times, &self.cfg.checks.tolerances)
            }
        }
        .map_err(to_py)?;
        report
            .entries()
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("name", &e.name)?;
                d.set_item("passed", e.passed)?;
                d.set_item("value", e.value)?;
                d.set_item("diagnostic", &e.diagnostic)?;
                Ok(d)
            })
            .collect()
    }

    /// Contraction rate of the configured model.
    fn rate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let built = self.cfg.build().map_err(to_py)?;
        let r = built.model.as_ref().rate().map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("rate", r.rate)?;
        d.set_item("argmax_s", r.argmax_s)?;
        d.set_item("positive", r.positive)?;
        Ok(d)
    }

    /// One path from the configured initial segment up to `t_end`.
    #[pyo3(signature = (path_index = 0, record_modes = false))]
    fn simulate<'py>(&self, py: Python<'py>, path_index: u64, record_modes: bool) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.cfg;
        let rec = py
            .detach(|| {
                let built = cfg.build()?;
                let opts = SimOptions {
                    path_index,
                    record_modes,
                };
                match (&built.model, &built.initial) {
                    (BuiltModel::Nondegenerate(m), State::Nondegenerate(x)) => {
                        simulate_nondegenerate_with(m, x, cfg.run.t_end, cfg.run.seed, opts)
                    }
                    (BuiltModel::Degenerate(m), State::Degenerate(x, y)) => {
                        simulate_degenerate_with(m, (x, y), cfg.run.t_end, cfg.run.seed, opts)
                    }
                    _ => unreachable!("built state matches the model"),
                }
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("times", rec.times)?;
        d.set_item("supnorm", rec.supnorms)?;
        for (name, col) in rec.components {
            d.set_item(name, col)?;
        }
        d.set_item("modes", rec.modes)?;
        Ok(d)
    }

    /// Synchronous coupling of the two configured initial segments.
    #[pyo3(signature = (path_index = 0))]
    fn couple<'py>(&self, py: Python<'py>, path_index: u64) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.cfg;
        let rec = py
            .detach(|| {
                let built = cfg.build()?;
                match (&built.model, &built.initial, &built.initial_bar) {
                    (BuiltModel::Nondegenerate(m), State::Nondegenerate(a), State::Nondegenerate(b)) => {
                        synchronous_couple(m, a, b, cfg.run.t_end, cfg.run.seed, path_index)
                    }
                    (BuiltModel::Degenerate(m), State::Degenerate(x1, y1), State::Degenerate(x2, y2)) => {
                        synchronous_couple_degenerate(m, (x1, y1), (x2, y2), cfg.run.t_end, cfg.run.seed, path_index)
                    }
                    _ => unreachable!("built state matches the model"),
                }
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("gap", rec.combined_gap())?;
        d.set_item("times", rec.times)?;
        d.set_item("gap_x", rec.gap_x)?;
        d.set_item("gap_y", rec.gap_y)?;
        d.set_item("envelope", rec.envelope)?;
        d.set_item("alpha", rec.alpha)?;
        Ok(d)
    }

    /// Monte Carlo Harnack estimate; degenerate models only.
    #[pyo3(signature = (t0 = None))]
    fn harnack<'py>(&self, py: Python<'py>, t0: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.cfg;
        let rep = py
            .detach(|| {
                let built = cfg.build()?;
                let (BuiltModel::Degenerate(m), State::Degenerate(x, y), State::Degenerate(xb, yb)) =
                    (&built.model, &built.initial, &built.initial_bar)
                else {
                    return Err(Error::InvalidInput(
                        "the change-of-measure coupling is built for the degenerate model only".into(),
                    ));
                };
                let t0 = t0.or(cfg.checks.harnack.t0).unwrap_or(built.grid.r0() + 1.0);
                let bank = cfg.checks.harnack.functionals.clone().unwrap_or_else(default_bank);
                estimate_harnack(m, (x, y), (xb, yb), t0, &bank, cfg.run.paths, cfg.run.seed)
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("holds", rep.holds())?;
        d.set_item("t0", rep.t0)?;
        d.set_item("mean_r", rep.mean_r)?;
        d.set_item("se_r", rep.se_r)?;
        d.set_item("mean_r2", rep.mean_r2)?;
        d.set_item("se_r2", rep.se_r2)?;
        d.set_item("mean_r2_log_domain", rep.mean_r2_log_domain)?;
        d.set_item("c_hat", rep.c_hat)?;
        d.set_item("dist_sq", rep.dist_sq)?;
        d.set_item("max_terminal_gap", rep.max_terminal_gap)?;
        let rows = PyDict::new(py);
        for r in rep.rows {
            let row = PyDict::new(py);
            row.set_item("lhs", r.lhs)?;
            row.set_item("rhs", r.rhs)?;
            row.set_item("slack", r.slack)?;
            row.set_item("weighted_mean", r.weighted_mean)?;
            rows.set_item(r.name, row)?;
        }
        d.set_item("functionals", rows)?;
        Ok(d)
    }

    /// Per-mode Fernique coefficients of the noise spectrum.
    #[pyo3(signature = (t0 = 1.0))]
    fn fernique_coeffs<'py>(&self, py: Python<'py>, t0: f64) -> PyResult<Bound<'py, PyDict>> {
        let built = self.cfg.build().map_err(to_py)?;
        let c = compute_coeffs(built.model.noise_spectrum(), built.model.delta_reg(), built.grid.r0(), t0)
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("gammas", c.gammas)?;
        d.set_item("deltas", c.deltas)?;
        d.set_item("theta", c.theta)?;
        d.set_item("lambda_tilde", c.lambda_tilde)?;
        d.set_item("series_converges", c.series_converges)?;
        Ok(d)
    }

    /// Terminal-segment statistics after a burn-in.
    #[pyo3(signature = (burn_in = None, eps = 0.1))]
    fn invariant<'py>(&self, py: Python<'py>, burn_in: Option<f64>, eps: f64) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.cfg;
        let s = py
            .detach(|| {
                let built = cfg.build()?;
                sample_invariant(built.model.as_ref(), &built.initial, burn_in.or(cfg.run.burn_in), eps, cfg.run.paths, cfg.run.seed)
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("burn_in", s.burn_in)?;
        d.set_item("mean_sup", s.mean_sup)?;
        d.set_item("se_sup", s.se_sup)?;
        d.set_item("mean_newest", s.mean_newest)?;
        d.set_item("var_newest", s.var_newest)?;
        d.set_item("exp_moment", s.exp_moment)?;
        Ok(d)
    }

    /// Runs experiment families and writes their artifacts; returns the manifest.
    #[pyo3(signature = (families = None, out_dir = None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        families: Option<Vec<String>>,
        out_dir: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let fams = families
            .unwrap_or_default()
            .iter()
            .map(|f| parse_family(f))
            .collect::<PyResult<Vec<_>>>()?;
        let cfg = &self.cfg;
        let man = py
            .detach(|| cli_runner::run_experiment(cfg, &fams, out_dir.as_deref()))
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("config_hash", man.config_hash)?;
        d.set_item("seed", man.seed)?;
        d.set_item("version", man.version)?;
        d.set_item("families", man.families)?;
        d.set_item("files", man.files)?;
        d.set_item("conditions_passed", man.conditions_passed)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Experiment(seed={}, paths={}, t_end={})",
            self.cfg.run.seed, self.cfg.run.paths, self.cfg.run.t_end
        )
    }
}

/// Sup of `s - L e^{s r0}` over `(0, lambda1]` as `(rate, argmax, positive)`.
#[pyfunction]
fn rate_lambda(lambda1: f64, lipschitz: f64, r0: f64) -> PyResult<(f64, f64, bool)> {
    let r = compute_rate_lambda(lambda1, lipschitz, r0).map_err(to_py)?;
    Ok((r.rate, r.argmax_s, r.positive))
}

/// Standard normal upper tail.
#[pyfunction]
fn normal_tail(r: f64) -> f64 {
    core_normal_tail(r)
}

/// One-dimensional Fernique bound as `(bound, level, vacuous)`.
#[pyfunction]
fn one_dim_fernique_bound(gamma: f64, theta1: f64, r: f64) -> PyResult<(f64, f64, bool)> {
    let b = core_one_dim(gamma, theta1, r).map_err(to_py)?;
    Ok((b.bound, b.level, b.vacuous))
}

/// Names accepted by `Experiment.run`.
#[pyfunction]
fn families() -> Vec<&'static str> {
    Family::ALL.iter().map(Family::as_str).collect()
}

#[pymodule]
fn fspde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("InputError", m.py().get_type::<InputError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(rate_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(normal_tail, m)?)?;
    m.add_function(wrap_pyfunction!(one_dim_fernique_bound, m)?)?;
    m.add_function(wrap_pyfunction!(families, m)?)?;
    Ok(())
}
