//! Experiment configuration: strict TOML, validated into runnable models.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupling_harnack::TestFunctional;
use crate::ergodics::State;
use crate::error::{Error, Result};
use crate::fspde_sim::{DriftSpec, DriftSpec2, Segment, SegmentGrid};
use crate::spectral_model::{CheckTolerances, DegenerateModel, NondegenerateModel, SpectralData, TailLaw};

/// Experiment families, one per CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Check,
    Simulate,
    Couple,
    Harnack,
    Fernique,
    Contract,
    Concentrate,
    Invariant,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Check,
        Family::Simulate,
        Family::Couple,
        Family::Harnack,
        Family::Fernique,
        Family::Contract,
        Family::Concentrate,
        Family::Invariant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Check => "check",
            Family::Simulate => "simulate",
            Family::Couple => "couple",
            Family::Harnack => "harnack",
            Family::Fernique => "fernique",
            Family::Contract => "contract",
            Family::Concentrate => "concentrate",
            Family::Invariant => "invariant",
        }
    }
}

/// Exactly one of `eigenvalues` (with `noise`) or `power_law`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
    /// Tail law of the modes beyond the listed ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_law: Option<PowerLawSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawSpec {
    pub n: usize,
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub q: f64,
}

impl SpectrumConfig {
    fn build(&self, key: &str) -> Result<SpectralData> {
        let wrap = |e: Error| match e {
            Error::InvalidInput(msg) => Error::config(key, msg),
            other => other,
        };
        match (&self.eigenvalues, &self.noise, &self.power_law) {
            (Some(ev), Some(nz), None) => {
                SpectralData::with_tail(ev.clone(), nz.clone(), self.tail).map_err(wrap)
            }
            (None, None, Some(pl)) => {
                if self.tail.is_some() {
                    return Err(Error::config(key, "`tail` is implied by `power_law`"));
                }
                let law = TailLaw { a: pl.a, p: pl.p, b: pl.b, q: pl.q };
                SpectralData::power_law(pl.n, law).map_err(wrap)
            }
            _ => Err(Error::config(
                key,
                "give either `eigenvalues` and `noise`, or `power_law`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Nondegenerate {
        r0: f64,
        delta_reg: f64,
        lipschitz: f64,
        spectrum: SpectrumConfig,
        drift: DriftSpec,
    },
    Degenerate {
        r0: f64,
        delta_reg: f64,
        /// `δ` of the dissipativity condition on `A1`.
        delta_drift: f64,
        a1: Vec<Vec<f64>>,
        a0: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        spectrum: SpectrumConfig,
        drift: DriftSpec2,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_inv: Option<Vec<f64>>,
    },
}

impl ModelConfig {
    pub fn r0(&self) -> f64 {
        match self {
            ModelConfig::Nondegenerate { r0, .. } | ModelConfig::Degenerate { r0, .. } => *r0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    /// Grid nodes per delay window; `dt = r0 / m`.
    #[serde(default = "default_m")]
    pub m: usize,
    pub paths: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_m() -> usize {
    64
}

/// Constant initial segments; missing entries default to zero (and to
/// 0.1 for the barred pair).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_bar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnackConfig {
    /// Defaults to `r0 + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionals: Option<Vec<TestFunctional>>,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self { t0: None, functionals: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FerniqueConfig {
    pub t0: f64,
    /// The bound is evaluated at `lambda_frac · λ̃`.
    pub lambda_frac: f64,
    pub r_grid: Vec<f64>,
    /// Nodes per window; defaults to `run.m`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_steps: Option<usize>,
}

impl Default for FerniqueConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            lambda_frac: 0.9,
            r_grid: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            window_steps: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractConfig {
    /// Start of the fit window; defaults to `r0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    /// `t1` values for the W-Cauchy gap; empty skips it.
    pub t1_grid: Vec<f64>,
    /// `t2 - t1`.
    pub t2_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrateConfig {
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
}

impl Default for ConcentrateConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.0, 0.05, 0.1, 0.2],
            times: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub eps: f64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self { eps: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub experiments: Vec<Family>,
    pub tolerances: CheckTolerances,
    /// Times at which the commutation condition is sampled.
    pub b4_times: Vec<f64>,
    pub harnack: HarnackConfig,
    pub fernique: FerniqueConfig,
    pub contract: ContractConfig,
    pub concentrate: ConcentrateConfig,
    pub invariant: InvariantConfig,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            experiments: vec![Family::Check],
            tolerances: CheckTolerances::default(),
            b4_times: vec![0.5, 1.0, 2.0],
            harnack: HarnackConfig::default(),
            fernique: FerniqueConfig::default(),
            contract: ContractConfig::default(),
            concentrate: ConcentrateConfig::default(),
            invariant: InvariantConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// Tables and per-path records.
    Csv,
    /// Key-value reports.
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            formats: vec![Format::Csv, Format::Txt],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses TOML text, naming the offending key on failure.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        Error::config(key_of(&path, &msg), msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// `path`, extended by the field a "missing field" message names.
fn key_of(path: &str, msg: &str) -> String {
    let field = msg
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    let base = if path == "." { "" } else { path };
    match field {
        Some(f) if base.is_empty() => f.to_string(),
        Some(f) => format!("{base}.{f}"),
        None if base.is_empty() => "<root>".to_string(),
        None => base.to_string(),
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Canonical serialization, used for hashing.
pub fn canonical_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config("<root>", e.to_string()))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        positive("model.r0", self.model.r0())?;
        positive("run.t_end", self.run.t_end)?;
        if self.run.m == 0 {
            return Err(Error::config("run.m", "must be at least 1"));
        }
        if self.run.paths == 0 {
            return Err(Error::config("run.paths", "must be at least 1"));
        }
        if self.run.workers == Some(0) {
            return Err(Error::config("run.workers", "must be at least 1"));
        }
        if let Some(b) = self.run.burn_in {
            if !(b >= 0.0) {
                return Err(Error::config("run.burn_in", "must be nonnegative"));
            }
        }
        let tol = &self.checks.tolerances;
        positive("checks.tolerances.b4_residual", tol.b4_residual)?;
        positive("checks.tolerances.gramian_rel_eig", tol.gramian_rel_eig)?;
        positive("checks.tolerances.lipschitz_slack", tol.lipschitz_slack)?;
        for t in &self.checks.b4_times {
            positive("checks.b4_times", *t)?;
        }
        positive("checks.fernique.t0", self.checks.fernique.t0)?;
        positive("checks.fernique.lambda_frac", self.checks.fernique.lambda_frac)?;
        if self.checks.fernique.window_steps == Some(0) {
            return Err(Error::config("checks.fernique.window_steps", "must be at least 1"));
        }
        if !self.checks.contract.t1_grid.is_empty() {
            if !(self.checks.contract.t2_offset >= 0.0) {
                return Err(Error::config("checks.contract.t2_offset", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SegmentGrid> {
        SegmentGrid::new(self.model.r0(), self.run.m)
    }

    /// Builds the model and the two initial states.
    pub fn build(&self) -> Result<Built> {
        let grid = self.grid()?;
        let init = &self.initial;
        match &self.model {
            ModelConfig::Nondegenerate { r0, delta_reg, lipschitz, spectrum, drift } => {
                let spec = spectrum.build("model.spectrum")?;
                let n = spec.len();
                let model = NondegenerateModel::new(spec, *delta_reg, drift.clone(), *lipschitz, *r0)?;
                if init.y.is_some() || init.y_bar.is_some() {
                    return Err(Error::config("initial.y", "the non-degenerate model has no Y component"));
                }
                let x = constant(grid, init.x.as_deref(), n, 0.0, "initial.x")?;
                let xb = constant(grid, init.x_bar.as_deref(), n, 0.1, "initial.x_bar")?;
                Ok(Built {
                    grid,
                    model: BuiltModel::Nondegenerate(model),
                    initial: State::Nondegenerate(x),
                    initial_bar: State::Nondegenerate(xb),
                })
            }
            ModelConfig::Degenerate {
                r0,
                delta_reg,
                delta_drift,
                a1,
                a0,
                b,
                spectrum,
                drift,
                sigma_inv,
            } => {
                let spec = spectrum.build("model.spectrum")?;
                let a1m = matrix(a1, "model.a1")?;
                let a0m = matrix(a0, "model.a0")?;
                let bm = matrix(b, "model.b")?;
                let model = DegenerateModel::new(
                    a1m,
                    spec,
                    bm,
                    a0m,
                    drift.clone(),
                    *delta_drift,
                    *r0,
                    *delta_reg,
                    sigma_inv.clone(),
                )?;
                let (n1, n2) = (model.n1(), model.n2());
                let x = constant(grid, init.x.as_deref(), n1, 0.0, "initial.x")?;
                let y = constant(grid, init.y.as_deref(), n2, 0.0, "initial.y")?;
                let xb = constant(grid, init.x_bar.as_deref(), n1, 0.1, "initial.x_bar")?;
                let yb = constant(grid, init.y_bar.as_deref(), n2, 0.1, "initial.y_bar")?;
                Ok(Built {
                    grid,
                    model: BuiltModel::Degenerate(model),
                    initial: State::Degenerate(x, y),
                    initial_bar: State::Degenerate(xb, yb),
                })
            }
        }
    }
}

fn matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch(format!("{key}: rows have different lengths")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn constant(grid: SegmentGrid, v: Option<&[f64]>, n: usize, fill: f64, key: &str) -> Result<Segment> {
    match v {
        Some(v) if v.len() != n => Err(Error::DimensionMismatch(format!(
            "{key} has {} entries for {n} coordinates",
            v.len()
        ))),
        Some(v) => Segment::constant(grid, v),
        None => Segment::constant(grid, &vec![fill; n]),
    }
}

#[derive(Debug, Clone)]
pub enum BuiltModel {
    Nondegenerate(NondegenerateModel),
    Degenerate(DegenerateModel),
}

impl BuiltModel {
    pub fn as_ref(&self) -> crate::ergodics::ModelRef<'_> {
        match self {
            BuiltModel::Nondegenerate(m) => m.into(),
            BuiltModel::Degenerate(m) => m.into(),
        }
    }

    /// Spectrum carrying the noise.
    pub fn noise_spectrum(&self) -> &SpectralData {
        match self {
            BuiltModel::Nondegenerate(m) => &m.spectral,
            BuiltModel::Degenerate(m) => &m.a2,
        }
    }

    pub fn delta_reg(&self) -> f64 {
        match self {
            BuiltModel::Nondegenerate(m) => m.delta_reg,
            BuiltModel::Degenerate(m) => m.delta_reg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Built {
    pub grid: SegmentGrid,
    pub model: BuiltModel,
    pub initial: State,
    pub initial_bar: State,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "nondegenerate"
r0 = 0.5
delta_reg = 0.5
lipschitz = 0.0

[model.spectrum]
eigenvalues = [1.0]
noise = [1.0]

[model.drift]
kind = "distributed_delay"
atoms = [[-0.5, 1.0]]
gain = 0.0

[run]
t_end = 1.0
paths = 4
seed = 3
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.run.m, 64);
        assert_eq!(cfg.checks.experiments, vec![Family::Check]);
        let built = cfg.build().unwrap();
        assert!(matches!(built.model, BuiltModel::Nondegenerate(_)));
    }

    #[test]
    fn missing_seed_names_the_key() {
        let text = MINIMAL.replace("seed = 3\n", "");
        match parse_config_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "run.seed"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("paths = 4", "paths = 4\nbogus = 1");
        match parse_config_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "run.bogus"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("gain = 0.0", "gain = 0.0\nextra = 2");
        assert!(matches!(parse_config_str(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn degenerate_dimension_mismatch() {
        let text = r#"
[model]
kind = "degenerate"
r0 = 0.5
delta_reg = 0.5
delta_drift = 0.0
a1 = [[-1.0, 0.0], [0.0, -1.0]]
a0 = [[0.0, 0.0], [0.0, 0.0]]
b = [[1.0]]

[model.spectrum]
eigenvalues = [1.0]
noise = [1.0]

[model.drift]
k1 = 0.0
k2 = 0.0
form = { kind = "joint_sup", direction = [0.0] }

[run]
t_end = 1.0
paths = 1
seed = 1
"#;
        let cfg = parse_config_str(text).unwrap();
        assert!(matches!(cfg.build(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn spectrum_source_must_be_unique() {
        let text = MINIMAL.replace(
            "noise = [1.0]",
            "noise = [1.0]\npower_law = { n = 2, a = 1.0, p = 2.0, b = 1.0, q = 0.0 }",
        );
        let cfg = parse_config_str(&text).unwrap();
        match cfg.build() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "model.spectrum"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let text = format!("{MINIMAL}\n[checks.tolerances]\nb4_residual = 0.0\n");
        match parse_config_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "checks.tolerances.b4_residual"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let text = canonical_toml(&cfg).unwrap();
        let again = parse_config_str(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(canonical_toml(&again).unwrap(), text);
    }
}
