//! Run configuration: TOML sections with defaults, command line overrides
//! and resolution into a self-contained form that is echoed to manifests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use motsdn::background::SchwarzschildGauge;
use motsdn::linearizer::InversionConfig;
use motsdn::provider::{PerturbationRecipe, Spacetime};
use motsdn::solver::{Budget, SolverConfig};
use motsdn::sphere::{FieldSnapshot, NormSpec, SphereField, SphereGrid};
use motsdn::transport::TransportConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field;

/// Invalid or unreadable configuration; maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundSection {
    pub mass: f64,
    pub kappa: f64,
    pub tau: f64,
}

impl Default for BackgroundSection {
    fn default() -> Self {
        BackgroundSection { mass: 1.0, kappa: 0.25, tau: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub band_limit: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { band_limit: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormSection {
    pub n: usize,
    pub p: f64,
}

impl Default for NormSection {
    fn default() -> Self {
        NormSection { n: 3, p: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    pub steps_per_unit: usize,
    pub min_steps: usize,
}

impl Default for TransportSection {
    fn default() -> Self {
        let t = TransportConfig::default();
        TransportSection { steps_per_unit: t.steps_per_unit, min_steps: t.min_steps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Residual tolerance in units of `1/r₀`.
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_window: usize,
    pub inversion_tol: f64,
    pub inversion_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverSection {
            tol: s.tol,
            max_iter: s.max_iter,
            divergence_window: s.divergence_window,
            inversion_tol: s.inversion.tolerance,
            inversion_max_iter: s.inversion.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub incoming_mean: f64,
    pub incoming_oscillation: f64,
    pub outgoing_mean: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        let b = Budget::default();
        BudgetSection { incoming_mean: b.incoming_mean, incoming_oscillation: b.incoming_oscillation, outgoing_mean: b.outgoing_mean }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Schwarzschild,
    Perturbed,
}

/// The metric. A perturbed provider takes its recipe from the inline
/// `recipe` table, else from `recipe_file`, else the built-in default;
/// `epsilon` overrides the recipe's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipe_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PerturbationRecipe>,
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection { kind: ProviderKind::Schwarzschild, recipe_file: None, epsilon: None, recipe: None }
    }
}

/// A field given as an expression in units of `r₀`, a path to a JSON
/// snapshot (any value ending in `.json`), or an inline snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Snapshot(FieldSnapshot),
    Text(String),
}

impl FieldSpec {
    pub fn expr(s: &str) -> Self {
        FieldSpec::Text(s.to_string())
    }

    fn path(&self) -> Option<PathBuf> {
        match self {
            FieldSpec::Text(t) if t.trim_end().ends_with(".json") => Some(PathBuf::from(t.trim())),
            _ => None,
        }
    }

    /// The field on `grid`; files must have been resolved first.
    pub fn build(&self, grid: &Arc<SphereGrid<f64>>, r0: f64) -> Result<SphereField<f64>, ConfigError> {
        match self {
            FieldSpec::Snapshot(s) => field::from_snapshot(grid, s).map_err(ConfigError),
            FieldSpec::Text(t) => {
                if self.path().is_some() {
                    return bad(format!("field file {t} was not resolved"));
                }
                field::parse_expression(t).and_then(|e| e.build(grid, r0)).map_err(|e| ConfigError(format!("field {t:?}: {e}")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    /// Incoming null hypersurface `ū = f̄₀`.
    pub f0: FieldSpec,
    /// Surface `s = f̃̃` inside it.
    pub ftt: FieldSpec,
    /// Initial iterate of the MOTS iteration.
    pub seed_field: FieldSpec,
    /// Transport target `s`, in units of `r₀`.
    pub s: f64,
    /// Seeds of the uniqueness check.
    pub seeds: Vec<FieldSpec>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection {
            f0: FieldSpec::expr("0.01 + 0.01*Y(1,0)"),
            ftt: FieldSpec::expr("0.005*Y(2,0)"),
            seed_field: FieldSpec::expr("0"),
            s: 0.1,
            seeds: ["0", "0.01*Y(2,0)", "-0.01 + 0.005*Y(1,1)", "0.02*Y(1,0) - 0.01*Y(3,-2)", "0.015"].iter().map(|s| FieldSpec::expr(s)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { epsilons: vec![1e-2, 1e-3, 1e-4] }
    }
}

/// Settings of the linearisation checks; lengths are in units of `r₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    /// Amplitudes of the remainder series.
    pub amplitudes: Vec<f64>,
    /// Steps of the difference quotient series.
    pub steps: Vec<f64>,
    /// Coordinate sphere `(s₀, ū₀)` the remainder bases are centred on.
    pub anchor: [f64; 2],
    /// Base of the difference quotients: `offset + scale · shape`.
    pub base_scale: f64,
    pub base_offset: f64,
    /// Sobolev order of the error norms.
    pub norm_n: usize,
    /// Highest degree of the random shapes.
    pub max_degree: usize,
    /// Largest degree of the eigencheck.
    pub eigen_degree: usize,
    /// Finite difference step of the eigencheck.
    pub eigen_step: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            amplitudes: vec![1e-2, 1e-3, 1e-4],
            steps: vec![1.6, 0.8, 0.4],
            anchor: [0.1, 0.1],
            base_scale: 0.5,
            base_offset: 0.05,
            norm_n: 2,
            max_degree: 3,
            eigen_degree: 6,
            eigen_step: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    /// Sample points per axis of the `(s, ū)` box.
    pub samples: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { samples: 7 }
    }
}

/// Grids of the background table as `a:b:n` in units of `r₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub s_grid: String,
    pub us_grid: String,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection { s_grid: "-0.2:0.2:9".into(), us_grid: "-0.4:0.4:9".into() }
    }
}

/// Everything a run depends on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub background: BackgroundSection,
    pub grid: GridSection,
    pub norm: NormSection,
    pub transport: TransportSection,
    pub solver: SolverSection,
    pub budget: BudgetSection,
    pub provider: ProviderSection,
    pub surface: SurfaceSection,
    pub sweep: SweepSection,
    pub gradcheck: GradcheckSection,
    pub validate: ValidateSection,
    pub table: TableSection,
}

/// Content hash of an input file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_input(role: &str, path: &Path, inputs: &mut Vec<InputRecord>) -> Result<Vec<u8>, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("cannot read {role} {}: {e}", path.display())))?;
    inputs.push(InputRecord { role: role.to_string(), path: path.display().to_string(), sha256: sha256_hex(&bytes) });
    Ok(bytes)
}

/// Parses a recipe file; a missing `epsilon` is filled with `fallback`
/// when one is given.
pub fn load_recipe(path: &Path, fallback: Option<f64>, inputs: &mut Vec<InputRecord>) -> Result<PerturbationRecipe, ConfigError> {
    let bytes = read_input("recipe", path, inputs)?;
    let text = String::from_utf8(bytes).map_err(|_| ConfigError(format!("{} is not UTF-8", path.display())))?;
    let mut value: toml::Table = toml::from_str(&text).map_err(|e| ConfigError(format!("recipe {}: {e}", path.display())))?;
    if let Some(eps) = fallback {
        value.entry("epsilon").or_insert(toml::Value::Float(eps));
    }
    let recipe: PerturbationRecipe = value.try_into().map_err(|e| ConfigError(format!("recipe {}: {e}", path.display())))?;
    Ok(recipe)
}

impl RunConfig {
    /// Reads a TOML config, or the `config` member of a JSON manifest.
    /// Relative paths inside the file are taken relative to its directory.
    pub fn load(path: &Path, inputs: &mut Vec<InputRecord>) -> Result<Self, ConfigError> {
        let bytes = read_input("config", path, inputs)?;
        let text = String::from_utf8(bytes).map_err(|_| ConfigError(format!("{} is not UTF-8", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            let inner = match v.get_mut("config") {
                Some(c) => c.take(),
                None => v,
            };
            serde_json::from_value(inner).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
        };
        let dir = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &Path| if p.is_relative() { dir.join(p) } else { p.to_path_buf() };
        if let Some(p) = cfg.provider.recipe_file.take() {
            cfg.provider.recipe_file = Some(rebase(&p));
        }
        let surface = &mut cfg.surface;
        for spec in [&mut surface.f0, &mut surface.ftt, &mut surface.seed_field].into_iter().chain(surface.seeds.iter_mut()) {
            if let Some(p) = spec.path() {
                *spec = FieldSpec::Text(rebase(&p).display().to_string());
            }
        }
        Ok(cfg)
    }

    /// Inlines recipe and field files, applies the `ε` override and checks
    /// every value. The result depends on no file.
    pub fn resolve(mut self, inputs: &mut Vec<InputRecord>) -> Result<Self, ConfigError> {
        let p = &mut self.provider;
        match p.kind {
            ProviderKind::Schwarzschild => {
                if p.recipe.is_some() || p.recipe_file.is_some() || p.epsilon.is_some() {
                    return bad("a Schwarzschild provider takes no recipe or epsilon");
                }
            }
            ProviderKind::Perturbed => {
                let mut recipe = match (p.recipe.take(), p.recipe_file.take()) {
                    (Some(_), Some(_)) => return bad("give either an inline recipe or a recipe file"),
                    (Some(r), None) => r,
                    (None, Some(path)) => load_recipe(&path, p.epsilon, inputs)?,
                    (None, None) => PerturbationRecipe::default(),
                };
                if let Some(eps) = p.epsilon.take() {
                    recipe = recipe.with_epsilon(eps);
                }
                recipe.validate().map_err(|e| ConfigError(e.to_string()))?;
                p.recipe = Some(recipe);
            }
        }
        let surface = &mut self.surface;
        for (role, spec) in [("f0", &mut surface.f0), ("ftt", &mut surface.ftt), ("seed_field", &mut surface.seed_field)]
            .into_iter()
            .chain(surface.seeds.iter_mut().map(|s| ("seed", s)))
        {
            if let Some(path) = spec.path() {
                let bytes = read_input(role, &path, inputs)?;
                let snap: FieldSnapshot = serde_json::from_slice(&bytes).map_err(|e| ConfigError(format!("field file {}: {e}", path.display())))?;
                *spec = FieldSpec::Snapshot(snap);
            }
        }
        self.validate()?;
        Ok(self)
    }

    /// Range checks of a resolved configuration.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gauge()?;
        if !(2..=48).contains(&self.grid.band_limit) {
            return bad("grid.band_limit must lie in 2..=48");
        }
        NormSpec::new(self.norm.n, self.norm.p).map_err(|e| ConfigError(e.to_string()))?;
        if self.transport.steps_per_unit == 0 {
            return bad("transport.steps_per_unit must be positive");
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || !(s.inversion_tol > 0.0) || s.max_iter == 0 || s.inversion_max_iter == 0 {
            return bad("solver tolerances and iteration limits must be positive");
        }
        let b = &self.budget;
        if !(b.incoming_mean > 0.0 && b.incoming_oscillation > 0.0 && b.outgoing_mean > 0.0) {
            return bad("budget bounds must be positive");
        }
        if !self.surface.s.is_finite() || self.surface.s.abs() > self.background.kappa {
            return bad("surface.s must lie in [-kappa, kappa]");
        }
        let grid = self.grid();
        let r0 = self.r0();
        for spec in [&self.surface.f0, &self.surface.ftt, &self.surface.seed_field].into_iter().chain(&self.surface.seeds) {
            spec.build(&grid, r0)?;
        }
        if self.sweep.epsilons.is_empty() || self.sweep.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("sweep.epsilons must be positive");
        }
        let g = &self.gradcheck;
        if g.amplitudes.len() < 2 || g.steps.len() < 2 {
            return bad("gradcheck needs at least two amplitudes and two steps");
        }
        if g.amplitudes.iter().chain(&g.steps).any(|x| !(*x > 0.0)) || !(g.eigen_step > 0.0) {
            return bad("gradcheck amplitudes and steps must be positive");
        }
        if g.max_degree == 0 || g.max_degree > self.grid.band_limit || g.eigen_degree > self.grid.band_limit {
            return bad("gradcheck degrees must lie within the band limit");
        }
        if self.validate.samples < 2 {
            return bad("validate.samples must be at least 2");
        }
        parse_grid(&self.table.s_grid)?;
        parse_grid(&self.table.us_grid)?;
        Ok(())
    }

    pub fn gauge(&self) -> Result<SchwarzschildGauge<f64>, ConfigError> {
        let b = &self.background;
        SchwarzschildGauge::new(b.mass, b.kappa, b.tau).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn r0(&self) -> f64 {
        2.0 * self.background.mass
    }

    pub fn grid(&self) -> Arc<SphereGrid<f64>> {
        SphereGrid::new(self.grid.band_limit)
    }

    pub fn norm(&self) -> NormSpec {
        NormSpec { n: self.norm.n, p: self.norm.p }
    }

    pub fn recipe(&self) -> Option<&PerturbationRecipe> {
        match self.provider.kind {
            ProviderKind::Schwarzschild => None,
            ProviderKind::Perturbed => self.provider.recipe.as_ref(),
        }
    }

    pub fn spacetime(&self) -> Result<Spacetime<f64>, ConfigError> {
        let gauge = self.gauge()?;
        match self.recipe() {
            None => Ok(Spacetime::schwarzschild(gauge)),
            Some(r) => Spacetime::perturbed(gauge, r.clone()).map_err(|e| ConfigError(e.to_string())),
        }
    }

    pub fn transport_config(&self) -> TransportConfig {
        TransportConfig { steps_per_unit: self.transport.steps_per_unit, min_steps: self.transport.min_steps }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let b = &self.budget;
        SolverConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            norm: self.norm(),
            divergence_window: s.divergence_window,
            budget: Budget { incoming_mean: b.incoming_mean, incoming_oscillation: b.incoming_oscillation, outgoing_mean: b.outgoing_mean },
            transport: self.transport_config(),
            inversion: InversionConfig { tolerance: s.inversion_tol, max_iter: s.inversion_max_iter },
        }
    }

    /// Switches to the perturbed provider with the given recipe file.
    pub fn use_recipe_arg(&mut self, arg: &str) {
        let p = &mut self.provider;
        match arg {
            "schwarzschild" => {
                *p = ProviderSection::default();
            }
            "default" => {
                *p = ProviderSection { kind: ProviderKind::Perturbed, ..ProviderSection::default() };
            }
            path => {
                *p = ProviderSection { kind: ProviderKind::Perturbed, recipe_file: Some(PathBuf::from(path)), ..ProviderSection::default() };
            }
        }
    }

    /// Overrides `ε`; a Schwarzschild provider becomes the default recipe.
    pub fn use_epsilon(&mut self, eps: f64) {
        let p = &mut self.provider;
        p.kind = ProviderKind::Perturbed;
        match p.recipe.as_mut() {
            Some(r) => r.epsilon = eps,
            None => p.epsilon = Some(eps),
        }
    }
}

/// Parses `a:b:n` into `n` equally spaced values from `a` to `b`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return bad(format!("grid {text:?} must have the form a:b:n"));
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| ConfigError(format!("grid {text:?}: bad start")))?;
    let b: f64 = parts[1].trim().parse().map_err(|_| ConfigError(format!("grid {text:?}: bad end")))?;
    let n: usize = parts[2].trim().parse().map_err(|_| ConfigError(format!("grid {text:?}: bad count")))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return bad(format!("grid {text:?} is empty or not finite"));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

/// Parses a comma separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| ConfigError(format!("{t:?} is not a number"))))
        .collect()
}
