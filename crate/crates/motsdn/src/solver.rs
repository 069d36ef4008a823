//! Marginally outer trapped surfaces in the incoming null hypersurface of `f̄₀`.
//!
//! [`find_mots`] runs the iteration
//! `f̃̃^{k+1} = f̃̃^k − {∂_f̃ T[f̄₀, f̃̃^k]}⁻¹ T(f̄₀, f̃̃^k)` with the
//! Schwarzschild-frozen vertical operator of [`crate::linearizer`]. The
//! solution map `F(f̄₀)` and its frozen linearisation are in [`map_f`] and
//! [`linearized_map`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{surface_coeffs, transported_chart};
use crate::linearizer::{linearized_transport, InversionConfig, VerticalOperator};
use crate::provider::Spacetime;
use crate::scalar::Real;
use crate::sphere::{FieldSnapshot, NormSpec, SphereField};
use crate::transport::{SurfaceChart, TransportConfig};

/// Smallness budget of the surfaces handled by the solver, in units of `r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Budget {
    /// Bound on `|mean f̄₀| / r₀`.
    pub incoming_mean: f64,
    /// Bound on `‖f̄₀ − mean f̄₀‖^{n+2,p} / r₀`.
    pub incoming_oscillation: f64,
    /// Bound on `|mean f̃̃^k| / r₀` along the iteration.
    pub outgoing_mean: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { incoming_mean: 0.1, incoming_oscillation: 0.25, outgoing_mean: 0.5 }
    }
}

/// Controls of [`find_mots`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Residual tolerance on `‖T‖^{n,p}` in units of `1/r₀`.
    pub tol: f64,
    pub max_iter: usize,
    /// Norm `(n, p)` of the residual; corrections use `n + 1`, the health
    /// metric `n + 2`.
    pub norm: NormSpec,
    /// Consecutive growing corrections after which the run is declared divergent.
    pub divergence_window: usize,
    pub budget: Budget,
    pub transport: TransportConfig,
    pub inversion: InversionConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-11,
            max_iter: 50,
            norm: NormSpec { n: 3, p: 4.0 },
            divergence_window: 3,
            budget: Budget::default(),
            transport: TransportConfig::default(),
            inversion: InversionConfig::default(),
        }
    }
}

impl SolverConfig {
    fn shifted(&self, k: usize) -> NormSpec {
        NormSpec { n: self.norm.n + k, p: self.norm.p }
    }
}

/// Outcome of an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
}

/// Iterates and convergence history of [`find_mots`].
#[derive(Clone, Debug)]
pub struct MotsReport<T> {
    /// Last iterate; the solution when `status` is converged.
    pub ftt: SphereField<T>,
    pub iterations: usize,
    /// `‖T(f̄₀, f̃̃^k)‖^{n,p}` for `k = 0, 1, …`.
    pub residual_history: Vec<f64>,
    /// `‖f̃̃^{k+1} − f̃̃^k‖^{n+1,p}`.
    pub correction_history: Vec<f64>,
    /// Ratios of successive corrections.
    pub contraction_ratios: Vec<f64>,
    /// `‖f̃̃^k‖^{n+2,p}`.
    pub high_norm_history: Vec<f64>,
    /// `|mean f̃̃^k| / r₀`.
    pub mean_ratio_history: Vec<f64>,
    pub status: SolveStatus,
}

/// Serializable form of a [`MotsReport`].
#[derive(Clone, Debug, Serialize)]
pub struct MotsRecord {
    pub status: SolveStatus,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub sup_norm: f64,
    pub residual_history: Vec<f64>,
    pub correction_history: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub high_norm_history: Vec<f64>,
    pub mean_ratio_history: Vec<f64>,
    pub solution: FieldSnapshot,
}

impl<T: Real> MotsReport<T> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Largest contraction ratio after the first `skip` ratios.
    pub fn plateau(&self, skip: usize) -> f64 {
        self.contraction_ratios.iter().skip(skip).fold(0.0, |m, &r| m.max(r))
    }

    pub fn record(&self) -> MotsRecord {
        MotsRecord {
            status: self.status,
            converged: self.converged(),
            iterations: self.iterations,
            final_residual: self.final_residual(),
            sup_norm: self.ftt.sup_norm().as_f64(),
            residual_history: self.residual_history.clone(),
            correction_history: self.correction_history.clone(),
            contraction_ratios: self.contraction_ratios.clone(),
            high_norm_history: self.high_norm_history.clone(),
            mean_ratio_history: self.mean_ratio_history.clone(),
            solution: self.ftt.snapshot(),
        }
    }
}

/// Checks `f̄₀` against the incoming budget.
pub fn check_incoming_budget<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, cfg: &SolverConfig) -> Result<()> {
    let r0 = st.r0();
    let mean = (f0.mean() / r0).as_f64();
    if !(mean.abs() <= cfg.budget.incoming_mean) {
        return Err(Error::Invariant(format!("|mean f̄₀|/r₀ = {:.3e} exceeds the budget {}", mean.abs(), cfg.budget.incoming_mean)));
    }
    let osc = (f0.without_mean().sobolev_norm(cfg.shifted(2)) / r0).as_f64();
    if !(osc <= cfg.budget.incoming_oscillation) {
        return Err(Error::Invariant(format!("‖f̄₀ − mean‖/r₀ = {osc:.3e} exceeds the budget {}", cfg.budget.incoming_oscillation)));
    }
    Ok(())
}

fn check_outgoing_mean<T: Real>(st: &Spacetime<T>, ftt: &SphereField<T>, cfg: &SolverConfig) -> Result<f64> {
    let ratio = (ftt.mean() / st.r0()).abs().as_f64();
    if !(ratio <= cfg.budget.outgoing_mean) {
        return Err(Error::Invariant(format!("|mean f̃̃|/r₀ = {ratio:.3e} exceeds {}", cfg.budget.outgoing_mean)));
    }
    Ok(ratio)
}

/// Transported chart with its expansion `T(f̄₀, f̃̃)`.
fn evaluate<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, ftt: &SphereField<T>, cfg: &SolverConfig) -> Result<(SurfaceChart<T>, SphereField<T>)> {
    let chart = transported_chart(st, f0, ftt, &cfg.transport)?;
    let t = surface_coeffs(st, &chart)?.geometry.tr_chi_prime;
    Ok((chart, t))
}

/// Solves `T(f̄₀, f̃̃) = 0` for `f̃̃` starting from `f̃̃⁰`.
pub fn find_mots<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, seed: &SphereField<T>, cfg: &SolverConfig) -> Result<MotsReport<T>> {
    if f0.l_max() != seed.l_max() {
        return Err(Error::InvalidParameter("f̄₀ and the seed must share a band limit".into()));
    }
    check_incoming_budget(st, f0, cfg)?;
    let r0 = st.r0().as_f64();
    let tol = cfg.tol / r0;
    let mut report = MotsReport {
        ftt: seed.clone(),
        iterations: 0,
        residual_history: Vec::new(),
        correction_history: Vec::new(),
        contraction_ratios: Vec::new(),
        high_norm_history: Vec::new(),
        mean_ratio_history: Vec::new(),
        status: SolveStatus::MaxIter,
    };
    let mut growing = 0;
    loop {
        let ftt = report.ftt.clone();
        report.mean_ratio_history.push(check_outgoing_mean(st, &ftt, cfg)?);
        report.high_norm_history.push(ftt.sobolev_norm(cfg.shifted(2)).as_f64());
        let (chart, t) = evaluate(st, f0, &ftt, cfg)?;
        let residual = t.sobolev_norm(cfg.norm).as_f64();
        if !residual.is_finite() {
            return Err(Error::NonFinite("expansion residual".into()));
        }
        report.residual_history.push(residual);
        let small_step = report.correction_history.last().map_or(true, |&c| c <= tol * r0 * r0);
        if residual <= tol && small_step {
            report.status = SolveStatus::Converged;
            return Ok(report);
        }
        if report.iterations >= cfg.max_iter {
            report.status = SolveStatus::MaxIter;
            return Ok(report);
        }
        let op = VerticalOperator::from_chart(st, &chart)?;
        let (step, _) = op.invert(&t.scale(-T::one()), &cfg.inversion)?;
        let size = step.sobolev_norm(cfg.shifted(1)).as_f64();
        if let Some(&prev) = report.correction_history.last() {
            let ratio = if prev > 0.0 { size / prev } else { 0.0 };
            report.contraction_ratios.push(ratio);
            growing = if size > prev { growing + 1 } else { 0 };
        }
        report.correction_history.push(size);
        report.ftt = ftt.add(&step);
        report.iterations += 1;
        if growing >= cfg.divergence_window {
            report.status = SolveStatus::Diverged;
            return Ok(report);
        }
    }
}

/// Result of [`check_uniqueness`].
#[derive(Clone, Debug)]
pub struct UniquenessReport<T> {
    pub reports: Vec<MotsReport<T>>,
    /// `(i, j, ‖f̃̃_i − f̃̃_j‖^{n+1,p})` for `i < j`.
    pub distances: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

/// Serializable form of a [`UniquenessReport`].
#[derive(Clone, Debug, Serialize)]
pub struct UniquenessRecord {
    pub passed: bool,
    pub threshold: f64,
    pub max_distance: f64,
    pub distances: Vec<(usize, usize, f64)>,
    pub runs: Vec<MotsRecord>,
}

impl<T: Real> UniquenessReport<T> {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().fold(0.0, |m, d| m.max(d.2))
    }

    pub fn passed(&self) -> bool {
        self.max_distance() <= self.threshold
    }

    pub fn record(&self) -> UniquenessRecord {
        UniquenessRecord {
            passed: self.passed(),
            threshold: self.threshold,
            max_distance: self.max_distance(),
            distances: self.distances.clone(),
            runs: self.reports.iter().map(|r| r.record()).collect(),
        }
    }
}

/// Runs [`find_mots`] from every seed and compares the limits; the pairwise
/// distances must stay below `10·tol·r₀`.
pub fn check_uniqueness<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, seeds: &[SphereField<T>], cfg: &SolverConfig) -> Result<UniquenessReport<T>> {
    let mut reports = Vec::with_capacity(seeds.len());
    for seed in seeds {
        reports.push(find_mots(st, f0, seed, cfg)?);
    }
    compare_limits(reports, st.r0(), cfg)
}

/// Pairwise distances of the limits of converged runs.
pub fn compare_limits<T: Real>(reports: Vec<MotsReport<T>>, r0: T, cfg: &SolverConfig) -> Result<UniquenessReport<T>> {
    for (i, rep) in reports.iter().enumerate() {
        if !rep.converged() {
            return Err(Error::Diverged { what: format!("MOTS iteration from seed {i} ({:?})", rep.status), iteration: rep.iterations });
        }
    }
    let mut distances = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let d = reports[i].ftt.sub(&reports[j].ftt).sobolev_norm(cfg.shifted(1)).as_f64();
            distances.push((i, j, d));
        }
    }
    let threshold = 10.0 * cfg.tol * r0.as_f64();
    Ok(UniquenessReport { reports, distances, threshold })
}

/// `F(f̄₀)`: the MOTS in the incoming null hypersurface of `f̄₀`, seeded at zero.
pub fn map_f<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, cfg: &SolverConfig) -> Result<MotsReport<T>> {
    let rep = find_mots(st, f0, &SphereField::zeros(f0.grid()), cfg)?;
    if !rep.converged() {
        return Err(Error::NotConverged { what: format!("solution map ({:?})", rep.status), iterations: rep.iterations, residual: rep.final_residual() });
    }
    Ok(rep)
}

/// `b̄dd_Sch F[f̄₀](δf̄₀) = −{∂_f̃ T}⁻¹(∂_ū tr χ′_Sch · b̄dd f̄̃̃)` at the
/// surface `(f̄₀, F(f̄₀))`.
pub fn linearized_map<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, image: &SphereField<T>, delta_f0: &SphereField<T>, cfg: &SolverConfig) -> Result<SphereField<T>> {
    let chart = transported_chart(st, f0, image, &cfg.transport)?;
    let op = VerticalOperator::from_chart(st, &chart)?;
    let delta_fbar = linearized_transport(st, &chart, delta_f0, &cfg.transport)?;
    let rhs = op.c.mul(&delta_fbar).scale(-T::one());
    Ok(op.invert(&rhs, &cfg.inversion)?.0)
}
