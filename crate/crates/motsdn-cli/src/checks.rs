//! Numerical checks run by `verify` and shared with the experiment commands.

use std::sync::Arc;

use anyhow::Result;
use motsdn::background::SchwarzschildGauge;
use motsdn::geometry::{direct_coeffs_general, expansion_t, surface_coeffs, transported_chart};
use motsdn::linearizer::check::{difference_quotients, fit_slope, linearization_remainders, CheckSettings, Directions, SlopeSeries};
use motsdn::linearizer::VerticalOperator;
use motsdn::provider::{EnvelopeSampling, PerturbationRecipe, Spacetime};
use motsdn::solver::{compare_limits, find_mots, map_f, MotsReport};
use motsdn::sphere::{lm_index, NormSpec, SphereField, SphereGrid};
use motsdn::transport::{characteristic, transport_foliation, Characteristic, FoliationOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

/// Band limit of the coefficient and transport oracles.
pub const ORACLE_BAND_LIMIT: usize = 15;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    fn at_most(id: &str, name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Check { id: id.into(), name: name.into(), passed: value <= threshold, value, threshold, detail }
    }

    fn failed(id: &str, name: &str, err: &anyhow::Error) -> Self {
        Check { id: id.into(), name: name.into(), passed: false, value: f64::NAN, threshold: f64::NAN, detail: format!("error: {err:#}") }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random constant plus modes `1 ≤ l ≤ max_degree` with amplitudes in `[−½, ½]`.
pub fn shape(grid: &Arc<SphereGrid<f64>>, rng: &mut ChaCha8Rng, max_degree: usize) -> SphereField<f64> {
    let mut c = vec![0.0; grid.n_coeffs()];
    let f = SphereField::constant(grid, rng.gen_range(-1.0..1.0));
    for l in 1..=max_degree {
        for m in -(l as i64)..=(l as i64) {
            c[lm_index(l, m)] = 0.5 * rng.gen_range(-1.0..1.0);
        }
    }
    f.add(&SphereField::from_coeffs(grid, c))
}

/// Four random shapes normalised in `W^{n+2,p}`.
pub fn directions(grid: &Arc<SphereGrid<f64>>, seed: u64, max_degree: usize, norm: NormSpec) -> Directions<f64> {
    let mut r = rng(seed);
    let mut next = || shape(grid, &mut r, max_degree);
    Directions { f0: next(), ftt: next(), delta_f0: next(), delta_ftt: next() }.normalized(NormSpec { n: norm.n + 2, p: norm.p })
}

fn small_field(grid: &Arc<SphereGrid<f64>>, rng: &mut ChaCha8Rng, mean: f64, amp: f64, r0: f64) -> SphereField<f64> {
    let mut c = vec![0.0; grid.n_coeffs()];
    for l in 1..=4usize {
        for m in -(l as i64)..=(l as i64) {
            c[lm_index(l, m)] = amp * r0 * rng.gen_range(-1.0..1.0);
        }
    }
    SphereField::from_coeffs(grid, c).add(&SphereField::constant(grid, r0 * rng.gen_range(-mean..mean)))
}

fn default_perturbed(gauge: SchwarzschildGauge<f64>, eps: f64) -> Result<Spacetime<f64>> {
    Ok(Spacetime::perturbed(gauge, PerturbationRecipe::default().with_epsilon(eps))?)
}

fn run_check(id: &str, name: &str, f: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    match f() {
        Ok(v) => v,
        Err(e) => vec![Check::failed(id, name, &e)],
    }
}

/// `tr χ = 0` and `ω = 1/(4m)` on `s = 0` over a 10 × 10 grid in `(ū, θ)`.
pub fn horizon_identities(cfg: &RunConfig) -> Vec<Check> {
    run_check("1", "horizon identities", || {
        let gauge = cfg.gauge()?;
        let st = Spacetime::schwarzschild(gauge);
        let r0 = gauge.r0();
        let mut chi: f64 = 0.0;
        let mut omega: f64 = 0.0;
        for i in 0..10 {
            let u = gauge.tau * r0 * (-0.9 + 1.8 * i as f64 / 9.0);
            for j in 0..10 {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / 10.0;
                let c = st.coeffs(0.0, u, theta, 0.7)?;
                chi = chi.max(c.tr_chi.abs() * r0);
                omega = omega.max((c.omega - 0.25 / gauge.mass).abs() * r0);
            }
        }
        Ok(vec![Check::at_most("1", "horizon identities", chi.max(omega), 1e-12, format!("max |tr chi| r0 = {chi:e}, max |omega - 1/(4m)| r0 = {omega:e}"))])
    })
}

/// Residual of `(r − r₀) e^{r/r₀} = s e^{(s+ū+r₀)/r₀}` at random points.
pub fn transcendental_residual(cfg: &RunConfig) -> Vec<Check> {
    run_check("2", "area radius relation", || {
        let gauge = cfg.gauge()?;
        let r0 = gauge.r0();
        let mut r = rng(cfg.seed ^ 0x5eed_0002);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let s = gauge.kappa * r0 * r.gen_range(-1.0..1.0);
            let u = gauge.tau * r0 * r.gen_range(-0.999..0.999);
            let radius = gauge.area_radius(s, u)?;
            let lhs = (radius - r0) * (radius / r0).exp();
            let rhs = s * ((s + u + r0) / r0).exp();
            worst = worst.max((lhs - rhs).abs() / r0);
        }
        Ok(vec![Check::at_most("2", "area radius relation", worst, 1e-12, format!("max residual / r0 over 10000 points = {worst:e}"))])
    })
}

/// Largest `r₀ |tr χ̃̃′|` difference between the two-step and the direct path
/// over random charts, and the largest `lole + hile` split defect.
pub fn two_path_oracle(cfg: &RunConfig) -> Vec<Check> {
    let name = "two-path coefficient oracle";
    run_check("3", name, || {
        let gauge = cfg.gauge()?;
        let r0 = gauge.r0();
        let grid = SphereGrid::<f64>::new(ORACLE_BAND_LIMIT);
        let tcfg = cfg.transport_config();
        let providers = [Spacetime::schwarzschild(gauge), default_perturbed(gauge, 1e-3)?];
        let mut r = rng(cfg.seed ^ 0x5eed_0003);
        let mut jobs = Vec::new();
        for p in 0..providers.len() {
            for _ in 0..20 {
                let f0 = small_field(&grid, &mut r, 0.1, 0.005, r0);
                let ftt = small_field(&grid, &mut r, 0.05, 0.005, r0);
                jobs.push((p, f0, ftt));
            }
        }
        let results: Vec<(f64, f64)> = jobs
            .par_iter()
            .map(|(p, f0, ftt)| -> Result<(f64, f64)> {
                let st = &providers[*p];
                let chart = transported_chart(st, f0, ftt, &tcfg)?;
                let sc = surface_coeffs(st, &chart)?;
                let fbar = chart.fbar_tt.as_ref().expect("transported chart");
                let direct = direct_coeffs_general(st, ftt, fbar)?;
                Ok((sc.tr_chi_prime().sub(&direct.tr_chi_prime).sup_norm() * r0, sc.split_defect()))
            })
            .collect::<Result<_>>()?;
        let diff = results.iter().fold(0.0f64, |m, r| m.max(r.0));
        let split = results.iter().fold(0.0f64, |m, r| m.max(r.1));
        Ok(vec![
            Check::at_most("3", name, diff, 1e-6, format!("max r0 |tr chi' two-step - direct| over 2 x 20 charts at L = {ORACLE_BAND_LIMIT} = {diff:e}")),
            Check::at_most("inv.split", "low and high degree parts sum to the full coefficients", split, 1e-12, format!("max relative split defect = {split:e}")),
        ])
    })
}

/// One row of the eigencheck.
#[derive(Clone, Debug, Serialize)]
pub struct EigenRow {
    pub l: usize,
    pub m: i64,
    pub expected: f64,
    pub extrapolated: f64,
    pub relative_error: f64,
    /// Largest other coefficient of the difference quotient, relative to `expected`.
    pub leakage: f64,
}

/// Richardson-extrapolated central differences of `T(0, ·)` at zero along
/// each `Y_lm` with `l ≤ degree`.
pub fn eigen_rows(st: &Spacetime<f64>, cfg: &RunConfig) -> Result<Vec<EigenRow>> {
    let grid = cfg.grid();
    let r0 = st.r0();
    let h = cfg.gradcheck.eigen_step * r0;
    let tcfg = cfg.transport_config();
    let zero = SphereField::zeros(&grid);
    let modes: Vec<(usize, i64)> = (0..=cfg.gradcheck.eigen_degree).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m))).collect();
    modes
        .par_iter()
        .map(|&(l, m)| -> Result<EigenRow> {
            let quotient = |h: f64| -> Result<SphereField<f64>> {
                let plus = expansion_t(st, &zero, &SphereField::ylm(&grid, l, m, h), &tcfg)?;
                let minus = expansion_t(st, &zero, &SphereField::ylm(&grid, l, m, -h), &tcfg)?;
                Ok(plus.sub(&minus).scale(0.5 / h))
            };
            let coarse = quotient(h)?;
            let fine = quotient(0.5 * h)?;
            let rich = fine.lincomb(4.0 / 3.0, &coarse, -1.0 / 3.0);
            let expected = 2.0 / (r0 * r0) * (1.0 + (l * (l + 1)) as f64);
            let k = lm_index(l, m);
            let extrapolated = rich.coeffs()[k];
            let leakage = rich.coeffs().iter().enumerate().filter(|(i, _)| *i != k).fold(0.0f64, |a, (_, c)| a.max(c.abs())) / expected;
            Ok(EigenRow { l, m, expected, extrapolated, relative_error: (extrapolated - expected).abs() / expected, leakage })
        })
        .collect()
}

pub fn eigencheck(cfg: &RunConfig) -> Vec<Check> {
    let name = "vertical derivative eigenvalues at the horizon section";
    run_check("4", name, || {
        let st = Spacetime::schwarzschild(cfg.gauge()?);
        let rows = eigen_rows(&st, cfg)?;
        let err = rows.iter().fold(0.0f64, |a, r| a.max(r.relative_error.max(r.leakage)));
        Ok(vec![Check::at_most("4", name, err, 1e-6, format!("max relative error over {} modes with l <= {} = {err:e}", rows.len(), cfg.gradcheck.eigen_degree))])
    })
}

/// Remainder and difference quotient series of one spacetime.
pub fn gradient_series(st: &Spacetime<f64>, cfg: &RunConfig, seed: u64) -> Result<Vec<SlopeSeries>> {
    let g = &cfg.gradcheck;
    let grid = cfg.grid();
    let r0 = st.r0();
    let set = CheckSettings { anchor: [g.anchor[0] * r0, g.anchor[1] * r0], norm: NormSpec { n: g.norm_n, p: cfg.norm.p }, transport: cfg.transport_config() };
    let dirs = directions(&grid, seed, g.max_degree, cfg.norm());
    let amps: Vec<f64> = g.amplitudes.iter().map(|a| a * r0).collect();
    let mut series = linearization_remainders(st, &dirs, &amps, &set)?;
    let base = |f: &SphereField<f64>| f.scale(g.base_scale * r0).add(&SphereField::constant(&grid, g.base_offset * r0));
    let steps: Vec<f64> = g.steps.iter().map(|h| h * r0).collect();
    series.extend(difference_quotients(st, &base(&dirs.f0), &base(&dirs.ftt), &dirs, &steps, &set)?);
    Ok(series)
}

pub fn gradient_checks(cfg: &RunConfig) -> Vec<Check> {
    let name = "quadratic remainders of the linearisations";
    run_check("5", name, || {
        let gauge = cfg.gauge()?;
        let sch = Spacetime::schwarzschild(gauge);
        let pert = default_perturbed(gauge, 1e-3)?;
        let jobs = [(&sch, cfg.seed), (&sch, cfg.seed.wrapping_add(1))];
        let mut all: Vec<SlopeSeries> = jobs.par_iter().map(|(st, seed)| gradient_series(st, cfg, *seed)).collect::<Result<Vec<_>>>()?.concat();
        let grid = cfg.grid();
        let r0 = gauge.r0();
        let g = &cfg.gradcheck;
        let dirs = directions(&grid, cfg.seed.wrapping_add(2), g.max_degree, cfg.norm());
        let base = |f: &SphereField<f64>| f.scale(g.base_scale * r0).add(&SphereField::constant(&grid, g.base_offset * r0));
        let set = CheckSettings { anchor: [0.0, 0.0], norm: NormSpec { n: g.norm_n, p: cfg.norm.p }, transport: cfg.transport_config() };
        let steps: Vec<f64> = g.steps.iter().map(|h| h * r0).collect();
        all.extend(difference_quotients(&pert, &base(&dirs.f0), &base(&dirs.ftt), &dirs, &steps, &set)?);
        let worst = all.iter().fold(0.0f64, |a, s| a.max((s.slope - 2.0).abs()));
        let slopes: Vec<String> = all.iter().map(|s| format!("{}={:.3}", s.name, s.slope)).collect();
        Ok(vec![Check::at_most("5", name, worst, 0.1, format!("max |slope - 2| = {worst:.4} ({})", slopes.join(" ")))])
    })
}

/// Admissible `(f̄₀, f̃̃⁰)` pairs in units of `r₀`.
pub const SCHWARZSCHILD_PAIRS: [(&str, &str); 5] = [
    ("0", "0.01*Y(2,0)"),
    ("0.01 + 0.01*Y(1,0)", "0"),
    ("0.002*Y(2,1)", "-0.02 + 0.01*Y(1,1)"),
    ("-0.03 + 0.002*Y(2,2)", "0.005*Y(3,2)"),
    ("0.02 - 0.001*Y(3,0) + 0.003*Y(1,-1)", "0.03"),
];

fn field(expr: &str, grid: &Arc<SphereGrid<f64>>, r0: f64) -> Result<SphereField<f64>> {
    crate::field::parse_expression(expr).and_then(|e| e.build(grid, r0)).map_err(anyhow::Error::msg)
}

pub fn schwarzschild_uniqueness(cfg: &RunConfig) -> Vec<Check> {
    let name = "Schwarzschild horizon cross-sections are the unique MOTS";
    run_check("6", name, || {
        let st = Spacetime::schwarzschild(cfg.gauge()?);
        let r0 = st.r0();
        let grid = cfg.grid();
        let scfg = cfg.solver_config();
        let reports: Vec<MotsReport<f64>> = SCHWARZSCHILD_PAIRS
            .par_iter()
            .map(|(f0, seed)| -> Result<MotsReport<f64>> { Ok(find_mots(&st, &field(f0, &grid, r0)?, &field(seed, &grid, r0)?, &scfg)?) })
            .collect::<Result<_>>()?;
        let converged = reports.iter().filter(|r| r.converged()).count();
        let size = reports.iter().fold(0.0f64, |a, r| a.max(if r.converged() { r.ftt.sup_norm() / r0 } else { f64::INFINITY }));
        Ok(vec![Check::at_most("6", name, size, 1e-10, format!("{converged}/5 converged, max sup |ftt| / r0 = {size:e}"))])
    })
}

/// `f̄₀` of sup norm `0.01·r₀`.
pub fn perturbed_incoming(grid: &Arc<SphereGrid<f64>>, r0: f64) -> SphereField<f64> {
    let y = SphereField::ylm(grid, 1, 0, 1.0);
    let shape = SphereField::constant(grid, 0.5).add(&y.scale(0.5 / y.sup_norm()));
    shape.scale(0.01 * r0 / shape.sup_norm())
}

pub fn perturbed_existence(cfg: &RunConfig) -> Vec<Check> {
    let name = "existence and uniqueness on the perturbed background";
    run_check("7", name, || {
        let st = default_perturbed(cfg.gauge()?, 1e-3)?;
        let r0 = st.r0();
        let grid = cfg.grid();
        let scfg = cfg.solver_config();
        let f0 = perturbed_incoming(&grid, r0);
        let seeds = [SphereField::zeros(&grid), field("0.005 + 0.01*Y(2,0)", &grid, r0)?];
        let reports: Vec<MotsReport<f64>> = seeds.par_iter().map(|s| find_mots(&st, &f0, s, &scfg)).collect::<std::result::Result<_, _>>()?;
        let converged = reports.iter().all(|r| r.converged());
        let residual = reports.iter().fold(0.0f64, |a, r| a.max(r.final_residual() * r0));
        let plateau = reports.iter().fold(0.0f64, |a, r| a.max(r.plateau(1)));
        let distance = reports[0].ftt.sub(&reports[1].ftt).sup_norm() / r0;
        let value = if converged { (residual / 1e-9).max(plateau / 0.1).max(distance / 1e-8) } else { f64::INFINITY };
        let solution = &reports[0].ftt;
        let again = expansion_t(&st, &f0, solution, &scfg.transport)?.sobolev_norm(scfg.norm) * r0;
        let pair = compare_limits(reports.clone(), r0, &scfg)?;
        Ok(vec![
            Check::at_most(
                "7",
                name,
                value,
                1.0,
                format!(
                    "converged = {converged}, iterations = {:?}, residual r0 = {residual:e} (<= 1e-9), plateau = {plateau:e} (<= 0.1), seed distance / r0 = {distance:e} (<= 1e-8); value is the largest ratio to its bound",
                    reports.iter().map(|r| r.iterations).collect::<Vec<_>>()
                ),
            ),
            Check::at_most("inv.residual", "re-evaluated residual matches the report", again, 2.0 * scfg.tol, format!("r0 |T| at the returned solution = {again:e}")),
            Check::at_most("inv.uniqueness", "limits from two seeds agree in W^{n+1,p}", pair.max_distance(), pair.threshold, format!("distance = {:e}", pair.max_distance())),
        ])
    })
}

/// One row of an `ε` sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub high_norm: f64,
    pub sup_norm: f64,
    pub iterations: usize,
    pub final_residual: f64,
}

pub fn sweep_row(eps: f64, report: &MotsReport<f64>, high: NormSpec) -> SweepRow {
    SweepRow { epsilon: eps, high_norm: report.ftt.sobolev_norm(high), sup_norm: report.ftt.sup_norm(), iterations: report.iterations, final_residual: report.final_residual() }
}

pub fn epsilon_scaling(cfg: &RunConfig) -> Vec<Check> {
    let name = "solution map is linear in epsilon";
    run_check("8", name, || {
        let gauge = cfg.gauge()?;
        let r0 = gauge.r0();
        let grid = cfg.grid();
        let scfg = cfg.solver_config();
        let f0 = field("0.01 + 0.01*Y(1,0)", &grid, r0)?;
        let high = NormSpec { n: scfg.norm.n + 2, p: scfg.norm.p };
        let eps = [1e-2, 1e-3, 1e-4];
        let rows: Vec<SweepRow> = eps
            .par_iter()
            .map(|&e| -> Result<SweepRow> { Ok(sweep_row(e, &map_f(&default_perturbed(gauge, e)?, &f0, &scfg)?, high)) })
            .collect::<Result<_>>()?;
        let slope = fit_slope(&eps, &rows.iter().map(|r| r.high_norm).collect::<Vec<_>>());
        Ok(vec![Check::at_most("8", name, (slope - 1.0).abs(), 0.2, format!("fitted slope = {slope:.4}"))])
    })
}

pub fn transport_oracle(cfg: &RunConfig) -> Vec<Check> {
    let name = "transport agrees with characteristics";
    run_check("9", name, || {
        let st = Spacetime::schwarzschild(cfg.gauge()?);
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(ORACLE_BAND_LIMIT);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.01 * r0).add(&SphereField::ylm(&grid, 2, 1, 0.005 * r0));
        let s_end = 0.1 * r0;
        let fol = transport_foliation(&st, &f0, &[s_end], &cfg.transport_config(), &FoliationOptions::default())?;
        let fs = &fol.fields[0];
        let [gt, gp] = f0.grad();
        let nodes: Vec<(usize, (f64, f64))> = grid.nodes().enumerate().collect();
        let errs: Vec<f64> = nodes
            .par_iter()
            .map(|&(k, (th, ph))| -> Result<f64> {
                let start = Characteristic { theta: th, phi: ph, u: f0.values()[k], p: [gt[k], gp[k]] };
                let end = characteristic(&st, start, s_end, 200)?;
                Ok((fs.eval(end.theta, end.phi) - end.u).abs() / r0)
            })
            .collect::<Result<_>>()?;
        let worst = errs.iter().fold(0.0f64, |a, &e| a.max(e));
        Ok(vec![Check::at_most("9", name, worst, 1e-8, format!("max |fbar - u| / r0 over {} characteristics at s = 0.1 r0, L = {ORACLE_BAND_LIMIT} = {worst:e}", nodes.len()))])
    })
}

/// Cheap invariants of the lower layers.
pub fn invariants(cfg: &RunConfig) -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(run_check("inv.transform", "spectral transforms round trip", || {
        let grid = cfg.grid();
        let f = shape(&grid, &mut rng(cfg.seed ^ 0x5eed_0010), grid.l_max());
        let back = SphereField::from_values(&grid, f.values());
        let err = back.coeffs().iter().zip(f.coeffs()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        Ok(vec![Check::at_most("inv.transform", "spectral transforms round trip", err, 1e-13, format!("max coefficient change = {err:e}"))])
    }));
    out.extend(run_check("inv.horizon_radius", "the area radius is r0 on the horizon", || {
        let gauge = cfg.gauge()?;
        let r0 = gauge.r0();
        let err = (0..101).try_fold(0.0f64, |a, i| -> Result<f64> {
            let u = gauge.tau * r0 * (-0.99 + 1.98 * i as f64 / 100.0);
            Ok(a.max((gauge.area_radius(0.0, u)? - r0).abs() / r0))
        })?;
        Ok(vec![Check::at_most("inv.horizon_radius", "the area radius is r0 on the horizon", err, 1e-13, format!("max |r - r0| / r0 = {err:e}"))])
    }));
    out.extend(run_check("inv.envelopes", "default recipe respects its envelopes", || {
        let gauge = cfg.gauge()?;
        let st = default_perturbed(gauge, 1e-3)?;
        let report = st.validate_envelopes(&EnvelopeSampling::uniform(&gauge, cfg.validate.samples, 8))?;
        Ok(vec![Check::at_most("inv.envelopes", "default recipe respects its envelopes", report.max_ratio(), 1.0, format!("worst ratio over {} rows", report.rows.len()))])
    }));
    out.extend(run_check("inv.marginal", "the horizon section stays marginally trapped", || {
        let gauge = cfg.gauge()?;
        let st = default_perturbed(gauge, 1e-2)?;
        let r0 = gauge.r0();
        let grid = cfg.grid();
        let mut worst: f64 = 0.0;
        for (th, ph) in grid.nodes() {
            worst = worst.max(st.coeffs(0.0, 0.0, th, ph)?.tr_chi.abs() * r0);
        }
        Ok(vec![Check::at_most("inv.marginal", "the horizon section stays marginally trapped", worst, 1e-12, format!("max r0 |tr chi| on the section at eps = 1e-2 = {worst:e}"))])
    }));
    out.extend(run_check("inv.inverse", "vertical operator inversion", || {
        let gauge = cfg.gauge()?;
        let st = default_perturbed(gauge, 1e-3)?;
        let r0 = gauge.r0();
        let grid = cfg.grid();
        let mut r = rng(cfg.seed ^ 0x5eed_0011);
        let f0 = small_field(&grid, &mut r, 0.05, 0.002, r0);
        let ftt = small_field(&grid, &mut r, 0.05, 0.002, r0);
        let chart = transported_chart(&st, &f0, &ftt, &cfg.transport_config())?;
        let op = VerticalOperator::from_chart(&st, &chart)?;
        let rhs = shape(&grid, &mut r, 6);
        let (x, stats) = op.invert(&rhs, &cfg.solver_config().inversion)?;
        let err = op.apply(&x).sub(&rhs).l2_norm() / rhs.l2_norm();
        Ok(vec![Check::at_most("inv.inverse", "vertical operator inversion", err, 1e-10, format!("relative residual = {err:e} after {} iterations", stats.iterations))])
    }));
    out
}

/// Every check in a fixed order.
pub fn all_checks(cfg: &RunConfig, mut progress: impl FnMut(&[Check])) -> Vec<Check> {
    let stages: [fn(&RunConfig) -> Vec<Check>; 10] = [
        horizon_identities,
        transcendental_residual,
        two_path_oracle,
        eigencheck,
        gradient_checks,
        schwarzschild_uniqueness,
        perturbed_existence,
        epsilon_scaling,
        transport_oracle,
        invariants,
    ];
    let mut out = Vec::new();
    for stage in stages {
        let checks = stage(cfg);
        progress(&checks);
        out.extend(checks);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass_on_defaults() {
        let cfg = RunConfig::default();
        for c in horizon_identities(&cfg).iter().chain(&transcendental_residual(&cfg)).chain(&invariants(&cfg)) {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn failures_are_reported_not_raised() {
        let mut cfg = RunConfig::default();
        cfg.background.mass = -1.0;
        let c = horizon_identities(&cfg);
        assert_eq!(c.len(), 1);
        assert!(!c[0].passed);
        assert!(c[0].detail.starts_with("error:"));
    }

    #[test]
    fn shapes_are_seeded() {
        let grid = SphereGrid::new(6);
        let a = shape(&grid, &mut rng(3), 3);
        let b = shape(&grid, &mut rng(3), 3);
        assert_eq!(a.coeffs(), b.coeffs());
        assert_eq!(a.coeff(4, 0), 0.0);
    }

    #[test]
    fn incoming_surface_has_the_requested_size() {
        let grid = SphereGrid::new(12);
        let f = perturbed_incoming(&grid, 2.0);
        assert!((f.sup_norm() - 0.02).abs() < 1e-15);
    }
}
