//! Subcommand implementations.

use std::path::PathBuf;

use anyhow::{bail, Result};
use motsdn::geometry::{direct_coeffs_general, surface_coeffs, transported_chart};
use motsdn::linearizer::check::fit_slope;
use motsdn::provider::{EnvelopeSampling, Spacetime};
use motsdn::solver::{compare_limits, find_mots, map_f, MotsReport};
use motsdn::sphere::NormSpec;
use motsdn::transport::{transport_foliation, FoliationOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{self, Check};
use crate::config::{parse_grid, parse_list, ConfigError, FieldSpec, ProviderKind, ProviderSection, RunConfig};
use crate::output::{Cell, Csv, OutputDir};
use crate::{Command, NumericalFailure, ProviderArgs};

fn apply_provider(p: &ProviderArgs, cfg: &mut RunConfig) {
    if let Some(r) = &p.recipe {
        cfg.use_recipe_arg(r);
    }
    if let Some(eps) = p.eps {
        cfg.use_epsilon(eps);
    }
}

fn apply_field(arg: &Option<String>, slot: &mut FieldSpec) {
    if let Some(a) = arg {
        *slot = FieldSpec::Text(a.clone());
    }
}

/// Folds command line flags into the configuration.
pub fn apply_overrides(cmd: &Command, cfg: &mut RunConfig) -> Result<(), ConfigError> {
    match cmd {
        Command::Background { m, s_grid, us_grid } => {
            if let Some(m) = m {
                cfg.background.mass = *m;
            }
            if let Some(g) = s_grid {
                cfg.table.s_grid = g.clone();
            }
            if let Some(g) = us_grid {
                cfg.table.us_grid = g.clone();
            }
        }
        Command::Validate { provider } | Command::Gradcheck { provider } => apply_provider(provider, cfg),
        Command::Transport { provider, f0, s } => {
            apply_provider(provider, cfg);
            apply_field(f0, &mut cfg.surface.f0);
            if let Some(s) = s {
                cfg.surface.s = *s;
            }
        }
        Command::Expansion { provider, f0, ftt } => {
            apply_provider(provider, cfg);
            apply_field(f0, &mut cfg.surface.f0);
            apply_field(ftt, &mut cfg.surface.ftt);
        }
        Command::FindMots { provider, f0, seed_field, tol } => {
            apply_provider(provider, cfg);
            apply_field(f0, &mut cfg.surface.f0);
            apply_field(seed_field, &mut cfg.surface.seed_field);
            if let Some(t) = tol {
                cfg.solver.tol = *t;
            }
        }
        Command::Uniqueness { provider, f0, seeds } => {
            apply_provider(provider, cfg);
            apply_field(f0, &mut cfg.surface.f0);
            if !seeds.is_empty() {
                cfg.surface.seeds = seeds.iter().map(|s| FieldSpec::Text(s.clone())).collect();
            }
            if cfg.surface.seeds.len() < 2 {
                return Err(ConfigError("uniqueness needs at least two seeds".into()));
            }
        }
        Command::SweepEps { recipe_template, eps, f0 } => {
            if let Some(list) = eps {
                cfg.sweep.epsilons = parse_list(list)?;
            }
            if let Some(path) = recipe_template {
                let first = cfg.sweep.epsilons.first().copied();
                cfg.provider = ProviderSection { kind: ProviderKind::Perturbed, recipe_file: Some(PathBuf::from(path)), epsilon: first, recipe: None };
            } else if cfg.provider.kind == ProviderKind::Schwarzschild {
                cfg.provider.kind = ProviderKind::Perturbed;
            }
            apply_field(f0, &mut cfg.surface.f0);
        }
        Command::Verify => {}
    }
    Ok(())
}

/// Runs a subcommand against a resolved configuration.
pub fn execute(cmd: &Command, cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    match cmd {
        Command::Background { .. } => background(cfg, out),
        Command::Validate { .. } => validate(cfg, out),
        Command::Transport { .. } => transport(cfg, out),
        Command::Expansion { .. } => expansion(cfg, out),
        Command::Gradcheck { .. } => gradcheck(cfg, out),
        Command::FindMots { .. } => find(cfg, out),
        Command::Uniqueness { .. } => uniqueness(cfg, out),
        Command::SweepEps { .. } => sweep(cfg, out),
        Command::Verify => verify(cfg, out),
    }
}

fn background(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let gauge = cfg.gauge()?;
    let r0 = gauge.r0();
    let s_values = parse_grid(&cfg.table.s_grid)?;
    let u_values = parse_grid(&cfg.table.us_grid)?;
    for &s in &s_values {
        for &u in &u_values {
            if !gauge.contains(s * r0, u * r0) {
                return Err(ConfigError(format!("grid point (s, us) = ({s}, {u}) r0 lies outside |s| <= kappa r0, |us| < tau r0")).into());
            }
        }
    }
    let mut csv = Csv::new(&["s", "us", "r", "omega2", "trchi", "trchibar", "omega", "omegabar", "trchiprime", "ds_trchiprime", "dus_trchiprime"]);
    for &s in &s_values {
        for &u in &u_values {
            let (s, u) = (s * r0, u * r0);
            let p = gauge.point(s, u)?;
            let (ds, du) = gauge.trchi_prime_partials(s, u)?;
            csv.row(&[s, u, p.r, p.omega2, p.tr_chi, p.tr_chibar, p.omega, p.omegabar, p.tr_chi_prime, ds, du].map(Cell::Num));
        }
    }
    out.write("background.csv", csv.as_bytes())?;
    println!("background: {} rows in {}", s_values.len() * u_values.len(), out.root().join("background.csv").display());
    Ok(())
}

fn validate(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let gauge = cfg.gauge()?;
    let st = cfg.spacetime()?;
    let report = st.validate_envelopes(&EnvelopeSampling::uniform(&gauge, cfg.validate.samples, cfg.grid.band_limit))?;
    let text = report.to_csv();
    out.write("envelopes.csv", text.as_bytes())?;
    print!("{text}");
    #[derive(Serialize)]
    struct Summary {
        epsilon: f64,
        passed: bool,
        max_ratio: f64,
    }
    out.write_json("summary.json", &Summary { epsilon: report.epsilon, passed: report.passed(), max_ratio: report.max_ratio() })?;
    if !report.passed() {
        bail!(NumericalFailure(format!("envelope violated, worst ratio {:e}", report.max_ratio())));
    }
    Ok(())
}

fn transport(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let st = cfg.spacetime()?;
    let r0 = st.r0();
    let grid = cfg.grid();
    let f0 = cfg.surface.f0.build(&grid, r0)?;
    let s = cfg.surface.s * r0;
    let opts = FoliationOptions { norm: Some(cfg.norm()), budget: None };
    let fol = transport_foliation(&st, &f0, &[s], &cfg.transport_config(), &opts)?;
    let fs = &fol.fields[0];
    out.write_field("fbar.json", fs)?;
    let mut csv = Csv::new(&["s", "mean", "min", "dnorm"]);
    for d in &fol.diagnostics {
        csv.row(&[d.s, d.mean, d.min, d.grad_norm].map(Cell::Num));
    }
    out.write("steps.csv", csv.as_bytes())?;
    #[derive(Serialize)]
    struct Summary<'a> {
        s: f64,
        mean: f64,
        sup_norm: f64,
        warnings: &'a [String],
    }
    out.write_json("summary.json", &Summary { s, mean: fs.mean(), sup_norm: fs.sup_norm(), warnings: &fol.warnings })?;
    for w in &fol.warnings {
        eprintln!("warning: {w}");
    }
    println!("transport: fbar at s = {s:e} has mean {:e}", fs.mean());
    Ok(())
}

fn expansion(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let st = cfg.spacetime()?;
    let r0 = st.r0();
    let grid = cfg.grid();
    let f0 = cfg.surface.f0.build(&grid, r0)?;
    let ftt = cfg.surface.ftt.build(&grid, r0)?;
    let chart = transported_chart(&st, &f0, &ftt, &cfg.transport_config())?;
    let sc = surface_coeffs(&st, &chart)?;
    let fbar = chart.fbar_tt.as_ref().expect("transported chart");
    let direct = direct_coeffs_general(&st, &ftt, fbar)?;
    let full = sc.tr_chi_prime();
    let split = &sc.tr_chi_prime;
    out.write_field("tr_chi_prime.json", full)?;
    out.write_field("tr_chi_prime_lole.json", &split.lole)?;
    out.write_field("tr_chi_prime_hile.json", &split.hile)?;
    out.write_field("fbar.json", fbar)?;
    let mut csv = Csv::new(&["quantity", "n", "p", "norm"]);
    let p = cfg.norm.p;
    for (name, f) in [("tr_chi_prime", full), ("lole", &split.lole), ("hile", &split.hile)] {
        for n in 0..=cfg.norm.n {
            csv.row(&[Cell::Text(name), Cell::Int(n as i64), Cell::Num(p), Cell::Num(f.sobolev_norm(NormSpec { n, p }))]);
        }
        csv.row(&[Cell::Text(name), Cell::Int(0), Cell::Text("inf"), Cell::Num(f.sup_norm())]);
    }
    out.write("norms.csv", csv.as_bytes())?;
    #[derive(Serialize)]
    struct Summary {
        direct_path_difference: f64,
        split_defect: f64,
        mean: f64,
    }
    let summary = Summary { direct_path_difference: full.sub(&direct.tr_chi_prime).sup_norm(), split_defect: sc.split_defect(), mean: full.mean() };
    out.write_json("summary.json", &summary)?;
    println!("expansion: mean tr chi' = {:e}, two-path difference {:e}", summary.mean, summary.direct_path_difference);
    Ok(())
}

fn gradcheck(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let st = cfg.spacetime()?;
    let series = checks::gradient_series(&st, cfg, cfg.seed)?;
    let mut csv = Csv::new(&["series", "h", "error", "slope"]);
    for s in &series {
        for (h, e) in s.amplitudes.iter().zip(&s.errors) {
            csv.row(&[Cell::Text(&s.name), Cell::Num(*h), Cell::Num(*e), Cell::Num(s.slope)]);
        }
    }
    out.write("gradcheck.csv", csv.as_bytes())?;
    let rows = checks::eigen_rows(&Spacetime::schwarzschild(cfg.gauge()?), cfg)?;
    let mut eig = Csv::new(&["l", "m", "expected", "extrapolated", "relative_error", "leakage"]);
    for r in &rows {
        eig.row(&[Cell::Int(r.l as i64), Cell::Int(r.m), Cell::Num(r.expected), Cell::Num(r.extrapolated), Cell::Num(r.relative_error), Cell::Num(r.leakage)]);
    }
    out.write("eigen.csv", eig.as_bytes())?;
    #[derive(Serialize)]
    struct Summary {
        seed: u64,
        slopes: Vec<(String, f64)>,
        slopes_within_tolerance: bool,
        eigen_max_relative_error: f64,
    }
    let summary = Summary {
        seed: cfg.seed,
        slopes: series.iter().map(|s| (s.name.clone(), s.slope)).collect(),
        slopes_within_tolerance: series.iter().all(|s| s.within(2.0, 0.1)),
        eigen_max_relative_error: rows.iter().fold(0.0, |a, r| a.max(r.relative_error)),
    };
    out.write_json("summary.json", &summary)?;
    for (name, slope) in &summary.slopes {
        println!("gradcheck: {name:<14} slope {slope:.4}");
    }
    println!("gradcheck: eigencheck max relative error {:e}", summary.eigen_max_relative_error);
    Ok(())
}

fn write_run(out: &mut OutputDir, report: &MotsReport<f64>) -> Result<()> {
    out.write_json("report.json", &report.record())?;
    let mut csv = Csv::new(&["k", "residual", "correction", "contraction", "high_norm", "mean_ratio"]);
    for k in 0..report.residual_history.len() {
        let at = |v: &Vec<f64>, i: Option<usize>| i.and_then(|i| v.get(i)).copied().unwrap_or(f64::NAN);
        csv.row(&[
            Cell::Int(k as i64),
            Cell::Num(report.residual_history[k]),
            Cell::Num(at(&report.correction_history, Some(k))),
            Cell::Num(at(&report.contraction_ratios, k.checked_sub(1))),
            Cell::Num(at(&report.high_norm_history, Some(k))),
            Cell::Num(at(&report.mean_ratio_history, Some(k))),
        ]);
    }
    out.write("residuals.csv", csv.as_bytes())
}

fn find(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let st = cfg.spacetime()?;
    let r0 = st.r0();
    let grid = cfg.grid();
    let f0 = cfg.surface.f0.build(&grid, r0)?;
    let seed = cfg.surface.seed_field.build(&grid, r0)?;
    let report = find_mots(&st, &f0, &seed, &cfg.solver_config())?;
    write_run(out, &report)?;
    out.write_field("solution.json", &report.ftt)?;
    println!(
        "find-mots: {:?} after {} iterations, residual {:e}, sup |ftt| / r0 = {:e}",
        report.status,
        report.iterations,
        report.final_residual(),
        report.ftt.sup_norm() / r0
    );
    if !report.converged() {
        bail!(NumericalFailure(format!("MOTS iteration ended with status {:?}", report.status)));
    }
    Ok(())
}

fn uniqueness(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let st = cfg.spacetime()?;
    let r0 = st.r0();
    let grid = cfg.grid();
    let f0 = cfg.surface.f0.build(&grid, r0)?;
    let scfg = cfg.solver_config();
    let seeds = cfg.surface.seeds.iter().map(|s| s.build(&grid, r0)).collect::<Result<Vec<_>, _>>()?;
    let subs = (0..seeds.len()).map(|i| out.subdir(&format!("seed_{i}"))).collect::<Result<Vec<_>>>()?;
    let runs: Vec<(OutputDir, MotsReport<f64>)> = seeds
        .par_iter()
        .zip(subs)
        .map(|(seed, mut sub)| -> Result<(OutputDir, MotsReport<f64>)> {
            let rep = find_mots(&st, &f0, seed, &scfg)?;
            write_run(&mut sub, &rep)?;
            Ok((sub, rep))
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(runs.len());
    for (sub, rep) in runs {
        out.absorb(sub);
        reports.push(rep);
    }
    let rep = compare_limits(reports, r0, &scfg)?;
    out.write_json("uniqueness.json", &rep.record())?;
    let mut csv = Csv::new(&["i", "j", "distance"]);
    for &(i, j, d) in &rep.distances {
        csv.row(&[Cell::Int(i as i64), Cell::Int(j as i64), Cell::Num(d)]);
    }
    out.write("distances.csv", csv.as_bytes())?;
    println!("uniqueness: max distance {:e} (threshold {:e})", rep.max_distance(), rep.threshold);
    if !rep.passed() {
        bail!(NumericalFailure(format!("limits differ by {:e}", rep.max_distance())));
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let gauge = cfg.gauge()?;
    let r0 = gauge.r0();
    let grid = cfg.grid();
    let f0 = cfg.surface.f0.build(&grid, r0)?;
    let scfg = cfg.solver_config();
    let high = NormSpec { n: scfg.norm.n + 2, p: scfg.norm.p };
    let template = cfg.recipe().cloned().unwrap_or_default();
    let eps = &cfg.sweep.epsilons;
    let subs = (0..eps.len()).map(|i| out.subdir(&format!("eps_{i}"))).collect::<Result<Vec<_>>>()?;
    let runs: Vec<(OutputDir, checks::SweepRow)> = eps
        .par_iter()
        .zip(subs)
        .map(|(&e, mut sub)| -> Result<(OutputDir, checks::SweepRow)> {
            let st = Spacetime::perturbed(gauge, template.with_epsilon(e))?;
            let rep = map_f(&st, &f0, &scfg)?;
            write_run(&mut sub, &rep)?;
            Ok((sub, checks::sweep_row(e, &rep, high)))
        })
        .collect::<Result<_>>()?;
    let mut csv = Csv::new(&["epsilon", "high_norm", "sup_norm", "iterations", "final_residual"]);
    let mut rows = Vec::new();
    for (sub, row) in runs {
        out.absorb(sub);
        csv.row(&[Cell::Num(row.epsilon), Cell::Num(row.high_norm), Cell::Num(row.sup_norm), Cell::Int(row.iterations as i64), Cell::Num(row.final_residual)]);
        rows.push(row);
    }
    out.write("sweep.csv", csv.as_bytes())?;
    if rows.len() >= 2 {
        let mut fit = Csv::new(&["quantity", "slope", "points"]);
        let xs: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        for (name, ys) in [("high_norm", rows.iter().map(|r| r.high_norm).collect::<Vec<_>>()), ("sup_norm", rows.iter().map(|r| r.sup_norm).collect())] {
            let slope = fit_slope(&xs, &ys);
            fit.row(&[Cell::Text(name), Cell::Num(slope), Cell::Int(rows.len() as i64)]);
            println!("sweep-eps: {name} slope {slope:.4}");
        }
        out.write("fit.csv", fit.as_bytes())?;
    }
    Ok(())
}

/// Report of `verify`.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn quoted(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

fn verify(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let checks = checks::all_checks(cfg, |batch| {
        for c in batch {
            println!("{} {:<16} {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name);
        }
    });
    let report = VerifyReport { passed: checks.iter().all(|c| c.passed), checks };
    out.write_json("verify.json", &report)?;
    let mut csv = Csv::new(&["id", "name", "passed", "value", "threshold", "detail"]);
    for c in &report.checks {
        let (name, detail) = (quoted(&c.name), quoted(&c.detail));
        csv.row(&[Cell::Text(&c.id), Cell::Text(&name), Cell::Bool(c.passed), Cell::Num(c.value), Cell::Num(c.threshold), Cell::Text(&detail)]);
    }
    out.write("verify.csv", csv.as_bytes())?;
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
        bail!(NumericalFailure(format!("checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_land_in_the_config() {
        let mut cfg = RunConfig::default();
        let cmd = Command::FindMots {
            provider: ProviderArgs { recipe: Some("default".into()), eps: Some(1e-2) },
            f0: Some("0.02*Y(1,0)".into()),
            seed_field: None,
            tol: Some(1e-10),
        };
        apply_overrides(&cmd, &mut cfg).unwrap();
        let cfg = cfg.resolve(&mut Vec::new()).unwrap();
        assert_eq!(cfg.recipe().unwrap().epsilon, 1e-2);
        assert_eq!(cfg.solver.tol, 1e-10);
        assert_eq!(cfg.surface.f0, FieldSpec::expr("0.02*Y(1,0)"));
    }

    #[test]
    fn uniqueness_needs_two_seeds() {
        let mut cfg = RunConfig::default();
        let cmd = Command::Uniqueness { provider: ProviderArgs { recipe: None, eps: None }, f0: None, seeds: vec!["0".into()] };
        assert!(apply_overrides(&cmd, &mut cfg).is_err());
    }

    #[test]
    fn sweep_defaults_to_the_built_in_recipe() {
        let mut cfg = RunConfig::default();
        let cmd = Command::SweepEps { recipe_template: None, eps: Some("1e-3,1e-4".into()), f0: None };
        apply_overrides(&cmd, &mut cfg).unwrap();
        let cfg = cfg.resolve(&mut Vec::new()).unwrap();
        assert_eq!(cfg.sweep.epsilons, vec![1e-3, 1e-4]);
        assert!(cfg.recipe().is_some());
    }

    #[test]
    fn csv_quoting_escapes_quotes() {
        assert_eq!(quoted("a, \"b\""), "\"a, \"\"b\"\"\"");
    }
}
