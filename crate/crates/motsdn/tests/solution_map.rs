use std::sync::Arc;

use motsdn::background::SchwarzschildGauge;
use motsdn::linearizer::check::fit_slope;
use motsdn::provider::{PerturbationRecipe, Spacetime};
use motsdn::solver::{linearized_map, map_f, SolverConfig};
use motsdn::sphere::{NormSpec, SphereField, SphereGrid};

const R0: f64 = 2.0;
const EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn perturbed(eps: f64) -> Spacetime<f64> {
    let gauge = SchwarzschildGauge::new(1.0, 0.25, 0.5).unwrap();
    Spacetime::perturbed(gauge, PerturbationRecipe::default().with_epsilon(eps)).unwrap()
}

fn incoming(g: &Arc<SphereGrid<f64>>) -> SphereField<f64> {
    SphereField::constant(g, 0.01 * R0).add(&SphereField::ylm(g, 1, 0, 0.01 * R0))
}

fn high(cfg: &SolverConfig, k: usize) -> NormSpec {
    NormSpec { n: cfg.norm.n + k, p: cfg.norm.p }
}

#[test]
fn solution_map_is_linear_in_epsilon() {
    let g = SphereGrid::new(12);
    let cfg = SolverConfig::default();
    let f0 = incoming(&g);
    let sizes: Vec<f64> = EPSILONS.iter().map(|&e| map_f(&perturbed(e), &f0, &cfg).unwrap().ftt.sobolev_norm(high(&cfg, 2))).collect();
    let slope = fit_slope(&EPSILONS, &sizes);
    assert!((slope - 1.0).abs() <= 0.2, "slope {slope} sizes {sizes:?}");
    let f0_size = f0.sobolev_norm(high(&cfg, 2));
    for (e, s) in EPSILONS.iter().zip(&sizes) {
        assert!(s / (e * f0_size) < 10.0);
    }
}

#[test]
fn frozen_linearisation_error_is_proportional_to_epsilon() {
    let g = SphereGrid::new(12);
    let cfg = SolverConfig::default();
    let f0 = incoming(&g);
    let delta = SphereField::ylm(&g, 2, 1, 1e-3 * R0).add(&SphereField::constant(&g, 1e-3 * R0));
    let moved = f0.add(&delta);
    let mut rel = Vec::new();
    for &eps in &EPSILONS {
        let st = perturbed(eps);
        let base = map_f(&st, &f0, &cfg).unwrap().ftt;
        let shifted = map_f(&st, &moved, &cfg).unwrap().ftt;
        let lin = linearized_map(&st, &f0, &base, &delta, &cfg).unwrap();
        let err = shifted.sub(&base).sub(&lin).sobolev_norm(high(&cfg, 1));
        rel.push(err / delta.sobolev_norm(high(&cfg, 1)));
    }
    let slope = fit_slope(&EPSILONS, &rel);
    assert!((slope - 1.0).abs() <= 0.2, "slope {slope} errors {rel:?}");
    assert!(rel.iter().zip(&EPSILONS).all(|(r, e)| r / e < 10.0), "{rel:?}");
}
