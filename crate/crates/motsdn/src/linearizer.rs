//! Linearisations around a transported base surface `(f̄₀, f̃̃)`.
//!
//! * [`linearized_transport`] advects `Δ̊ b̄dd f̄̃̃^t` along the method III flow
//!   and reconstructs `b̄dd f̄̃̃` from its Laplacian and its mean;
//! * [`linearized_gradients`] advects `b̄dd f̄^{t,s}_a` along the restricted flow;
//! * [`VerticalOperator`] is the Schwarzschild-frozen derivative
//!   `a(θ)·δf̃̃ − 2r̄⁻² Δ̊δf̃̃` of the expansion in the `f̃̃` slot, with
//!   `a = ∂_s tr χ′_Sch` on the base surface;
//! * [`LinearizedState`] bundles the pieces into
//!   `b̄dd_Sch T = a·δf̃̃ + ∂_ū tr χ′_Sch·b̄dd f̄̃̃ − 2r̄⁻² Δ̊δf̃̃`.

pub mod check;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::provider::Spacetime;
use crate::scalar::Real;
use crate::sphere::{lm_index, SphereField};
use crate::transport::{method_three_rhs, restricted_rhs, rk4, SurfaceChart, TransportConfig};

/// Relative residual at which [`VerticalOperator::invert`] stops.
pub const INVERSION_TOLERANCE: f64 = 1e-11;

/// Iteration controls of the vertical inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InversionConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { tolerance: INVERSION_TOLERANCE, max_iter: 200 }
    }
}

/// Convergence data of one inversion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InversionStats {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Geometric mean of the residual reduction per iteration.
    pub spectral_radius: f64,
}

fn advect<T: Real>(flow: &[Vec<T>; 2], field: &SphereField<T>) -> SphereField<T> {
    let [dt, dp] = field.grad();
    let v: Vec<T> = (0..dt.len()).map(|k| flow[0][k] * dt[k] + flow[1][k] * dp[k]).collect();
    SphereField::from_values(field.grid(), &v)
}

fn check_base<T: Real>(chart: &SurfaceChart<T>, delta: &SphereField<T>) -> Result<()> {
    if delta.l_max() != chart.f0.l_max() {
        return Err(Error::InvalidParameter("perturbation and base chart must share a band limit".into()));
    }
    Ok(())
}

fn transported_fbar<T: Real>(chart: &SurfaceChart<T>) -> Result<&SphereField<T>> {
    chart
        .fbar_tt
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("base chart has not been transported; the flow is unavailable".into()))
}

/// Reconstructs the field with Laplacian `lap` (mean removed) and mean `mean`.
fn from_laplacian<T: Real>(lap: &SphereField<T>, mean: T) -> Result<SphereField<T>> {
    let u = lap.without_mean().solve_poisson()?;
    Ok(u.add(&SphereField::constant(lap.grid(), mean)))
}

/// Linearised perturbation `b̄dd f̄̃̃^t` at `t = 1`, together with the
/// Laplacian after advection before the mean of the source is projected out.
pub fn linearized_transport_with_laplacian<T: Real>(
    st: &Spacetime<T>,
    chart: &SurfaceChart<T>,
    delta_f0: &SphereField<T>,
    cfg: &TransportConfig,
) -> Result<(SphereField<T>, SphereField<T>)> {
    transported_fbar(chart)?;
    check_base(chart, delta_f0)?;
    let ftt = &chart.ftt;
    let dftt = ftt.grad();
    let y0 = vec![chart.f0.clone(), delta_f0.laplacian()];
    let y = rk4(y0, T::zero(), T::one(), cfg.steps(1.0), |t, y| {
        let eval = method_three_rhs(st, ftt, &dftt, t, &y[0])?;
        Ok(vec![eval.rhs, advect(&eval.flow, &y[1])])
    })?;
    let lap = y[1].clone();
    Ok((from_laplacian(&lap, delta_f0.mean())?, lap))
}

/// `b̄dd f̄̃̃`: advects `Δ̊ δf̄₀` along the method III flow over `t ∈ [0, 1]`
/// and returns the field with that Laplacian and mean `mean(δf̄₀)`.
pub fn linearized_transport<T: Real>(st: &Spacetime<T>, chart: &SurfaceChart<T>, delta_f0: &SphereField<T>, cfg: &TransportConfig) -> Result<SphereField<T>> {
    Ok(linearized_transport_with_laplacian(st, chart, delta_f0, cfg)?.0)
}

/// `b̄dd f̄^{s}_a` on the graph surface: advects `R_a δf̄₀` along the
/// restricted flow `X̃̃^{t,s}` of the base chart.
pub fn linearized_gradients<T: Real>(st: &Spacetime<T>, chart: &SurfaceChart<T>, delta_f0: &SphereField<T>, cfg: &TransportConfig) -> Result<[SphereField<T>; 3]> {
    transported_fbar(chart)?;
    check_base(chart, delta_f0)?;
    let ftt = &chart.ftt;
    let dftt = ftt.grad();
    let f0 = &chart.f0;
    let mut y0 = vec![f0.clone(), f0.rotation(0), f0.rotation(1), f0.rotation(2)];
    y0.extend((0..3).map(|a| delta_f0.rotation(a)));
    let y = rk4(y0, T::zero(), T::one(), cfg.steps(1.0), |t, y| {
        let eval = restricted_rhs(st, ftt, &dftt, t, &y[..4])?;
        let mut out = eval.rhs;
        out.extend(y[4..].iter().map(|z| advect(&eval.flow, z)));
        Ok(out)
    })?;
    Ok([y[4].clone(), y[5].clone(), y[6].clone()])
}

/// `δ ↦ a(θ) δ − 2r̄⁻² Δ̊δ`.
#[derive(Clone, Debug)]
pub struct VerticalOperator<T> {
    /// `∂_s tr χ′_Sch` on the base surface.
    pub a: SphereField<T>,
    /// `∂_ū tr χ′_Sch` on the base surface.
    pub c: SphereField<T>,
    /// `r_Sch²` at the mean coordinates of the base surface.
    pub rbar2: T,
}

impl<T: Real> VerticalOperator<T> {
    /// Frozen Schwarzschild coefficients on the transported base chart.
    pub fn from_chart(st: &Spacetime<T>, chart: &SurfaceChart<T>) -> Result<Self> {
        let fbar = transported_fbar(chart)?;
        let gauge = st.gauge();
        let n = chart.grid().len();
        let mut a = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let (ds, du) = gauge.trchi_prime_partials(chart.ftt.values()[k], fbar.values()[k])?;
            a.push(ds);
            c.push(du);
        }
        let r = gauge.area_radius(chart.ftt.mean(), fbar.mean())?;
        let grid = chart.grid();
        Ok(VerticalOperator { a: SphereField::from_values(grid, &a), c: SphereField::from_values(grid, &c), rbar2: r * r })
    }

    /// Operator with prescribed coefficients.
    pub fn new(a: SphereField<T>, c: SphereField<T>, rbar2: T) -> Self {
        VerticalOperator { a, c, rbar2 }
    }

    fn lap_weight(&self) -> T {
        T::lit(2.0) / self.rbar2
    }

    /// `a δ − 2r̄⁻² Δ̊δ`.
    pub fn apply(&self, delta: &SphereField<T>) -> SphereField<T> {
        self.a.mul(delta).lincomb(T::one(), &delta.laplacian(), -self.lap_weight())
    }

    /// Exact inverse of `ā − 2r̄⁻² Δ̊` with `ā = mean(a)`.
    pub fn precondition(&self, rhs: &SphereField<T>) -> Result<SphereField<T>> {
        let abar = self.a.mean();
        let w = self.lap_weight();
        let mut c = rhs.coeffs().to_vec();
        for l in 0..=rhs.l_max() {
            let d = abar + w * T::count(l * (l + 1));
            if !(d.abs() > T::zero()) {
                return Err(Error::Invariant(format!("frozen vertical operator is singular on degree {l}")));
            }
            for m in -(l as i64)..=(l as i64) {
                c[lm_index(l, m)] /= d;
            }
        }
        Ok(SphereField::from_coeffs(rhs.grid(), c))
    }

    /// Solves `a δ − 2r̄⁻² Δ̊δ = rhs` by preconditioned Richardson iteration.
    pub fn invert(&self, rhs: &SphereField<T>, cfg: &InversionConfig) -> Result<(SphereField<T>, InversionStats)> {
        let scale = rhs.l2_norm();
        let tol = T::lit(cfg.tolerance).max(T::epsilon() * T::lit(64.0)) * scale;
        let mut x = self.precondition(rhs)?;
        let mut r = rhs.sub(&self.apply(&x));
        let r0 = r.l2_norm();
        let mut iterations = 0;
        while r.l2_norm() > tol {
            if iterations >= cfg.max_iter {
                let radius = radius_estimate(r0, r.l2_norm(), iterations);
                return Err(Error::NotConverged {
                    what: format!("vertical inversion (spectral radius estimate {radius:.3})"),
                    iterations,
                    residual: (r.l2_norm() / scale).as_f64(),
                });
            }
            x = x.add(&self.precondition(&r)?);
            r = rhs.sub(&self.apply(&x));
            iterations += 1;
        }
        let rel = if scale > T::zero() { (r.l2_norm() / scale).as_f64() } else { 0.0 };
        Ok((x, InversionStats { iterations, relative_residual: rel, spectral_radius: radius_estimate(r0, r.l2_norm(), iterations) }))
    }
}

fn radius_estimate<T: Real>(first: T, last: T, iterations: usize) -> f64 {
    if iterations == 0 || !(first > T::zero()) {
        return 0.0;
    }
    (last / first).as_f64().powf(1.0 / iterations as f64)
}

/// Linearised data of the expansion around a base chart.
#[derive(Clone, Debug)]
pub struct LinearizedState<T> {
    pub base: SurfaceChart<T>,
    pub delta_f0: SphereField<T>,
    pub delta_ftt: SphereField<T>,
    /// `b̄dd f̄̃̃`.
    pub delta_fbar: SphereField<T>,
    /// `b̄dd f̄^s_a`, `a = 1, 2, 3`.
    pub delta_grads: [SphereField<T>; 3],
    pub operator: VerticalOperator<T>,
}

impl<T: Real> LinearizedState<T> {
    /// Linearises around a transported chart in the direction `(δf̄₀, δf̃̃)`.
    pub fn new(st: &Spacetime<T>, base: &SurfaceChart<T>, delta_f0: &SphereField<T>, delta_ftt: &SphereField<T>, cfg: &TransportConfig) -> Result<Self> {
        check_base(base, delta_ftt)?;
        let delta_fbar = linearized_transport(st, base, delta_f0, cfg)?;
        let delta_grads = linearized_gradients(st, base, delta_f0, cfg)?;
        let operator = VerticalOperator::from_chart(st, base)?;
        Ok(LinearizedState { base: base.clone(), delta_f0: delta_f0.clone(), delta_ftt: delta_ftt.clone(), delta_fbar, delta_grads, operator })
    }

    /// `a(θ)`.
    pub fn coefficient(&self) -> &SphereField<T> {
        &self.operator.a
    }

    /// `r̄²`.
    pub fn rbar2(&self) -> T {
        self.operator.rbar2
    }

    /// `b̄dd_Sch T(δf̄₀, δf̃̃)`.
    pub fn expansion(&self) -> SphereField<T> {
        self.operator.apply(&self.delta_ftt).add(&self.operator.c.mul(&self.delta_fbar))
    }
}

/// `b̄dd_Sch T = ∂_s tr χ′_Sch·δf̃̃ + ∂_ū tr χ′_Sch·b̄dd f̄̃̃ − 2r̄⁻² Δ̊δf̃̃`.
pub fn linearized_expansion<T: Real>(
    st: &Spacetime<T>,
    chart: &SurfaceChart<T>,
    delta_f0: &SphereField<T>,
    delta_ftt: &SphereField<T>,
    cfg: &TransportConfig,
) -> Result<SphereField<T>> {
    check_base(chart, delta_ftt)?;
    let op = VerticalOperator::from_chart(st, chart)?;
    let delta_fbar = linearized_transport(st, chart, delta_f0, cfg)?;
    Ok(op.apply(delta_ftt).add(&op.c.mul(&delta_fbar)))
}

/// Solves `b̄dd_Sch T(0, δf̃̃) = rhs` on the base chart.
pub fn invert_vertical<T: Real>(st: &Spacetime<T>, chart: &SurfaceChart<T>, rhs: &SphereField<T>, cfg: &InversionConfig) -> Result<(SphereField<T>, InversionStats)> {
    VerticalOperator::from_chart(st, chart)?.invert(rhs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::testing::{default_perturbed, random_field, rng, schwarzschild};
    use crate::geometry::transported_chart;
    use crate::sphere::SphereGrid;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn cfg() -> TransportConfig {
        TransportConfig::default()
    }

    fn grid() -> Arc<SphereGrid<f64>> {
        SphereGrid::new(10)
    }

    fn generic_chart(st: &Spacetime<f64>, seed: u64) -> SurfaceChart<f64> {
        let g = grid();
        let mut r = rng(seed);
        let f0 = random_field(&g, &mut r, 0.02, 0.01, 3);
        let ftt = random_field(&g, &mut r, 0.03, 0.01, 3);
        transported_chart(st, &f0, &ftt, &cfg()).unwrap()
    }

    fn trivial_chart(st: &Spacetime<f64>) -> SurfaceChart<f64> {
        let z = SphereField::zeros(&grid());
        transported_chart(st, &z, &z, &cfg()).unwrap()
    }

    fn eigenvalue(l: usize) -> f64 {
        let r0: f64 = 2.0;
        2.0 / (r0 * r0) * (1.0 + (l * (l + 1)) as f64)
    }

    #[test]
    fn constant_perturbations_are_preserved() {
        let st = default_perturbed(1e-3);
        let chart = generic_chart(&st, 1);
        let c = SphereField::constant(&grid(), 0.07);
        let out = linearized_transport(&st, &chart, &c, &cfg()).unwrap();
        assert!(out.sub(&c).sup_norm() < 1e-14);
        for g in linearized_gradients(&st, &chart, &c, &cfg()).unwrap() {
            assert!(g.sup_norm() < 1e-14);
        }
    }

    #[test]
    fn trivial_base_has_no_flow() {
        let st = default_perturbed(1e-3);
        let chart = trivial_chart(&st);
        let mut r = rng(2);
        let d = random_field(&grid(), &mut r, 0.1, 0.05, 4);
        assert!(linearized_transport(&st, &chart, &d, &cfg()).unwrap().sub(&d).sup_norm() < 1e-13);
        let grads = linearized_gradients(&st, &chart, &d, &cfg()).unwrap();
        for (a, g) in grads.iter().enumerate() {
            assert!(g.sub(&d.rotation(a)).sup_norm() < 1e-13);
        }
    }

    #[test]
    fn mean_is_pinned_on_generic_bases() {
        let st = default_perturbed(1e-3);
        let chart = generic_chart(&st, 3);
        let mut r = rng(4);
        let d = random_field(&grid(), &mut r, -0.04, 0.03, 4);
        let (out, lap) = linearized_transport_with_laplacian(&st, &chart, &d, &cfg()).unwrap();
        assert!((out.mean() - d.mean()).abs() < 1e-12);
        assert!(out.laplacian().sub(&lap.without_mean()).l2_norm() < 1e-12);
        assert!(out.sub(&d).l2_norm() > 1e-8);
    }

    #[test]
    fn untransported_chart_is_rejected() {
        let st = schwarzschild();
        let z = SphereField::zeros(&grid());
        let chart = SurfaceChart::new(z.clone(), z.clone()).unwrap();
        assert!(matches!(linearized_transport(&st, &chart, &z, &cfg()), Err(Error::InvalidParameter(_))));
        assert!(matches!(linearized_gradients(&st, &chart, &z, &cfg()), Err(Error::InvalidParameter(_))));
        assert!(VerticalOperator::from_chart(&st, &chart).is_err());
    }

    #[test]
    fn horizon_section_eigenvalues() {
        let st = schwarzschild();
        let chart = trivial_chart(&st);
        let z = SphereField::zeros(&grid());
        for l in 0..=6 {
            for m in [-(l as i64), 0, l as i64] {
                let y = SphereField::ylm(&grid(), l, m, 1.0);
                let out = linearized_expansion(&st, &chart, &z, &y, &cfg()).unwrap();
                assert!(out.sub(&y.scale(eigenvalue(l))).l2_norm() < 1e-12 * eigenvalue(l));
            }
        }
    }

    #[test]
    fn horizon_section_ignores_the_incoming_slot() {
        let st = schwarzschild();
        let chart = trivial_chart(&st);
        let mut r = rng(5);
        let d = random_field(&grid(), &mut r, 0.1, 0.1, 4);
        let z = SphereField::zeros(&grid());
        assert!(linearized_expansion(&st, &chart, &d, &z, &cfg()).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn state_matches_the_three_term_expression() {
        let st = default_perturbed(1e-3);
        let chart = generic_chart(&st, 6);
        let mut r = rng(7);
        let d = random_field(&grid(), &mut r, 0.01, 0.01, 3);
        let e = random_field(&grid(), &mut r, 0.01, 0.01, 3);
        let state = LinearizedState::new(&st, &chart, &d, &e, &cfg()).unwrap();
        let direct = linearized_expansion(&st, &chart, &d, &e, &cfg()).unwrap();
        assert!(state.expansion().sub(&direct).sup_norm() < 1e-14);
        let r0: f64 = 2.0;
        assert!(state.coefficient().values().iter().all(|&a| a > 0.0 && (a * r0 * r0 / 2.0 - 1.0).abs() < 0.2));
        assert!((state.rbar2() / (r0 * r0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn inversion_on_the_horizon_section() {
        let st = schwarzschild();
        let chart = trivial_chart(&st);
        let ic = InversionConfig::default();
        for l in 0..=6 {
            let y = SphereField::ylm(&grid(), l, 1.min(l as i64), 1.0);
            let (x, stats) = invert_vertical(&st, &chart, &y.scale(eigenvalue(l)), &ic).unwrap();
            assert!(x.sub(&y).l2_norm() < 1e-13);
            assert_eq!(stats.iterations, 0);
        }
        let (x, _) = invert_vertical(&st, &chart, &SphereField::constant(&grid(), 3.0), &ic).unwrap();
        assert!(x.sub(&SphereField::constant(&grid(), 2.0 * 3.0)).sup_norm() < 1e-13);
    }

    #[test]
    fn inversion_with_a_varying_coefficient() {
        let g = grid();
        let r0: f64 = 2.0;
        let a = SphereField::constant(&g, 1.0).add(&SphereField::ylm(&g, 1, 0, 0.05)).scale(2.0 / (r0 * r0));
        let op = VerticalOperator::new(a, SphereField::zeros(&g), r0 * r0);
        let mut r = rng(8);
        let rhs = random_field(&g, &mut r, 0.3, 0.2, 6);
        let (x, stats) = op.invert(&rhs, &InversionConfig::default()).unwrap();
        assert!(op.apply(&x).sub(&rhs).l2_norm() <= 1e-11 * rhs.l2_norm());
        assert!(stats.iterations > 0 && stats.spectral_radius < 0.1);
    }

    #[test]
    fn strongly_varying_coefficient_fails_to_contract() {
        let g = grid();
        let a = SphereField::constant(&g, 0.5).add(&SphereField::ylm(&g, 1, 0, 3.0));
        let op = VerticalOperator::new(a, SphereField::zeros(&g), 400.0);
        let rhs = SphereField::ylm(&g, 2, 0, 1.0);
        let err = op.invert(&rhs, &InversionConfig { tolerance: 1e-11, max_iter: 30 }).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }), "{err}");
    }

    #[test]
    fn forward_inverse_on_generic_bases() {
        for (seed, st) in [(9, schwarzschild()), (10, default_perturbed(1e-3))] {
            let chart = generic_chart(&st, seed);
            let mut r = rng(seed + 100);
            let rhs = random_field(&grid(), &mut r, 0.1, 0.1, 8);
            let op = VerticalOperator::from_chart(&st, &chart).unwrap();
            let (x, _) = op.invert(&rhs, &InversionConfig::default()).unwrap();
            assert!(op.apply(&x).sub(&rhs).l2_norm() <= 1e-10 * rhs.l2_norm());
        }
    }

    #[test]
    fn single_precision_linearisation_runs() {
        let st = Spacetime::<f32>::schwarzschild(crate::background::SchwarzschildGauge::new(1.0, 0.25, 0.5).unwrap());
        let g = SphereGrid::<f32>::new(6);
        let z = SphereField::zeros(&g);
        let chart = transported_chart(&st, &z, &z, &cfg()).unwrap();
        let y = SphereField::ylm(&g, 2, 1, 1.0f32);
        let out = linearized_expansion(&st, &chart, &z, &y, &cfg()).unwrap();
        assert!(out.sub(&y.scale(3.5)).l2_norm() < 1e-5);
        let (x, _) = invert_vertical(&st, &chart, &out, &InversionConfig::default()).unwrap();
        assert!(x.sub(&y).l2_norm() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn forward_inverse_is_identity(amp in 0.0f64..0.1, l in 1usize..4, m in 0i64..2, seed in 0u64..1000) {
            let g = grid();
            let a = SphereField::constant(&g, 0.5).add(&SphereField::ylm(&g, l, m.min(l as i64), amp * 0.5));
            let op = VerticalOperator::new(a, SphereField::zeros(&g), 4.0);
            let mut r = rng(seed);
            let rhs = random_field(&g, &mut r, 0.2, 0.1, 6);
            let (x, _) = op.invert(&rhs, &InversionConfig::default()).unwrap();
            prop_assert!(op.apply(&x).sub(&rhs).l2_norm() <= 1e-10 * rhs.l2_norm());
        }

        #[test]
        fn linearised_transport_is_linear(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            let st = default_perturbed(1e-3);
            let chart = generic_chart(&st, 11);
            let mut r = rng(12);
            let d1 = random_field(&grid(), &mut r, 0.0, 0.05, 3);
            let d2 = random_field(&grid(), &mut r, 0.0, 0.05, 3);
            let l1 = linearized_transport(&st, &chart, &d1, &cfg()).unwrap();
            let l2 = linearized_transport(&st, &chart, &d2, &cfg()).unwrap();
            let l12 = linearized_transport(&st, &chart, &d1.lincomb(c1, &d2, c2), &cfg()).unwrap();
            prop_assert!(l12.sub(&l1.lincomb(c1, &l2, c2)).sup_norm() < 1e-13);
        }
    }
}
