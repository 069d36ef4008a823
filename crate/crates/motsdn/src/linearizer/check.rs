//! Convergence checks of the linearisations against the nonlinear maps.
//!
//! Two families of series are produced, each with a fitted log–log slope:
//! * remainders `‖N(x + λδ) − N(x) − L_x(λδ)‖` of the linearised maps, with
//!   the base `x = (ū₀ + λ f̄₀-shape, s₀ + λ f̃̃-shape)` scaled together with
//!   the perturbation around a coordinate sphere `(s₀, ū₀)`;
//! * errors of central difference quotients of the expansion in each slot
//!   against a Richardson extrapolated reference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{expansion_t, transported_chart};
use crate::provider::Spacetime;
use crate::scalar::Real;
use crate::sphere::{NormSpec, SphereField};
use crate::transport::{restricted_gradients, TransportConfig};

use super::{linearized_gradients, linearized_transport, LinearizedState};

/// Errors against a step or amplitude parameter with the fitted slope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeSeries {
    pub name: String,
    pub amplitudes: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

impl SlopeSeries {
    pub fn new(name: &str, amplitudes: Vec<f64>, errors: Vec<f64>) -> Self {
        let slope = fit_slope(&amplitudes, &errors);
        SlopeSeries { name: name.to_string(), amplitudes, errors, slope }
    }

    /// `|slope − target| ≤ tol`.
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Shapes of the base surface and of the perturbation.
#[derive(Clone, Debug)]
pub struct Directions<T> {
    pub f0: SphereField<T>,
    pub ftt: SphereField<T>,
    pub delta_f0: SphereField<T>,
    pub delta_ftt: SphereField<T>,
}

impl<T: Real> Directions<T> {
    /// Rescales every shape to unit norm.
    pub fn normalized(&self, norm: NormSpec) -> Self {
        let unit = |f: &SphereField<T>| {
            let n = f.sobolev_norm(norm);
            if n > T::zero() {
                f.scale(n.recip())
            } else {
                f.clone()
            }
        };
        Directions { f0: unit(&self.f0), ftt: unit(&self.ftt), delta_f0: unit(&self.delta_f0), delta_ftt: unit(&self.delta_ftt) }
    }
}

/// Settings shared by the checks.
#[derive(Clone, Copy, Debug)]
pub struct CheckSettings<T> {
    /// Coordinate sphere `(s₀, ū₀)` the bases are centred on.
    pub anchor: [T; 2],
    pub norm: NormSpec,
    pub transport: TransportConfig,
}

/// Remainder series `transport`, `gradients`, `expansion_f0` and
/// `expansion_ftt` over the amplitudes `λ` (in units of length).
pub fn linearization_remainders<T: Real>(st: &Spacetime<T>, dirs: &Directions<T>, amplitudes: &[T], set: &CheckSettings<T>) -> Result<Vec<SlopeSeries>> {
    if amplitudes.len() < 2 {
        return Err(Error::InvalidParameter("a slope needs at least two amplitudes".into()));
    }
    let grid = dirs.f0.grid();
    let cfg = &set.transport;
    let [s0, u0] = set.anchor;
    let zero = SphereField::zeros(grid);
    let mut errs = vec![Vec::new(); 4];
    for &lam in amplitudes {
        let f0 = dirs.f0.scale(lam).add(&SphereField::constant(grid, u0));
        let ftt = dirs.ftt.scale(lam).add(&SphereField::constant(grid, s0));
        let d = dirs.delta_f0.scale(lam);
        let e = dirs.delta_ftt.scale(lam);
        let chart = transported_chart(st, &f0, &ftt, cfg)?;
        let base = chart.restricted.as_ref().expect("transported chart");
        let moved = restricted_gradients(st, &f0.add(&d), &ftt, cfg)?;
        let lin_fbar = linearized_transport(st, &chart, &d, cfg)?;
        errs[0].push(moved.fbar.sub(&base.fbar).sub(&lin_fbar).sobolev_norm(set.norm));
        let lin_grads = linearized_gradients(st, &chart, &d, cfg)?;
        let mut g = T::zero();
        for a in 0..3 {
            g += moved.grads[a].sub(&base.grads[a]).sub(&lin_grads[a]).sobolev_norm(set.norm);
        }
        errs[1].push(g);
        let t_base = expansion_t(st, &f0, &ftt, cfg)?;
        let lin_f0 = LinearizedState::new(st, &chart, &d, &zero, cfg)?.expansion();
        let t_f0 = expansion_t(st, &f0.add(&d), &ftt, cfg)?;
        errs[2].push(t_f0.sub(&t_base).sub(&lin_f0).sobolev_norm(set.norm));
        let lin_ftt = LinearizedState::new(st, &chart, &zero, &e, cfg)?.expansion();
        let t_ftt = expansion_t(st, &f0, &ftt.add(&e), cfg)?;
        errs[3].push(t_ftt.sub(&t_base).sub(&lin_ftt).sobolev_norm(set.norm));
    }
    let amps: Vec<f64> = amplitudes.iter().map(|a| a.as_f64()).collect();
    Ok(["transport", "gradients", "expansion_f0", "expansion_ftt"]
        .iter()
        .zip(errs)
        .map(|(name, e)| SlopeSeries::new(name, amps.clone(), e.into_iter().map(|x| x.as_f64()).collect()))
        .collect())
}

/// Central difference quotient of the expansion in direction `(δf̄₀, δf̃̃)`.
pub fn central_difference<T: Real>(
    st: &Spacetime<T>,
    f0: &SphereField<T>,
    ftt: &SphereField<T>,
    delta_f0: &SphereField<T>,
    delta_ftt: &SphereField<T>,
    h: T,
    cfg: &TransportConfig,
) -> Result<SphereField<T>> {
    let plus = expansion_t(st, &f0.lincomb(T::one(), delta_f0, h), &ftt.lincomb(T::one(), delta_ftt, h), cfg)?;
    let minus = expansion_t(st, &f0.lincomb(T::one(), delta_f0, -h), &ftt.lincomb(T::one(), delta_ftt, -h), cfg)?;
    Ok(plus.sub(&minus).scale((T::lit(2.0) * h).recip()))
}

/// Errors of the central difference quotients in the `f̄₀` and `f̃̃` slots
/// at the steps `h`, measured against the Richardson extrapolation of the
/// quotients at `h_min/2` and `h_min/4`.
pub fn difference_quotients<T: Real>(
    st: &Spacetime<T>,
    f0: &SphereField<T>,
    ftt: &SphereField<T>,
    dirs: &Directions<T>,
    steps: &[T],
    set: &CheckSettings<T>,
) -> Result<Vec<SlopeSeries>> {
    if steps.len() < 2 {
        return Err(Error::InvalidParameter("a slope needs at least two steps".into()));
    }
    let grid = f0.grid();
    let zero = SphereField::zeros(grid);
    let h_min = steps.iter().fold(steps[0], |m, &h| m.min(h));
    let cfg = &set.transport;
    let mut out = Vec::new();
    for (name, d, e) in [("slot_f0", &dirs.delta_f0, &zero), ("slot_ftt", &zero, &dirs.delta_ftt)] {
        let q = |h: T| central_difference(st, f0, ftt, d, e, h, cfg);
        let half = q(h_min * T::lit(0.5))?;
        let quarter = q(h_min * T::lit(0.25))?;
        let reference = quarter.lincomb(T::lit(4.0) / T::lit(3.0), &half, -T::one() / T::lit(3.0));
        let mut errors = Vec::with_capacity(steps.len());
        for &h in steps {
            errors.push(q(h)?.sub(&reference).sobolev_norm(set.norm).as_f64());
        }
        out.push(SlopeSeries::new(name, steps.iter().map(|h| h.as_f64()).collect(), errors));
    }
    Ok(out)
}
