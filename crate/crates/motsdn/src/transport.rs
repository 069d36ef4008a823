//! Transport equations on incoming null hypersurfaces.
//!
//! A surface is described in the second parametrization by the label `f̄₀`
//! of the incoming null hypersurface `C̄` through `{ū = f̄₀(θ)} ⊂ {s = 0}`
//! and by its graph `s = f̃̃(θ)` inside `C̄`. The foliation of `C̄` by
//! `Σ̃_s = C̄ ∩ {s}` is `ū = f̄^s(θ)` with
//! `∂_s f̄^s = Φ(s, f̄^s, θ, df̄^s)`, `Φ = −b·p + Ω² g̸⁻¹(p, p)`.
//! The first parametrization `f̄̃̃(θ) = f̄^{f̃̃(θ)}(θ)` is obtained by
//! transporting along `t ∈ [0, 1]` through the surfaces `s = t f̃̃(θ)`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::frame::frame_tilt;
use crate::jet::{Jet, Jet1, PH, TH, U};
use crate::provider::Spacetime;
use crate::scalar::{Dual, Real};
use crate::sphere::{inverse2, rotation_field, rotation_field_partials, vector_partials, NormSpec, SphereField, SphereGrid};

/// Smallest admissible magnitude of the transport denominators.
pub const DENOMINATOR_GUARD: f64 = 0.5;

/// Step counts of the fourth order Runge–Kutta integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransportConfig {
    /// Steps per unit of `s/r₀` for the foliation and per unit of `t`.
    pub steps_per_unit: usize,
    /// Lower bound on the number of steps of any integration segment.
    pub min_steps: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { steps_per_unit: 64, min_steps: 8 }
    }
}

impl TransportConfig {
    pub(crate) fn steps(&self, span: f64) -> usize {
        ((span.abs() * self.steps_per_unit as f64).ceil() as usize).max(self.min_steps).max(1)
    }

    /// Same configuration with doubled step counts.
    pub fn refined(&self) -> Self {
        TransportConfig { steps_per_unit: 2 * self.steps_per_unit, min_steps: 2 * self.min_steps }
    }
}

/// One classical Runge–Kutta step for a state made of sphere fields.
pub fn rk4_step<T: Real, F>(t: T, h: T, y: &[SphereField<T>], rhs: &mut F) -> Result<Vec<SphereField<T>>>
where
    F: FnMut(T, &[SphereField<T>]) -> Result<Vec<SphereField<T>>>,
{
    let half = T::lit(0.5);
    let axpy = |y: &[SphereField<T>], k: &[SphereField<T>], a: T| -> Vec<SphereField<T>> {
        y.iter().zip(k).map(|(yi, ki)| yi.lincomb(T::one(), ki, a)).collect()
    };
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + h * half, &axpy(y, &k1, h * half))?;
    let k3 = rhs(t + h * half, &axpy(y, &k2, h * half))?;
    let k4 = rhs(t + h, &axpy(y, &k3, h))?;
    let sixth = h / T::lit(6.0);
    Ok(y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let incr = k1[i].lincomb(T::one(), &k2[i], T::lit(2.0)).lincomb(T::one(), &k3[i], T::lit(2.0)).add(&k4[i]);
            yi.lincomb(T::one(), &incr, sixth)
        })
        .collect())
}

/// Integrates from `t0` to `t1` in `steps` equal Runge–Kutta steps.
pub fn rk4<T: Real, F>(y0: Vec<SphereField<T>>, t0: T, t1: T, steps: usize, mut rhs: F) -> Result<Vec<SphereField<T>>>
where
    F: FnMut(T, &[SphereField<T>]) -> Result<Vec<SphereField<T>>>,
{
    let h = (t1 - t0) / T::count(steps);
    let mut y = y0;
    for n in 0..steps {
        y = rk4_step(t0 + h * T::count(n), h, &y, &mut rhs)?;
    }
    Ok(y)
}

/// `Φ(s, ū, θ, p) = −b·p + Ω² g̸⁻¹(p, p)` and its partials at one point.
#[derive(Clone, Copy, Debug)]
pub struct Hamiltonian<T> {
    pub value: T,
    /// `∂Φ/∂p_i = −b^i + 2Ω²(g̸⁻¹)^{ij} p_j`.
    pub dp: [T; 2],
    /// Explicit partials `(∂_s, ∂_ū, ∂_θ, ∂_φ)` at fixed `p`.
    pub dx: [T; 4],
}

/// Evaluates `Φ` with its partials from the provider.
pub fn hamiltonian<T: Real>(st: &Spacetime<T>, s: T, u: T, theta: T, phi: T, p: [T; 2]) -> Result<Hamiltonian<T>> {
    let m = st.metric::<Jet1<T>>(s, u, theta, phi)?;
    let ginv = inverse2::<T, Jet1<T>>(&m.g);
    let h = [ginv[0] * m.omega2, ginv[1] * m.omega2, ginv[2] * m.omega2];
    let phi_j = -(m.b[0] * p[0] + m.b[1] * p[1]) + h[0] * (p[0] * p[0]) + h[1] * (p[0] * p[1] * T::lit(2.0)) + h[2] * (p[1] * p[1]);
    let two = T::lit(2.0);
    let dp = [
        -m.b[0].v + two * (h[0].v * p[0] + h[1].v * p[1]),
        -m.b[1].v + two * (h[1].v * p[0] + h[2].v * p[1]),
    ];
    Ok(Hamiltonian { value: phi_j.v, dp, dx: phi_j.d })
}

/// Values of `Φ` on the surfaces `ū = f̄(θ)` of the sphere `{s}`.
pub fn foliation_rhs<T: Real>(st: &Spacetime<T>, s: T, fbar: &SphereField<T>) -> Result<SphereField<T>> {
    let grid = fbar.grid();
    let [gt, gp] = fbar.grad();
    let mut out = Vec::with_capacity(grid.len());
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let m = st.metric_values(s, fbar.values()[k], th, ph)?;
        let ginv = inverse2::<T, T>(&m.g);
        let p = [gt[k], gp[k]];
        let quad = ginv[0] * p[0] * p[0] + T::lit(2.0) * ginv[1] * p[0] * p[1] + ginv[2] * p[1] * p[1];
        out.push(-(m.b[0] * p[0] + m.b[1] * p[1]) + m.omega2 * quad);
    }
    Ok(SphereField::from_values(grid, &out))
}

/// Per-step diagnostics of a foliation transport.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostic {
    pub s: f64,
    pub mean: f64,
    pub min: f64,
    pub grad_norm: f64,
}

/// Transported foliation `f̄^s` at the requested `s` values.
#[derive(Clone, Debug)]
pub struct Foliation<T> {
    pub s_values: Vec<T>,
    pub fields: Vec<SphereField<T>>,
    pub diagnostics: Vec<StepDiagnostic>,
    pub warnings: Vec<String>,
}

/// Norm `Σ_{1≤k≤n+1} ‖R^k f‖_{L^p}` of the differential of `f`.
pub fn differential_norm<T: Real>(f: &SphereField<T>, spec: NormSpec) -> T {
    let up = NormSpec { n: spec.n + 1, p: spec.p };
    let base = NormSpec { n: 0, p: spec.p };
    f.sobolev_norm(up) - f.sobolev_norm(base)
}

/// Options of [`transport_foliation`] beyond the step counts.
#[derive(Clone, Copy, Debug)]
pub struct FoliationOptions<T> {
    /// Norm used in the diagnostics; `None` records the sup of `|df̄|_g̊`.
    pub norm: Option<NormSpec>,
    /// Budget `‖df̄^s‖ ≤ budget·r₀`; exceeding it adds a warning.
    pub budget: Option<T>,
}

impl<T> Default for FoliationOptions<T> {
    fn default() -> Self {
        FoliationOptions { norm: None, budget: None }
    }
}

fn grad_sup<T: Real>(f: &SphereField<T>) -> T {
    let [gt, gp] = f.grad();
    let g = f.grid();
    (0..g.len()).fold(T::zero(), |m, k| {
        let s = g.sin_cos_theta(k).0;
        m.max((gt[k] * gt[k] + gp[k] * gp[k] / (s * s)).sqrt())
    })
}

/// Solves the foliation equation from `s = 0` to each target, integrating
/// outwards on either side of the initial sphere.
pub fn transport_foliation<T: Real>(
    st: &Spacetime<T>,
    f0: &SphereField<T>,
    s_targets: &[T],
    cfg: &TransportConfig,
    opts: &FoliationOptions<T>,
) -> Result<Foliation<T>> {
    let r0 = st.r0();
    let tol = T::lit(1e-12) * r0;
    let check_monotone = st.recipe().is_none();
    let mut fields: Vec<Option<SphereField<T>>> = vec![None; s_targets.len()];
    let mut diagnostics = Vec::new();
    let mut warnings = Vec::new();
    let record = |s: T, f: &SphereField<T>, diags: &mut Vec<StepDiagnostic>, warns: &mut Vec<String>| {
        let gn = match opts.norm {
            Some(spec) => differential_norm(f, spec),
            None => grad_sup(f),
        };
        if let Some(b) = opts.budget {
            if gn > b * r0 {
                warns.push(format!("differential norm {:e} exceeds budget at s = {:e}", gn.as_f64(), s.as_f64()));
            }
        }
        let min = f.values().iter().fold(T::infinity(), |m, &x| m.min(x));
        diags.push(StepDiagnostic { s: s.as_f64(), mean: f.mean().as_f64(), min: min.as_f64(), grad_norm: gn.as_f64() });
    };
    record(T::zero(), f0, &mut diagnostics, &mut warnings);
    for sign in [T::one(), -T::one()] {
        let mut order: Vec<usize> = (0..s_targets.len()).filter(|&i| s_targets[i] * sign >= T::zero()).collect();
        order.sort_by(|&a, &b| (s_targets[a] * sign).partial_cmp(&(s_targets[b] * sign)).expect("finite targets"));
        let mut s = T::zero();
        let mut f = f0.clone();
        for idx in order {
            let target = s_targets[idx];
            if !target.is_finite() {
                return Err(Error::NonFinite("foliation target".into()));
            }
            let span = target - s;
            if span != T::zero() {
                let n = cfg.steps((span / r0).as_f64());
                let h = span / T::count(n);
                for step in 0..n {
                    let s_here = s + h * T::count(step);
                    let mut rhs = |sv: T, y: &[SphereField<T>]| -> Result<Vec<SphereField<T>>> { Ok(vec![foliation_rhs(st, sv, &y[0])?]) };
                    let next = rk4_step(s_here, h, std::slice::from_ref(&f), &mut rhs)
                        .map_err(|e| annotate_step(e, s_here.as_f64()))?
                        .remove(0);
                    if check_monotone {
                        let old_min = f.values().iter().fold(T::infinity(), |m, &x| m.min(x));
                        let new_min = next.values().iter().fold(T::infinity(), |m, &x| m.min(x));
                        if (new_min - old_min) * sign < -tol {
                            return Err(Error::Invariant(format!(
                                "min f̄^s decreased along s between {:e} and {:e}",
                                s_here.as_f64(),
                                (s_here + h).as_f64()
                            )));
                        }
                    }
                    f = next;
                    record(s_here + h, &f, &mut diagnostics, &mut warnings);
                }
                s = target;
            }
            fields[idx] = Some(f.clone());
        }
    }
    Ok(Foliation {
        s_values: s_targets.to_vec(),
        fields: fields.into_iter().map(|f| f.expect("every target visited")).collect(),
        diagnostics,
        warnings,
    })
}

fn annotate_step(e: Error, s: f64) -> Error {
    match e {
        Error::OutsideNeighbourhood { .. } | Error::RootSolve { .. } | Error::NonFinite(_) => {
            Error::NonFinite(format!("foliation step failed after last valid s = {s:e}: {e}"))
        }
        other => other,
    }
}

/// State of a single characteristic of the foliation equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Characteristic<T> {
    pub theta: T,
    pub phi: T,
    pub u: T,
    pub p: [T; 2],
}

/// Integrates the characteristic system of `∂_s f̄ = Φ` from `s = 0`:
/// `dθ^i/ds = −∂Φ/∂p_i`, `dū/ds = Φ − p·∂Φ/∂p`, `dp_i/ds = ∂_iΦ + p_i ∂_ūΦ`.
pub fn characteristic<T: Real>(st: &Spacetime<T>, start: Characteristic<T>, s_end: T, steps: usize) -> Result<Characteristic<T>> {
    let rhs = |s: T, c: &[T; 5]| -> Result<[T; 5]> {
        let h = hamiltonian(st, s, c[2], c[0], c[1], [c[3], c[4]])?;
        let pdp = c[3] * h.dp[0] + c[4] * h.dp[1];
        Ok([-h.dp[0], -h.dp[1], h.value - pdp, h.dx[TH] + c[3] * h.dx[U], h.dx[PH] + c[4] * h.dx[U]])
    };
    let mut y = [start.theta, start.phi, start.u, start.p[0], start.p[1]];
    let h = s_end / T::count(steps.max(1));
    let half = T::lit(0.5);
    let add = |y: &[T; 5], k: &[T; 5], a: T| -> [T; 5] { std::array::from_fn(|i| y[i] + a * k[i]) };
    for n in 0..steps.max(1) {
        let s = h * T::count(n);
        let k1 = rhs(s, &y)?;
        let k2 = rhs(s + h * half, &add(&y, &k1, h * half))?;
        let k3 = rhs(s + h * half, &add(&y, &k2, h * half))?;
        let k4 = rhs(s + h, &add(&y, &k3, h))?;
        y = std::array::from_fn(|i| y[i] + h / T::lit(6.0) * (k1[i] + T::lit(2.0) * k2[i] + T::lit(2.0) * k3[i] + k4[i]));
    }
    Ok(Characteristic { theta: y[0], phi: y[1], u: y[2], p: [y[3], y[4]] })
}

/// A surface in the second parametrization together with the derived
/// first-parametrization data once transported.
#[derive(Clone, Debug)]
pub struct SurfaceChart<T> {
    pub f0: SphereField<T>,
    pub ftt: SphereField<T>,
    pub fbar_tt: Option<SphereField<T>>,
    pub restricted: Option<RestrictedGradients<T>>,
}

impl<T: Real> SurfaceChart<T> {
    /// Chart without derived data.
    pub fn new(f0: SphereField<T>, ftt: SphereField<T>) -> Result<Self> {
        if f0.l_max() != ftt.l_max() {
            return Err(Error::InvalidParameter("chart fields must share a band limit".into()));
        }
        Ok(SurfaceChart { f0, ftt, fbar_tt: None, restricted: None })
    }

    pub fn grid(&self) -> &Arc<SphereGrid<T>> {
        self.f0.grid()
    }

    /// Runs method III and the restricted-gradient transport.
    pub fn transported(mut self, st: &Spacetime<T>, cfg: &TransportConfig) -> Result<Self> {
        self.fbar_tt = Some(second_to_first(st, &self.f0, &self.ftt, cfg)?);
        self.restricted = Some(restricted_gradients(st, &self.f0, &self.ftt, cfg)?);
        Ok(self)
    }
}

fn guard<T: Real>(den: T, node: usize) -> Result<()> {
    if !(den.abs() >= T::lit(DENOMINATOR_GUARD)) {
        return Err(Error::NullTangency { node, denominator: den.as_f64() });
    }
    Ok(())
}

/// Right hand side of the method III equation with its advection field.
#[derive(Clone, Debug)]
pub struct MethodThreeEval<T> {
    pub rhs: SphereField<T>,
    /// `X̃̃^i = ∂F/∂(∂_i f̄̃̃^t)` at the nodes.
    pub flow: [Vec<T>; 2],
}

/// `F = f̃̃ [1 − (b + ε̄̃⃗)·t df̃̃]⁻¹ [ε̄̃ − (b + ε̄̃⃗)·df̄̃̃^t]` with the frame
/// tilts of `(t f̃̃, f̄̃̃^t)`, differentiated in `df̄̃̃^t` through jets.
pub fn method_three_rhs<T: Real>(st: &Spacetime<T>, ftt: &SphereField<T>, dftt: &[Vec<T>; 2], t: T, g: &SphereField<T>) -> Result<MethodThreeEval<T>> {
    let grid = g.grid();
    let [gt, gp] = g.grad();
    let n = grid.len();
    let mut rhs = Vec::with_capacity(n);
    let mut flow = [vec![T::zero(); n], vec![T::zero(); n]];
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let a = ftt.values()[k];
        let m = st.metric_values(t * a, g.values()[k], th, ph)?;
        let c = |x: T| Jet1::<T>::cst(x);
        let om = c(m.omega2);
        let gm = [c(m.g[0]), c(m.g[1]), c(m.g[2])];
        let b = [c(m.b[0]), c(m.b[1])];
        let df = [c(t * dftt[0][k]), c(t * dftt[1][k])];
        let dg = [Jet1::var(gt[k], TH), Jet1::var(gp[k], PH)];
        let tilt = frame_tilt::<T, Jet1<T>>(om, &gm, &b, &df, &dg).ok_or(Error::NotSpacelike { node: k })?;
        let v = [b[0] + tilt.epsbar_vec[0], b[1] + tilt.epsbar_vec[1]];
        let den = c(T::one()) - (v[0] * df[0] + v[1] * df[1]);
        guard(den.v, k)?;
        let num = tilt.epsbar - (v[0] * dg[0] + v[1] * dg[1]);
        let val = num / den * a;
        rhs.push(val.v);
        flow[0][k] = val.d[TH];
        flow[1][k] = val.d[PH];
    }
    Ok(MethodThreeEval { rhs: SphereField::from_values(grid, &rhs), flow })
}

/// Method III: `f̄̃̃ = f̄̃̃^1` from `f̄̃̃^0 = f̄₀`.
pub fn second_to_first<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, ftt: &SphereField<T>, cfg: &TransportConfig) -> Result<SphereField<T>> {
    let dftt = ftt.grad();
    let steps = cfg.steps(1.0);
    let out = rk4(vec![f0.clone()], T::zero(), T::one(), steps, |t, y| Ok(vec![method_three_rhs(st, ftt, &dftt, t, &y[0])?.rhs]))?;
    Ok(out.into_iter().next().expect("one component"))
}

/// Method I: composes a dense family `f̄^s` with `s = f̃̃(θ)` by cubic
/// Hermite interpolation in `s` at every node. Also returns the restricted
/// rotation derivatives `R_a f̄^s` at `s = f̃̃(θ)`.
pub fn method_one<T: Real>(
    st: &Spacetime<T>,
    f0: &SphereField<T>,
    ftt: &SphereField<T>,
    slices: usize,
    cfg: &TransportConfig,
) -> Result<(SphereField<T>, [SphereField<T>; 3])> {
    let grid = f0.grid();
    let vals = ftt.values();
    let lo = vals.iter().fold(T::zero(), |m, &x| m.min(x));
    let hi = vals.iter().fold(T::zero(), |m, &x| m.max(x));
    let slices = slices.max(2);
    let span = hi - lo;
    let ds = if span > T::zero() { span / T::count(slices) } else { T::one() };
    let s_values: Vec<T> = (0..=slices).map(|j| lo + ds * T::count(j)).collect();
    let fol = transport_foliation(st, f0, &s_values, cfg, &FoliationOptions::default())?;
    let mut families: Vec<Vec<SphereField<T>>> = vec![Vec::new(); 4];
    let mut derivs: Vec<Vec<SphereField<T>>> = vec![Vec::new(); 4];
    for (s, f) in s_values.iter().zip(&fol.fields) {
        let phi = foliation_rhs(st, *s, f)?;
        families[0].push(f.clone());
        derivs[0].push(phi.clone());
        for a in 0..3 {
            families[a + 1].push(f.rotation(a));
            derivs[a + 1].push(phi.rotation(a));
        }
    }
    let n = grid.len();
    let mut out: Vec<Vec<T>> = vec![vec![T::zero(); n]; 4];
    for k in 0..n {
        let s = vals[k];
        let j = if span > T::zero() { (((s - lo) / ds).floor().to_usize().unwrap_or(0)).min(slices - 1) } else { 0 };
        let x = if span > T::zero() { (s - s_values[j]) / ds } else { T::zero() };
        let (h00, h10, h01, h11) = hermite(x);
        for q in 0..4 {
            let (y0, y1) = (families[q][j].values()[k], families[q][j + 1].values()[k]);
            let (d0, d1) = (derivs[q][j].values()[k], derivs[q][j + 1].values()[k]);
            out[q][k] = h00 * y0 + h10 * ds * d0 + h01 * y1 + h11 * ds * d1;
        }
    }
    let f = SphereField::from_values(grid, &out[0]);
    let grads = [
        SphereField::from_values(grid, &out[1]),
        SphereField::from_values(grid, &out[2]),
        SphereField::from_values(grid, &out[3]),
    ];
    Ok((f, grads))
}

fn hermite<T: Real>(x: T) -> (T, T, T, T) {
    let x2 = x * x;
    let x3 = x2 * x;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    (two * x3 - three * x2 + T::one(), x3 - two * x2 + x, three * x2 - two * x3, x3 - x2)
}

/// Restricted differentials of the foliation on the graph surface together
/// with the reconstructed `s`-Hessian data.
#[derive(Clone, Debug)]
pub struct RestrictedGradients<T> {
    /// `f̄̃̃` obtained from the coupled system.
    pub fbar: SphereField<T>,
    /// `f̄^s_a = (R_a f̄^s)|_{s = f̃̃}`.
    pub grads: [SphereField<T>; 3],
    /// `p_i = ∂_i f̄^s` at `s = f̃̃(θ)`, per node.
    pub p: Vec<[T; 2]>,
    /// `∂_s ∂_i f̄^s` at `s = f̃̃(θ)`, per node.
    pub dp_ds: Vec<[T; 2]>,
    /// Coordinate Hessian `∂_i∂_j f̄^s` at `s = f̃̃(θ)` as `(θθ, θφ, φφ)`.
    pub hessian: Vec<[T; 3]>,
    /// `∂_s f̄^s` at `s = f̃̃(θ)`, per node.
    pub ds: Vec<T>,
    /// Largest antisymmetric part of the reconstructed Hessian.
    pub asymmetry: T,
}

/// `p_l = g̊_lm Σ_a R_a^m G_a` at one node.
fn one_form_from_rotations<T: Real>(theta: T, phi: T, ga: [T; 3]) -> [T; 2] {
    let mut v = [T::zero(); 2];
    for (a, &x) in ga.iter().enumerate() {
        let r = rotation_field(a, theta, phi);
        v[0] += r[0] * x;
        v[1] += r[1] * x;
    }
    let s = theta.sin();
    [v[0], v[1] * s * s]
}

/// Right hand side of the coupled system for `(f̄̃̃^t, f̄^{t,s}_a)`.
#[derive(Clone, Debug)]
pub struct RestrictedEval<T> {
    pub rhs: Vec<SphereField<T>>,
    /// `X̃̃^{t,s} = f̃̃ V / (1 + t V·df̃̃)` with `V = −b + 2Ω² g̸⁻¹ p`.
    pub flow: [Vec<T>; 2],
}

/// Evaluates the coupled restricted-gradient system at time `t`.
pub fn restricted_rhs<T: Real>(st: &Spacetime<T>, ftt: &SphereField<T>, dftt: &[Vec<T>; 2], t: T, y: &[SphereField<T>]) -> Result<RestrictedEval<T>> {
    let grid = y[0].grid();
    let n = grid.len();
    let grads_a: Vec<[Vec<T>; 2]> = (1..4).map(|a| y[a].grad()).collect();
    let mut out: Vec<Vec<T>> = vec![vec![T::zero(); n]; 4];
    let mut flow = [vec![T::zero(); n], vec![T::zero(); n]];
    let two = T::lit(2.0);
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let a_val = ftt.values()[k];
        let ga = [y[1].values()[k], y[2].values()[k], y[3].values()[k]];
        let p = one_form_from_rotations(th, ph, ga);
        let m = st.metric::<Jet1<T>>(t * a_val, y[0].values()[k], th, ph)?;
        let ginv = inverse2::<T, Jet1<T>>(&m.g);
        let h = [ginv[0] * m.omega2, ginv[1] * m.omega2, ginv[2] * m.omega2];
        let hv = [h[0].v, h[1].v, h[2].v];
        let b = [m.b[0].v, m.b[1].v];
        let hp = [hv[0] * p[0] + hv[1] * p[1], hv[1] * p[0] + hv[2] * p[1]];
        let v = [-b[0] + two * hp[0], -b[1] + two * hp[1]];
        let quad = |c: [T; 3]| c[0] * p[0] * p[0] + two * c[1] * p[0] * p[1] + c[2] * p[1] * p[1];
        let phi_val = -(b[0] * p[0] + b[1] * p[1]) + quad(hv);
        let dslot = |slot: usize| -> (T, [T; 2], [T; 3]) {
            let db = [m.b[0].d[slot], m.b[1].d[slot]];
            let dh = [h[0].d[slot], h[1].d[slot], h[2].d[slot]];
            (-(db[0] * p[0] + db[1] * p[1]) + quad(dh), db, dh)
        };
        let (phi_u, _, _) = dslot(U);
        let (_, db_t, dh_t) = dslot(TH);
        let (_, db_p, dh_p) = dslot(PH);
        let db = [db_t, db_p];
        let dh = [dh_t, dh_p];
        let df = [dftt[0][k], dftt[1][k]];
        let den = T::one() + t * (v[0] * df[0] + v[1] * df[1]);
        guard(den, k)?;
        let coef = a_val / den;
        out[0][k] = a_val * phi_val;
        flow[0][k] = coef * v[0];
        flow[1][k] = coef * v[1];
        let hsym = |c: &[T; 3], i: usize, j: usize| match (i, j) {
            (0, 0) => c[0],
            (1, 1) => c[2],
            _ => c[1],
        };
        for a in 0..3 {
            let r = rotation_field(a, th, ph);
            let dr = rotation_field_partials(a, th, ph);
            let mut comm = [T::zero(); 2];
            for l in 0..2 {
                for i in 0..2 {
                    comm[l] += r[i] * db[i][l] - b[i] * dr[i][l];
                }
            }
            let mut lie = [[T::zero(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = T::zero();
                    for kk in 0..2 {
                        acc += r[kk] * hsym(&dh[kk], i, j) - hsym(&hv, kk, j) * dr[kk][i] - hsym(&hv, i, kk) * dr[kk][j];
                    }
                    lie[i][j] = acc;
                }
            }
            let mut q = -(comm[0] * p[0] + comm[1] * p[1]) + phi_u * ga[a];
            for i in 0..2 {
                for j in 0..2 {
                    q += lie[i][j] * p[i] * p[j];
                }
            }
            let adv = v[0] * grads_a[a][0][k] + v[1] * grads_a[a][1][k];
            out[a + 1][k] = coef * (q + adv);
        }
    }
    Ok(RestrictedEval { rhs: out.iter().map(|v| SphereField::from_values(grid, v)).collect(), flow })
}

/// Transports `(f̄̃̃^t, f̄^{t,s}_a)` over `t ∈ [0, 1]` and reconstructs the
/// `s`-Hessian of the foliation on the graph surface.
pub fn restricted_gradients<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, ftt: &SphereField<T>, cfg: &TransportConfig) -> Result<RestrictedGradients<T>> {
    let dftt = ftt.grad();
    let y0 = vec![f0.clone(), f0.rotation(0), f0.rotation(1), f0.rotation(2)];
    let steps = cfg.steps(1.0);
    let y = rk4(y0, T::zero(), T::one(), steps, |t, y| Ok(restricted_rhs(st, ftt, &dftt, t, y)?.rhs))?;
    let mut it = y.into_iter();
    let fbar = it.next().expect("state");
    let grads = [it.next().expect("state"), it.next().expect("state"), it.next().expect("state")];
    reconstruct_hessian(st, ftt, fbar, grads)
}

fn reconstruct_hessian<T: Real>(st: &Spacetime<T>, ftt: &SphereField<T>, fbar: SphereField<T>, grads: [SphereField<T>; 3]) -> Result<RestrictedGradients<T>> {
    let grid = fbar.grid().clone();
    let n = grid.len();
    let mut vt = vec![T::zero(); n];
    let mut vp = vec![T::zero(); n];
    let mut p = Vec::with_capacity(n);
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let ga = [grads[0].values()[k], grads[1].values()[k], grads[2].values()[k]];
        let pk = one_form_from_rotations(th, ph, ga);
        let s2 = th.sin() * th.sin();
        vt[k] = pk[0];
        vp[k] = pk[1] / s2;
        p.push(pk);
    }
    let dv = vector_partials(&grid, &vt, &vp);
    let dftt = ftt.grad();
    let two = T::lit(2.0);
    let mut hessian = Vec::with_capacity(n);
    let mut dp_ds = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    let mut asymmetry = T::zero();
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let (st_, ct) = grid.sin_cos_theta(k);
        let s2 = st_ * st_;
        let dg_pp = [two * st_ * ct, T::zero()];
        let mut nmat = [[T::zero(); 2]; 2];
        for j in 0..2 {
            nmat[0][j] = dv[j][0][k];
            nmat[1][j] = dg_pp[j] * vp[k] + s2 * dv[j][1][k];
        }
        let pk = p[k];
        let ham = hamiltonian(st, ftt.values()[k], fbar.values()[k], th, ph, pk)?;
        let v = ham.dp;
        let df = [dftt[0][k], dftt[1][k]];
        let den = T::one() + v[0] * df[0] + v[1] * df[1];
        guard(den, k)?;
        let mut w = [T::zero(); 2];
        for l in 0..2 {
            let c = ham.dx[TH + l] + ham.dx[U] * pk[l];
            w[l] = (c + v[0] * nmat[l][0] + v[1] * nmat[l][1]) / den;
        }
        let mut hm = [[T::zero(); 2]; 2];
        for l in 0..2 {
            for j in 0..2 {
                hm[l][j] = nmat[l][j] - df[j] * w[l];
            }
        }
        asymmetry = asymmetry.max((hm[0][1] - hm[1][0]).abs());
        hessian.push([hm[0][0], (hm[0][1] + hm[1][0]) * T::lit(0.5), hm[1][1]]);
        dp_ds.push(w);
        ds.push(ham.value);
    }
    Ok(RestrictedGradients { fbar, grads, p, dp_ds, hessian, ds, asymmetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::SchwarzschildGauge;
    use crate::provider::PerturbationRecipe;
    use crate::sphere::SphereGrid;

    fn gauge() -> SchwarzschildGauge<f64> {
        SchwarzschildGauge::new(1.0, 0.25, 0.5).unwrap()
    }

    fn sch() -> Spacetime<f64> {
        Spacetime::schwarzschild(gauge())
    }

    fn perturbed(eps: f64) -> Spacetime<f64> {
        Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(eps)).unwrap()
    }

    fn max_diff(a: &SphereField<f64>, b: &SphereField<f64>) -> f64 {
        a.sub(b).sup_norm()
    }

    #[test]
    fn constant_label_is_preserved() {
        let grid = SphereGrid::<f64>::new(8);
        let f0 = SphereField::constant(&grid, 0.1);
        let fol = transport_foliation(&sch(), &f0, &[0.2, -0.1], &TransportConfig::default(), &FoliationOptions::default()).unwrap();
        for f in &fol.fields {
            assert!(max_diff(f, &f0) < 1e-15);
        }
        let ftt = SphereField::from_fn(&grid, |t, p| 0.05 * (1.0 + 0.3 * t.cos() * p.sin()));
        let fb = second_to_first(&sch(), &f0, &ftt, &TransportConfig::default()).unwrap();
        assert!(max_diff(&fb, &f0) < 1e-14);
        let rg = restricted_gradients(&sch(), &f0, &ftt, &TransportConfig::default()).unwrap();
        for g in &rg.grads {
            assert!(g.sup_norm() < 1e-14);
        }
    }

    #[test]
    fn flat_graph_leaves_label_unchanged() {
        let grid = SphereGrid::<f64>::new(8);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.02).add(&SphereField::ylm(&grid, 2, 1, 0.01));
        let zero = SphereField::zeros(&grid);
        let st = perturbed(1e-3);
        let fb = second_to_first(&st, &f0, &zero, &TransportConfig::default()).unwrap();
        assert!(max_diff(&fb, &f0) < 1e-15);
        let rg = restricted_gradients(&st, &f0, &zero, &TransportConfig::default()).unwrap();
        for a in 0..3 {
            assert!(max_diff(&rg.grads[a], &f0.rotation(a)) < 1e-15);
        }
    }

    #[test]
    fn foliation_matches_characteristics() {
        let st = sch();
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(15);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.01 * r0);
        let s_end = 0.1 * r0;
        let fol = transport_foliation(&st, &f0, &[s_end], &TransportConfig::default(), &FoliationOptions::default()).unwrap();
        let fs = &fol.fields[0];
        let [gt, gp] = f0.grad();
        let mut worst: f64 = 0.0;
        for (k, (th, ph)) in grid.nodes().enumerate().step_by(7) {
            let start = Characteristic { theta: th, phi: ph, u: f0.values()[k], p: [gt[k], gp[k]] };
            let end = characteristic(&st, start, s_end, 200).unwrap();
            worst = worst.max((fs.eval(end.theta, end.phi) - end.u).abs());
        }
        assert!(worst <= 1e-8 * r0, "characteristics disagree by {worst:e}");
    }

    #[test]
    fn schwarzschild_minimum_is_nondecreasing() {
        let st = sch();
        let grid = SphereGrid::<f64>::new(10);
        let f0 = SphereField::ylm(&grid, 2, 0, 0.05).add(&SphereField::ylm(&grid, 1, 1, 0.03));
        let fol = transport_foliation(&st, &f0, &[0.4], &TransportConfig::default(), &FoliationOptions::default()).unwrap();
        let mins: Vec<f64> = fol.diagnostics.iter().map(|d| d.min).collect();
        assert!(mins.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(mins.last().unwrap() > &mins[0]);
    }

    #[test]
    fn mean_drift_is_quadratic_in_amplitude() {
        let st = sch();
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(10);
        let drift = |a: f64| {
            let f0 = SphereField::ylm(&grid, 1, 0, a * r0);
            let fol = transport_foliation(&st, &f0, &[0.2 * r0], &TransportConfig::default(), &FoliationOptions::default()).unwrap();
            fol.fields[0].mean() - f0.mean()
        };
        let (d1, d2) = (drift(0.02), drift(0.01));
        let slope = (d1 / d2).log2();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn method_three_matches_method_one() {
        let st = sch();
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(12);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.01 * r0);
        let ftt = SphereField::constant(&grid, 0.02 * r0).add(&SphereField::ylm(&grid, 2, 0, 0.01 * r0));
        let cfg = TransportConfig::default();
        let m3 = second_to_first(&st, &f0, &ftt, &cfg).unwrap();
        let (m1, grads) = method_one(&st, &f0, &ftt, 16, &cfg).unwrap();
        assert!(max_diff(&m3, &m1) <= 1e-7 * r0);
        let rg = restricted_gradients(&st, &f0, &ftt, &cfg).unwrap();
        assert!(max_diff(&rg.fbar, &m1) <= 1e-7 * r0);
        for a in 0..3 {
            assert!(max_diff(&rg.grads[a], &grads[a]) <= 1e-6 * r0);
        }
    }

    #[test]
    fn perturbed_methods_agree() {
        let st = perturbed(1e-3);
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(10);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.01 * r0).add(&SphereField::ylm(&grid, 2, -1, 0.005 * r0));
        let ftt = SphereField::constant(&grid, -0.01 * r0).add(&SphereField::ylm(&grid, 1, 1, 0.01 * r0));
        let cfg = TransportConfig::default();
        let m3 = second_to_first(&st, &f0, &ftt, &cfg).unwrap();
        let (m1, grads) = method_one(&st, &f0, &ftt, 16, &cfg).unwrap();
        let fine = second_to_first(&st, &f0, &ftt, &cfg.refined()).unwrap();
        let disc = max_diff(&m3, &fine).max(1e-13 * r0);
        assert!(max_diff(&m3, &m1) <= 10.0 * disc.max(1e-10 * r0), "{:e} vs {:e}", max_diff(&m3, &m1), disc);
        let rg = restricted_gradients(&st, &f0, &ftt, &cfg).unwrap();
        for a in 0..3 {
            assert!(max_diff(&rg.grads[a], &grads[a]) <= 1e-8 * r0);
        }
    }

    #[test]
    fn restricted_gradients_have_consistent_norm() {
        let st = perturbed(1e-3);
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(10);
        let f0 = SphereField::ylm(&grid, 1, 1, 0.02 * r0).add(&SphereField::ylm(&grid, 3, 0, 0.01 * r0));
        let ftt = SphereField::constant(&grid, 0.01 * r0).add(&SphereField::ylm(&grid, 2, 2, 0.01 * r0));
        let rg = restricted_gradients(&st, &f0, &ftt, &TransportConfig::default()).unwrap();
        let (_, grads) = method_one(&st, &f0, &ftt, 16, &TransportConfig::default()).unwrap();
        for (k, (th, _)) in grid.nodes().enumerate() {
            let sum: f64 = grads.iter().map(|g| g.values()[k].powi(2)).sum();
            let p = rg.p[k];
            let norm = p[0] * p[0] + p[1] * p[1] / th.sin().powi(2);
            assert!((sum - norm).abs() <= 1e-8 * r0 * r0, "node {k}: {sum:e} vs {norm:e}");
        }
        assert!(rg.asymmetry < 1e-8);
    }

    #[test]
    fn reconstructed_hessian_matches_foliation() {
        let st = perturbed(1e-3);
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(10);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.02 * r0);
        let s0 = 0.03 * r0;
        let ftt = SphereField::constant(&grid, s0);
        let cfg = TransportConfig::default();
        let rg = restricted_gradients(&st, &f0, &ftt, &cfg).unwrap();
        let fol = transport_foliation(&st, &f0, &[s0], &cfg, &FoliationOptions::default()).unwrap();
        let h = fol.fields[0].coord_hessian();
        let phi = foliation_rhs(&st, s0, &fol.fields[0]).unwrap();
        let dphi = phi.grad();
        for k in 0..grid.len() {
            for c in 0..3 {
                assert!((rg.hessian[k][c] - h[c][k]).abs() < 1e-8, "node {k} comp {c}");
            }
            for l in 0..2 {
                assert!((rg.dp_ds[k][l] - dphi[l][k]).abs() < 1e-8);
            }
            assert!((rg.ds[k] - phi.values()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn integrator_is_fourth_order() {
        let st = perturbed(1e-3);
        let r0 = st.r0();
        let grid = SphereGrid::<f64>::new(8);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.2 * r0).add(&SphereField::ylm(&grid, 2, 0, 0.1 * r0));
        let ftt = SphereField::constant(&grid, 0.1 * r0).add(&SphereField::ylm(&grid, 1, 0, 0.05 * r0));
        let run = |n: usize| second_to_first(&st, &f0, &ftt, &TransportConfig { steps_per_unit: n, min_steps: 1 }).unwrap();
        let (a, b, c) = (run(2), run(4), run(8));
        let ratio = max_diff(&a, &b) / max_diff(&b, &c);
        assert!((ratio / 16.0 - 1.0).abs() < 0.2, "ratio {ratio}");
        let fol = |n: usize| {
            let cfg = TransportConfig { steps_per_unit: n, min_steps: 1 };
            transport_foliation(&st, &f0, &[0.2 * r0], &cfg, &FoliationOptions::default()).unwrap().fields.remove(0)
        };
        let (a, b, c) = (fol(5), fol(10), fol(20));
        let ratio = max_diff(&a, &b) / max_diff(&b, &c);
        assert!((ratio / 16.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn tangent_graph_is_rejected() {
        assert!(guard(0.3f64, 0).is_err());
        assert!(guard(-0.7f64, 0).is_ok());
        let st = sch();
        let grid = SphereGrid::<f64>::new(16);
        let f0 = SphereField::ylm(&grid, 12, 0, 0.15);
        let ftt = SphereField::ylm(&grid, 12, 0, -0.08);
        match second_to_first(&st, &f0, &ftt, &TransportConfig::default()) {
            Err(Error::NullTangency { denominator, .. }) => assert!(denominator.abs() < DENOMINATOR_GUARD),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("tangent graph accepted"),
        }
    }

    #[test]
    fn single_precision_transport_runs() {
        let gauge = SchwarzschildGauge::<f32>::new(1.0, 0.25, 0.5).unwrap();
        let st = Spacetime::schwarzschild(gauge);
        let grid = SphereGrid::<f32>::new(6);
        let f0 = SphereField::ylm(&grid, 1, 0, 0.02f32);
        let ftt = SphereField::constant(&grid, 0.04f32);
        let a = second_to_first(&st, &f0, &ftt, &TransportConfig::default()).unwrap();
        let st64 = sch();
        let g64 = SphereGrid::<f64>::new(6);
        let b = second_to_first(&st64, &SphereField::ylm(&g64, 1, 0, 0.02), &SphereField::constant(&g64, 0.04), &TransportConfig::default()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((*x as f64 - y).abs() < 1e-5);
        }
    }
}
