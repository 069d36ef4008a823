//! Metrics in double null gauge and their structure coefficients.
//!
//! A [`Spacetime`] is the Schwarzschild gauge of [`crate::background`]
//! optionally deformed by a [`PerturbationRecipe`]. The deformed metric is
//!
//! `g = 2Ω² (ds ⊗ dū + dū ⊗ ds) + g̸_ij (dθⁱ − bⁱ ds)(dθʲ − bʲ ds)`
//!
//! with `log Ω = log Ω_Sch + ε Σ A W Y`, `g̸ = r² e^{2εψ} g̊` where
//! `ψ = Σ A W Y`, and `b = ε Σ A W V / r₀` for `V` the gradient or curl of a
//! spherical harmonic. Every quantity is a closed form in `(s, ū, θ, φ)` and
//! is evaluated through forward-mode jets, so derivative slots are exact.
//!
//! The structure coefficients are read off from the metric:
//! `χ = ½ ∂_ū g̸`, `χ̄ = ½ (∂_s g̸ + L_b g̸)`, `ω = ∂_ū log Ω`,
//! `ω̄ = (∂_s + b·∂) log Ω` and `η, η̄ = d log Ω ± g̸ ∂_ū b / (4Ω²)`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::background::SchwarzschildGauge;
use crate::error::{Error, Result};
use crate::jet::{Jet, Jet1, Jet2, PH, S, TH, U};
use crate::scalar::{Dual, Real};
use crate::sphere::{inverse2, ylm_dual, ylm_grad_dual, SphereGrid};

/// Analytic envelope in `(s, ū)` multiplying an angular profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `1`
    One,
    /// `s / r₀`
    S,
    /// `ū / r₀`
    U,
    /// `ū² / (2 r₀²)`
    U2,
    /// `s ū / r₀²`
    Su,
    /// `1 / (1 + (s² + ū²)/(w r₀)²)`
    Lorentzian,
    /// `exp(−(s² + ū²)/(2 (w r₀)²))`
    Gaussian,
    /// `(s / r₀)` times the Lorentzian
    SLorentzian,
    /// `(ū / r₀)` times the Lorentzian
    ULorentzian,
    /// `ū² / (2 r₀²)` times the Lorentzian
    U2Lorentzian,
}

impl WindowKind {
    /// Evaluates the window with width `w` (in units of `r₀`).
    pub fn eval<T: Real, D: Dual<T>>(self, s: D, u: D, r0: T, w: T) -> D {
        let one = D::cst(T::one());
        let sr = s / r0;
        let ur = u / r0;
        let rho2 = (s * s + u * u) / (w * w * r0 * r0);
        let lor = (one + rho2).drecip();
        let half = T::lit(0.5);
        match self {
            WindowKind::One => one,
            WindowKind::S => sr,
            WindowKind::U => ur,
            WindowKind::U2 => ur * ur * half,
            WindowKind::Su => sr * ur,
            WindowKind::Lorentzian => lor,
            WindowKind::Gaussian => (-(rho2 * half)).dexp(),
            WindowKind::SLorentzian => sr * lor,
            WindowKind::ULorentzian => ur * lor,
            WindowKind::U2Lorentzian => ur * ur * half * lor,
        }
    }

    /// Whether `∂_ū` of the window vanishes at `(0, 0)`.
    pub fn stationary_at_origin(self) -> bool {
        !matches!(self, WindowKind::U | WindowKind::ULorentzian)
    }

    /// Whether the window vanishes identically on `{ū = 0}`.
    pub fn vanishes_at_u0(self) -> bool {
        matches!(self, WindowKind::U | WindowKind::U2 | WindowKind::Su | WindowKind::ULorentzian | WindowKind::U2Lorentzian)
    }
}

fn default_width() -> f64 {
    1.0
}

/// Scalar channel term `A · W(s, ū) · Y_lm(θ, φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTerm {
    pub l: usize,
    pub m: i64,
    pub amplitude: f64,
    pub window: WindowKind,
    #[serde(default = "default_width")]
    pub width: f64,
}

/// Which vector field a shift term is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// `g̊⁻¹ dY`
    Gradient,
    /// `g̊⁻¹ ⋆dY`
    Curl,
}

/// Shift term `b = ε A W V / r₀` with `V` the gradient or curl of `Y_lm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftTerm {
    pub l: usize,
    pub m: i64,
    pub amplitude: f64,
    pub kind: ShiftKind,
    pub window: WindowKind,
    #[serde(default = "default_width")]
    pub width: f64,
}

/// Synthetic deformation of the Schwarzschild metric.
///
/// `log_omega` and `conformal` perturb `log Ω` and the conformal factor of
/// `g̸`; `shift` builds `b`; `eta` and `etabar` add `ε d(A W Y)` on top of
/// the torsions derived from the metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRecipe {
    pub epsilon: f64,
    #[serde(default)]
    pub log_omega: Vec<ScalarTerm>,
    #[serde(default)]
    pub conformal: Vec<ScalarTerm>,
    #[serde(default)]
    pub shift: Vec<ShiftTerm>,
    #[serde(default)]
    pub eta: Vec<ScalarTerm>,
    #[serde(default)]
    pub etabar: Vec<ScalarTerm>,
}

impl Default for PerturbationRecipe {
    fn default() -> Self {
        PerturbationRecipe {
            epsilon: 1e-3,
            log_omega: vec![ScalarTerm { l: 1, m: 0, amplitude: 0.5, window: WindowKind::Lorentzian, width: 1.0 }],
            conformal: vec![
                ScalarTerm { l: 0, m: 0, amplitude: 0.3, window: WindowKind::U2Lorentzian, width: 0.6 },
                ScalarTerm { l: 2, m: 0, amplitude: 0.2, window: WindowKind::U2Lorentzian, width: 0.6 },
            ],
            shift: vec![ShiftTerm { l: 1, m: 0, amplitude: 0.5, kind: ShiftKind::Curl, window: WindowKind::U, width: 1.0 }],
            eta: Vec::new(),
            etabar: Vec::new(),
        }
    }
}

impl PerturbationRecipe {
    /// Recipe with no channels at the given `ε`.
    pub fn empty(epsilon: f64) -> Self {
        PerturbationRecipe { epsilon, log_omega: Vec::new(), conformal: Vec::new(), shift: Vec::new(), eta: Vec::new(), etabar: Vec::new() }
    }

    /// Same recipe with a different `ε`.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        PerturbationRecipe { epsilon, ..self.clone() }
    }

    /// Same recipe with every amplitude multiplied by `factor` while the
    /// declared `ε` is kept.
    pub fn scaled_amplitudes(&self, factor: f64) -> Self {
        let mut r = self.clone();
        for t in r.log_omega.iter_mut().chain(r.conformal.iter_mut()).chain(r.eta.iter_mut()).chain(r.etabar.iter_mut()) {
            t.amplitude *= factor;
        }
        for t in r.shift.iter_mut() {
            t.amplitude *= factor;
        }
        r
    }

    /// Checks ranges and the structural constraints of the channels.
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Recipe("epsilon must be finite and non-negative".into()));
        }
        let check_lm = |name: &str, l: usize, m: i64, a: f64, w: f64| -> Result<()> {
            if m.unsigned_abs() as usize > l {
                return Err(Error::Recipe(format!("{name}: |m| = {} exceeds l = {l}", m.abs())));
            }
            if !a.is_finite() {
                return Err(Error::Recipe(format!("{name}: amplitude must be finite")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Recipe(format!("{name}: width must be positive")));
            }
            Ok(())
        };
        for t in &self.log_omega {
            check_lm("log_omega", t.l, t.m, t.amplitude, t.width)?;
        }
        for t in &self.conformal {
            check_lm("conformal", t.l, t.m, t.amplitude, t.width)?;
            if !t.window.stationary_at_origin() {
                return Err(Error::Recipe(format!(
                    "conformal: window {:?} has non-zero ∂_ū at the horizon section and would make it trapped or untrapped",
                    t.window
                )));
            }
        }
        for t in &self.shift {
            check_lm("shift", t.l, t.m, t.amplitude, t.width)?;
            if t.l == 0 {
                return Err(Error::Recipe("shift: l must be at least 1".into()));
            }
            if !t.window.vanishes_at_u0() {
                return Err(Error::Recipe(format!("shift: window {:?} must vanish on ū = 0", t.window)));
            }
        }
        for t in self.eta.iter().chain(self.etabar.iter()) {
            check_lm("eta", t.l, t.m, t.amplitude, t.width)?;
        }
        Ok(())
    }

    /// Whether every channel is linear in the amplitudes, so that the
    /// deviation from Schwarzschild scales exactly with them.
    pub fn is_linear(&self) -> bool {
        self.conformal.is_empty() && (self.shift.is_empty() || self.log_omega.is_empty())
    }
}

/// The metric functions at one point, as jets of order `D`.
#[derive(Clone, Copy, Debug)]
pub struct Metric<D> {
    pub omega2: D,
    pub log_omega: D,
    /// `(g̸_θθ, g̸_θφ, g̸_φφ)`.
    pub g: [D; 3],
    /// `(b^θ, b^φ)`.
    pub b: [D; 2],
    /// Potential whose angular differential is added to `η`.
    pub eta_pot: D,
    /// Potential whose angular differential is added to `η̄`.
    pub etabar_pot: D,
}

/// Structure coefficients of the double null foliation at one point.
///
/// Symmetric tensors are stored as `(θθ, θφ, φφ)`, vectors and 1-forms as
/// `(θ, φ)` coordinate components.
#[derive(Clone, Copy, Debug)]
pub struct Coeffs<E> {
    pub omega2: E,
    pub log_omega: E,
    pub g: [E; 3],
    pub ginv: [E; 3],
    pub b: [E; 2],
    pub chi: [E; 3],
    pub chibar: [E; 3],
    pub tr_chi: E,
    pub tr_chibar: E,
    pub chi_hat: [E; 3],
    pub chibar_hat: [E; 3],
    pub omega: E,
    pub omegabar: E,
    pub eta: [E; 2],
    pub etabar: [E; 2],
}

/// Coefficients together with their first partials in `(s, ū, θ, φ)`.
pub type CoeffBundle<T> = Coeffs<Jet1<T>>;

/// Metric with first partials and coefficients without partials.
#[derive(Clone, Copy, Debug)]
pub struct PointSample<T> {
    pub metric: Metric<Jet1<T>>,
    pub coeffs: Coeffs<T>,
}

#[inline]
fn sym<E: Copy>(h: &[E; 3], i: usize, j: usize) -> E {
    match (i, j) {
        (0, 0) => h[0],
        (1, 1) => h[2],
        _ => h[1],
    }
}

const ANG: [usize; 2] = [TH, PH];

/// Trace of a symmetric tensor with an inverse metric.
#[inline]
pub fn trace<T: Real, E: Dual<T>>(ginv: &[E; 3], h: &[E; 3]) -> E {
    ginv[0] * h[0] + ginv[1] * h[1] * T::lit(2.0) + ginv[2] * h[2]
}

/// Derives the structure coefficients from a metric of jet order `D`.
pub fn coefficients<T: Real, D: Jet<T>>(m: &Metric<D>) -> Coeffs<D::Lower> {
    let half = T::lit(0.5);
    let g: [D::Lower; 3] = [m.g[0].lower(), m.g[1].lower(), m.g[2].lower()];
    let b = [m.b[0].lower(), m.b[1].lower()];
    let ginv = inverse2::<T, D::Lower>(&g);
    let omega2 = m.omega2.lower();
    let log_omega = m.log_omega.lower();
    let dg = |slot: usize| [m.g[0].partial(slot), m.g[1].partial(slot), m.g[2].partial(slot)];
    let db = |slot: usize| [m.b[0].partial(slot), m.b[1].partial(slot)];
    let dg_u = dg(U);
    let dg_s = dg(S);
    let dg_ang = [dg(TH), dg(PH)];
    let db_ang = [db(TH), db(PH)];
    let db_u = db(U);

    let chi = [dg_u[0] * half, dg_u[1] * half, dg_u[2] * half];
    let mut chibar = dg_s;
    for (c, (i, j)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
        let mut acc = dg_s[c];
        for k in 0..2 {
            acc = acc + b[k] * dg_ang[k][c];
            acc = acc + sym(&g, k, j) * db_ang[i][k];
            acc = acc + sym(&g, i, k) * db_ang[j][k];
        }
        chibar[c] = acc * half;
    }
    let tr_chi = trace::<T, _>(&ginv, &chi);
    let tr_chibar = trace::<T, _>(&ginv, &chibar);
    let chi_hat = [chi[0] - g[0] * tr_chi * half, chi[1] - g[1] * tr_chi * half, chi[2] - g[2] * tr_chi * half];
    let chibar_hat = [
        chibar[0] - g[0] * tr_chibar * half,
        chibar[1] - g[1] * tr_chibar * half,
        chibar[2] - g[2] * tr_chibar * half,
    ];
    let omega = m.log_omega.partial(U);
    let omegabar = m.log_omega.partial(S) + b[0] * m.log_omega.partial(TH) + b[1] * m.log_omega.partial(PH);
    let quarter_inv = (omega2 * T::lit(4.0)).drecip();
    let mut eta = [omega; 2];
    let mut etabar = [omega; 2];
    for i in 0..2 {
        let zeta = (sym(&g, i, 0) * db_u[0] + sym(&g, i, 1) * db_u[1]) * quarter_inv;
        let dlog = m.log_omega.partial(ANG[i]);
        eta[i] = dlog + zeta + m.eta_pot.partial(ANG[i]);
        etabar[i] = dlog - zeta + m.etabar_pot.partial(ANG[i]);
    }
    Coeffs { omega2, log_omega, g, ginv, b, chi, chibar, tr_chi, tr_chibar, chi_hat, chibar_hat, omega, omegabar, eta, etabar }
}

/// A Schwarzschild background, optionally deformed by a recipe.
#[derive(Clone, Debug)]
pub struct Spacetime<T> {
    gauge: SchwarzschildGauge<T>,
    recipe: Option<PerturbationRecipe>,
}

impl<T: Real> Spacetime<T> {
    /// Exact Schwarzschild.
    pub fn schwarzschild(gauge: SchwarzschildGauge<T>) -> Self {
        Spacetime { gauge, recipe: None }
    }

    /// Schwarzschild deformed by a validated recipe.
    pub fn perturbed(gauge: SchwarzschildGauge<T>, recipe: PerturbationRecipe) -> Result<Self> {
        recipe.validate()?;
        Ok(Spacetime { gauge, recipe: Some(recipe) })
    }

    pub fn gauge(&self) -> &SchwarzschildGauge<T> {
        &self.gauge
    }

    pub fn recipe(&self) -> Option<&PerturbationRecipe> {
        self.recipe.as_ref()
    }

    /// Declared closeness parameter (zero for Schwarzschild).
    pub fn epsilon(&self) -> T {
        self.recipe.as_ref().map_or(T::zero(), |r| T::lit(r.epsilon))
    }

    #[inline]
    pub fn r0(&self) -> T {
        self.gauge.r0()
    }

    /// Metric functions at `(s, ū, θ, φ)` as jets of type `D`.
    pub fn metric<D: Jet<T>>(&self, s: T, u: T, theta: T, phi: T) -> Result<Metric<D>> {
        let sj = D::var(s, S);
        let uj = D::var(u, U);
        let tj = D::var(theta, TH);
        let pj = D::var(phi, PH);
        let r = self.gauge.area_radius_dual(sj, uj)?;
        let om2_sch = self.gauge.omega2_dual(sj, uj, r);
        let zero = D::cst(T::zero());
        let st = tj.dsin();
        let Some(rec) = self.recipe.as_ref() else {
            let r2 = r * r;
            return Ok(Metric {
                omega2: om2_sch,
                log_omega: om2_sch.dln() * T::lit(0.5),
                g: [r2, zero, r2 * st * st],
                b: [zero, zero],
                eta_pot: zero,
                etabar_pot: zero,
            });
        };
        let r0 = self.r0();
        let eps = T::lit(rec.epsilon);
        let scalar = |terms: &[ScalarTerm]| -> D {
            let mut acc = zero;
            for t in terms {
                let w = t.window.eval(sj, uj, r0, T::lit(t.width));
                let y = ylm_dual::<T, D>(t.l, t.m, tj, pj);
                acc = acc + w * y * (eps * T::lit(t.amplitude));
            }
            acc
        };
        let log_omega = om2_sch.dln() * T::lit(0.5) + scalar(&rec.log_omega);
        let psi = scalar(&rec.conformal);
        let mut b = [zero, zero];
        for t in &rec.shift {
            let w = t.window.eval(sj, uj, r0, T::lit(t.width)) * (eps * T::lit(t.amplitude) / r0);
            let (yt, yp) = ylm_grad_dual::<T, D>(t.l, t.m, tj, pj);
            let (vt, vp) = match t.kind {
                ShiftKind::Gradient => (yt, yp / (st * st)),
                ShiftKind::Curl => (-(yp / st), yt / st),
            };
            b[0] = b[0] + w * vt;
            b[1] = b[1] + w * vp;
        }
        let conf = (psi * T::lit(2.0)).dexp() * r * r;
        Ok(Metric {
            omega2: (log_omega * T::lit(2.0)).dexp(),
            log_omega,
            g: [conf, zero, conf * st * st],
            b,
            eta_pot: scalar(&rec.eta),
            etabar_pot: scalar(&rec.etabar),
        })
    }

    /// Metric with first partials and the coefficients at one point.
    pub fn sample(&self, s: T, u: T, theta: T, phi: T) -> Result<PointSample<T>> {
        let m2: Metric<Jet2<T>> = self.metric(s, u, theta, phi)?;
        let c = coefficients::<T, Jet2<T>>(&m2);
        let metric = Metric {
            omega2: m2.omega2.lower(),
            log_omega: m2.log_omega.lower(),
            g: [m2.g[0].lower(), m2.g[1].lower(), m2.g[2].lower()],
            b: [m2.b[0].lower(), m2.b[1].lower()],
            eta_pot: m2.eta_pot.lower(),
            etabar_pot: m2.etabar_pot.lower(),
        };
        Ok(PointSample { metric, coeffs: lower_coeffs(&c) })
    }

    /// Coefficients with first partials at one point.
    pub fn bundle(&self, s: T, u: T, theta: T, phi: T) -> Result<CoeffBundle<T>> {
        let m: Metric<Jet2<T>> = self.metric(s, u, theta, phi)?;
        Ok(coefficients::<T, Jet2<T>>(&m))
    }

    /// Coefficients without partials at one point.
    pub fn coeffs(&self, s: T, u: T, theta: T, phi: T) -> Result<Coeffs<T>> {
        let m: Metric<Jet1<T>> = self.metric(s, u, theta, phi)?;
        Ok(coefficients::<T, Jet1<T>>(&m))
    }

    /// Bundles at every node of `grid` on the sphere `Σ_{s,ū}`.
    pub fn sample_sphere(&self, s: T, u: T, grid: &Arc<SphereGrid<T>>) -> Result<Vec<CoeffBundle<T>>> {
        grid.nodes().map(|(th, ph)| self.bundle(s, u, th, ph)).collect()
    }

    /// Area radius of `Σ_{s,ū}` by quadrature of the induced area form.
    pub fn area_radius_on_sphere(&self, s: T, u: T, grid: &Arc<SphereGrid<T>>) -> Result<T> {
        let mut dens = Vec::with_capacity(grid.len());
        for (k, (th, ph)) in grid.nodes().enumerate() {
            let m: Metric<T> = self.metric_values(s, u, th, ph)?;
            let det = m.g[0] * m.g[2] - m.g[1] * m.g[1];
            dens.push(det.sqrt() / grid.sin_cos_theta(k).0);
        }
        Ok((grid.integrate(&dens) / (T::lit(4.0) * T::PI())).sqrt())
    }

    /// Metric functions without partials at one point.
    pub fn metric_values(&self, s: T, u: T, theta: T, phi: T) -> Result<Metric<T>> {
        let m: Metric<Jet1<T>> = self.metric(s, u, theta, phi)?;
        Ok(Metric {
            omega2: m.omega2.v,
            log_omega: m.log_omega.v,
            g: [m.g[0].v, m.g[1].v, m.g[2].v],
            b: [m.b[0].v, m.b[1].v],
            eta_pot: m.eta_pot.v,
            etabar_pot: m.etabar_pot.v,
        })
    }
}

/// Drops the partials of a bundle.
pub fn lower_coeffs<T: Real>(c: &CoeffBundle<T>) -> Coeffs<T> {
    let l3 = |a: &[Jet1<T>; 3]| [a[0].v, a[1].v, a[2].v];
    let l2 = |a: &[Jet1<T>; 2]| [a[0].v, a[1].v];
    Coeffs {
        omega2: c.omega2.v,
        log_omega: c.log_omega.v,
        g: l3(&c.g),
        ginv: l3(&c.ginv),
        b: l2(&c.b),
        chi: l3(&c.chi),
        chibar: l3(&c.chibar),
        tr_chi: c.tr_chi.v,
        tr_chibar: c.tr_chibar.v,
        chi_hat: l3(&c.chi_hat),
        chibar_hat: l3(&c.chibar_hat),
        omega: c.omega.v,
        omegabar: c.omegabar.v,
        eta: l2(&c.eta),
        etabar: l2(&c.etabar),
    }
}

// ---------------------------------------------------------------------------
// Envelope validation

/// Where the envelopes are sampled.
#[derive(Clone, Debug)]
pub struct EnvelopeSampling<T> {
    pub s_values: Vec<T>,
    pub u_values: Vec<T>,
    pub band_limit: usize,
}

impl<T: Real> EnvelopeSampling<T> {
    /// `n × n` points filling the coordinate neighbourhood of `gauge`.
    pub fn uniform(gauge: &SchwarzschildGauge<T>, n: usize, band_limit: usize) -> Self {
        let r0 = gauge.r0();
        let lin = |a: T, n: usize| -> Vec<T> {
            (0..n).map(|i| -a + a * T::lit(2.0) * T::count(i) / T::count(n.max(2) - 1)).collect()
        };
        EnvelopeSampling {
            s_values: lin(gauge.kappa * r0, n),
            u_values: lin(gauge.tau * r0 * T::lit(0.98), n),
            band_limit,
        }
    }
}

/// Worst ratio of one channel and derivative order.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeRow {
    pub channel: &'static str,
    pub derivative: &'static str,
    pub max_ratio: f64,
    pub s: f64,
    pub u: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EnvelopeRow {
    pub fn violated(&self) -> bool {
        !(self.max_ratio <= 1.0)
    }
}

/// Result of [`Spacetime::validate_envelopes`].
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    pub epsilon: f64,
    pub rows: Vec<EnvelopeRow>,
}

impl EnvelopeReport {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.violated())
    }

    pub fn ratio(&self, channel: &str, derivative: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.channel == channel && r.derivative == derivative).map(|r| r.max_ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,derivative,max_ratio,violated,s,u,theta,phi\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.channel,
                r.derivative,
                r.max_ratio,
                r.violated(),
                r.s,
                r.u,
                r.theta,
                r.phi
            );
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Scalar,
    Vector,
    Form,
    Sym,
}

/// Round metric norm of a tensor with components `c` at colatitude with
/// `sin θ = st`.
fn round_norm<T: Real>(kind: Kind, c: &[T], st: T) -> T {
    let s2 = st * st;
    match kind {
        Kind::Scalar => c[0].abs(),
        Kind::Vector => (c[0] * c[0] + s2 * c[1] * c[1]).sqrt(),
        Kind::Form => (c[0] * c[0] + c[1] * c[1] / s2).sqrt(),
        Kind::Sym => (c[0] * c[0] + T::lit(2.0) * c[1] * c[1] / s2 + c[2] * c[2] / (s2 * s2)).sqrt(),
    }
}

/// Round metric norm of `∇̊` of a tensor given its components and their
/// angular partials `dc[k]`.
fn round_nabla_norm<T: Real>(kind: Kind, c: &[T], dc: [&[T]; 2], st: T, ct: T) -> T {
    let s2 = st * st;
    let gam = |k: usize, i: usize, j: usize| -> T {
        match (k, i, j) {
            (0, 1, 1) => -st * ct,
            (1, 0, 1) | (1, 1, 0) => ct / st,
            _ => T::zero(),
        }
    };
    let ginv = [T::one(), s2.recip()];
    let gdn = [T::one(), s2];
    let mut acc = T::zero();
    match kind {
        Kind::Scalar => {
            for k in 0..2 {
                acc += ginv[k] * dc[k][0] * dc[k][0];
            }
        }
        Kind::Vector => {
            for k in 0..2 {
                for i in 0..2 {
                    let mut v = dc[k][i];
                    for l in 0..2 {
                        v += gam(i, k, l) * c[l];
                    }
                    acc += ginv[k] * gdn[i] * v * v;
                }
            }
        }
        Kind::Form => {
            for k in 0..2 {
                for i in 0..2 {
                    let mut v = dc[k][i];
                    for l in 0..2 {
                        v -= gam(l, k, i) * c[l];
                    }
                    acc += ginv[k] * ginv[i] * v * v;
                }
            }
        }
        Kind::Sym => {
            let h = |i: usize, j: usize| sym(&[c[0], c[1], c[2]], i, j);
            let dh = |k: usize, i: usize, j: usize| sym(&[dc[k][0], dc[k][1], dc[k][2]], i, j);
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let mut v = dh(k, i, j);
                        for l in 0..2 {
                            v -= gam(l, k, i) * h(l, j) + gam(l, k, j) * h(i, l);
                        }
                        acc += ginv[k] * ginv[i] * ginv[j] * v * v;
                    }
                }
            }
        }
    }
    acc.sqrt()
}

struct Envelope<T> {
    eps: T,
    r0: T,
}

impl<T: Real> Envelope<T> {
    /// Bound for `(channel, derivative)` at area radius `r` and `(|s|, |ū|)`.
    fn bound(&self, channel: &str, der: &str, r: T, s: T, u: T) -> T {
        let e = self.eps;
        let r0 = self.r0;
        let p = |x: T, n: i32| x.powi(n);
        let sqrt = |x: T| x.sqrt();
        match (channel, der) {
            ("log_omega", "value" | "nabla") => e * r0 / r,
            ("log_omega", "ds") => e * r0 / p(r, 2),
            ("log_omega", "du") => e * r0 / p(r, 2),
            ("log_omega", "du2") => e * r0 / p(r, 3),
            ("log_omega", "ds_du") => e * r0 / p(r, 3),
            ("shift", "value" | "nabla") => e * r0 * u / p(r, 3),
            ("shift", "ds") => e * r0 * u / p(r, 4),
            ("shift", "du") => e * r0 / p(r, 3),
            ("shift", "du2") => e / p(r, 3),
            ("shift", "ds_du") => e * r0 / p(r, 4),
            ("metric", "value" | "nabla") => e * r * r,
            ("metric", "ds") => e * r0,
            ("metric", "du") => e * r,
            ("metric", "du2") => e * r / r0,
            ("metric", "ds_du") => e,
            ("omega", "value" | "nabla") => e * r0 / p(r, 2),
            ("omega", "ds" | "du") => e * r0 / p(r, 3),
            ("omegabar", "value") => e * r0 / p(r, 2),
            ("omegabar", "nabla") => e * r0 * sqrt(r0) / (r * r * sqrt(r)),
            ("omegabar", "ds" | "du") => e * r0 / p(r, 3),
            ("eta" | "etabar", "value" | "nabla") => e * r0 / r,
            ("eta" | "etabar", "ds") => e * r0 / p(r, 2),
            ("eta" | "etabar", "du") => e / r,
            ("tr_chi", "value" | "nabla") => e * s / p(r, 2) + e * u / p(r, 2) * (e + r0 / r),
            ("tr_chi", "ds") => e / p(r, 2),
            ("tr_chi", "du") => (e * e * r + e * r0) / p(r, 3),
            ("tr_chibar", "value" | "nabla") => e * r0 / p(r, 2),
            ("tr_chibar", "ds" | "du") => e * r0 / p(r, 3),
            ("chi_hat", "value" | "nabla") => e * r,
            ("chi_hat", "ds") => e,
            ("chi_hat", "du") => e * r / r0,
            ("chibar_hat", "value" | "nabla") => e * r0,
            ("chibar_hat", "ds") => e * r0 * sqrt(r0) / (r * sqrt(r)),
            ("chibar_hat", "du") => e,
            ("area_radius", _) => e,
            _ => T::nan(),
        }
    }
}

const DERIVS_METRIC: [&str; 6] = ["value", "nabla", "ds", "du", "du2", "ds_du"];
const DERIVS_COEFF: [&str; 4] = ["value", "nabla", "ds", "du"];

fn diff1<T: Real>(a: &[Jet1<T>], b: &[Jet1<T>]) -> Vec<Jet1<T>> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

fn diff2<T: Real>(a: &[Jet2<T>], b: &[Jet2<T>]) -> Vec<Jet2<T>> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

impl<T: Real> Spacetime<T> {
    /// Samples every channel's deviation from Schwarzschild and reports the
    /// worst ratio to its envelope for the declared `ε`.
    pub fn validate_envelopes(&self, sampling: &EnvelopeSampling<T>) -> Result<EnvelopeReport> {
        let grid = SphereGrid::<T>::new(sampling.band_limit);
        let sch = Spacetime::schwarzschild(self.gauge);
        let env = Envelope { eps: self.epsilon(), r0: self.r0() };
        let mut rows: Vec<EnvelopeRow> = Vec::new();
        let mut upd = |channel: &'static str, der: &'static str, ratio: T, at: [T; 4]| {
            let ratio = ratio.as_f64();
            let idx = match rows.iter().position(|r| r.channel == channel && r.derivative == der) {
                Some(i) => i,
                None => {
                    rows.push(EnvelopeRow {
                        channel,
                        derivative: der,
                        max_ratio: 0.0,
                        s: at[0].as_f64(),
                        u: at[1].as_f64(),
                        theta: at[2].as_f64(),
                        phi: at[3].as_f64(),
                    });
                    rows.len() - 1
                }
            };
            let row = &mut rows[idx];
            if ratio > row.max_ratio || ratio.is_nan() {
                row.max_ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
                row.s = at[0].as_f64();
                row.u = at[1].as_f64();
                row.theta = at[2].as_f64();
                row.phi = at[3].as_f64();
            }
        };
        let ratio = |value: T, bound: T, reference: T| -> T {
            if bound > T::zero() {
                value / bound
            } else if value <= T::lit(1e-12) * reference {
                T::zero()
            } else {
                T::infinity()
            }
        };
        for &s in &sampling.s_values {
            for &u in &sampling.u_values {
                let r = self.area_radius_on_sphere(s, u, &grid)?;
                let r_sch = self.gauge.area_radius(s, u)?;
                let (sa, ua) = (s.abs(), u.abs());
                let r0 = self.r0();
                let dev = (r / r_sch - T::one()).abs();
                upd("area_radius", "value", ratio(dev, env.bound("area_radius", "value", r, sa, ua), T::one()), [s, u, T::zero(), T::zero()]);
                for (k, (th, ph)) in grid.nodes().enumerate() {
                    let (st, ct) = grid.sin_cos_theta(k);
                    let at = [s, u, th, ph];
                    let m: Metric<Jet2<T>> = self.metric(s, u, th, ph)?;
                    let m0: Metric<Jet2<T>> = sch.metric(s, u, th, ph)?;
                    let c = coefficients::<T, Jet2<T>>(&m);
                    let c0 = coefficients::<T, Jet2<T>>(&m0);
                    let metric_channels: [(&'static str, Kind, Vec<Jet2<T>>); 3] = [
                        ("log_omega", Kind::Scalar, diff2(&[m.log_omega], &[m0.log_omega])),
                        ("shift", Kind::Vector, diff2(&m.b, &m0.b)),
                        ("metric", Kind::Sym, diff2(&m.g, &m0.g)),
                    ];
                    for (name, kind, comps) in metric_channels.iter() {
                        for der in DERIVS_METRIC {
                            let vals: Vec<T> = comps.iter().map(|j| second_slot(j, der)).collect();
                            let value = if der == "nabla" {
                                let c: Vec<T> = comps.iter().map(|j| j.v).collect();
                                let dt: Vec<T> = comps.iter().map(|j| j.d[TH]).collect();
                                let dp: Vec<T> = comps.iter().map(|j| j.d[PH]).collect();
                                round_nabla_norm(*kind, &c, [&dt, &dp], st, ct)
                            } else {
                                round_norm(*kind, &vals, st)
                            };
                            let b = env.bound(name, der, r, sa, ua);
                            let reference = env.bound(name, der, r, r0, r0);
                            upd(name, der, ratio(value, b, reference), at);
                        }
                    }
                    let coeff_channels: [(&'static str, Kind, Vec<Jet1<T>>); 8] = [
                        ("omega", Kind::Scalar, diff1(&[c.omega], &[c0.omega])),
                        ("omegabar", Kind::Scalar, diff1(&[c.omegabar], &[c0.omegabar])),
                        ("eta", Kind::Form, diff1(&c.eta, &c0.eta)),
                        ("etabar", Kind::Form, diff1(&c.etabar, &c0.etabar)),
                        ("tr_chi", Kind::Scalar, diff1(&[c.tr_chi], &[c0.tr_chi])),
                        ("tr_chibar", Kind::Scalar, diff1(&[c.tr_chibar], &[c0.tr_chibar])),
                        ("chi_hat", Kind::Sym, diff1(&c.chi_hat, &c0.chi_hat)),
                        ("chibar_hat", Kind::Sym, diff1(&c.chibar_hat, &c0.chibar_hat)),
                    ];
                    for (name, kind, comps) in coeff_channels.iter() {
                        for der in DERIVS_COEFF {
                            let value = if der == "nabla" {
                                let c: Vec<T> = comps.iter().map(|j| j.v).collect();
                                let dt: Vec<T> = comps.iter().map(|j| j.d[TH]).collect();
                                let dp: Vec<T> = comps.iter().map(|j| j.d[PH]).collect();
                                round_nabla_norm(*kind, &c, [&dt, &dp], st, ct)
                            } else {
                                let vals: Vec<T> = comps.iter().map(|j| first_slot(j, der)).collect();
                                round_norm(*kind, &vals, st)
                            };
                            let b = env.bound(name, der, r, sa, ua);
                            let reference = env.bound(name, der, r, r0, r0);
                            upd(name, der, ratio(value, b, reference), at);
                        }
                    }
                }
            }
        }
        Ok(EnvelopeReport { epsilon: env.eps.as_f64(), rows })
    }
}

fn first_slot<T: Real>(j: &Jet1<T>, der: &str) -> T {
    match der {
        "ds" => j.d[S],
        "du" => j.d[U],
        _ => j.v,
    }
}

fn second_slot<T: Real>(j: &Jet2<T>, der: &str) -> T {
    match der {
        "ds" => j.d[S],
        "du" => j.d[U],
        "du2" => j.h[U][U],
        "ds_du" => j.h[S][U],
        _ => j.v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauge() -> SchwarzschildGauge<f64> {
        SchwarzschildGauge::new(1.0, 0.25, 0.5).unwrap()
    }

    fn flat(c: &Coeffs<f64>) -> Vec<f64> {
        let mut v = vec![c.omega2, c.log_omega, c.tr_chi, c.tr_chibar, c.omega, c.omegabar];
        for a in [&c.g, &c.ginv, &c.chi, &c.chibar, &c.chi_hat, &c.chibar_hat] {
            v.extend_from_slice(a);
        }
        for a in [&c.b, &c.eta, &c.etabar] {
            v.extend_from_slice(a);
        }
        v
    }

    fn flat_bundle(c: &CoeffBundle<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..5 {
            let pick = |j: &Jet1<f64>| if k == 0 { j.v } else { j.d[k - 1] };
            let l = Coeffs {
                omega2: pick(&c.omega2),
                log_omega: pick(&c.log_omega),
                g: c.g.map(|j| pick(&j)),
                ginv: c.ginv.map(|j| pick(&j)),
                b: c.b.map(|j| pick(&j)),
                chi: c.chi.map(|j| pick(&j)),
                chibar: c.chibar.map(|j| pick(&j)),
                tr_chi: pick(&c.tr_chi),
                tr_chibar: pick(&c.tr_chibar),
                chi_hat: c.chi_hat.map(|j| pick(&j)),
                chibar_hat: c.chibar_hat.map(|j| pick(&j)),
                omega: pick(&c.omega),
                omegabar: pick(&c.omegabar),
                eta: c.eta.map(|j| pick(&j)),
                etabar: c.etabar.map(|j| pick(&j)),
            };
            out.extend(flat(&l));
        }
        out
    }

    fn random_point(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
        (rng.gen_range(-0.45..0.45), rng.gen_range(-0.9..0.9), rng.gen_range(0.1..3.0), rng.gen_range(0.0..6.2))
    }

    #[test]
    fn schwarzschild_horizon_values() {
        let st = Spacetime::schwarzschild(gauge());
        for &(u, th, ph) in &[(0.0, 0.4, 1.0), (-0.7, 1.3, 2.0), (0.8, 2.9, 5.5)] {
            let c = st.coeffs(0.0, u, th, ph).unwrap();
            assert!(c.tr_chi.abs() <= 1e-15);
            assert_relative_eq!(c.omega, 0.25, epsilon = 1e-14);
            for x in c.b.iter().chain(&c.eta).chain(&c.etabar).chain(&c.chi_hat).chain(&c.chibar_hat) {
                assert!(x.abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn schwarzschild_matches_background_closed_forms() {
        let st = Spacetime::schwarzschild(gauge());
        let p = gauge().point(0.13, -0.31).unwrap();
        let c = st.coeffs(0.13, -0.31, 0.9, 0.2).unwrap();
        assert_relative_eq!(c.tr_chi, p.tr_chi, epsilon = 1e-13);
        assert_relative_eq!(c.tr_chibar, p.tr_chibar, epsilon = 1e-13);
        assert_relative_eq!(c.omega, p.omega, epsilon = 1e-13);
        assert_relative_eq!(c.omegabar, p.omegabar, epsilon = 1e-13);
        assert_relative_eq!(c.tr_chi / c.omega2, p.tr_chi_prime, epsilon = 1e-13);
    }

    #[test]
    fn zero_epsilon_recipe_is_schwarzschild() {
        let sch = Spacetime::schwarzschild(gauge());
        let zero = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (s, u, th, ph) = random_point(&mut rng);
            let a = flat_bundle(&sch.bundle(s, u, th, ph).unwrap());
            let b = flat_bundle(&zero.bundle(s, u, th, ph).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn trace_splits_are_consistent() {
        let st = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (s, u, th, ph) = random_point(&mut rng);
            let c = st.coeffs(s, u, th, ph).unwrap();
            let tr = trace::<f64, f64>(&c.ginv, &c.chi);
            assert!((tr - c.tr_chi).abs() <= 1e-12 * (1.0 + tr.abs()));
            assert!(trace::<f64, f64>(&c.ginv, &c.chi_hat).abs() <= 1e-12);
            assert!(trace::<f64, f64>(&c.ginv, &c.chibar_hat).abs() <= 1e-12);
            for i in 0..3 {
                let rebuilt = c.chi_hat[i] + 0.5 * c.tr_chi * c.g[i];
                assert!((rebuilt - c.chi[i]).abs() <= 1e-12 * (1.0 + c.chi[i].abs()));
            }
        }
    }

    #[test]
    fn horizon_section_stays_marginally_trapped() {
        let st = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.01)).unwrap();
        let grid = SphereGrid::<f64>::new(12);
        for (th, ph) in grid.nodes() {
            assert!(st.coeffs(0.0, 0.0, th, ph).unwrap().tr_chi.abs() <= 1e-12 / 2.0);
        }
        let off = st.coeffs(0.0, 0.6, 0.3, 0.0).unwrap().tr_chi;
        assert!(off.abs() > 1e-5, "the horizon away from the section is perturbed");
    }

    #[test]
    fn conformal_s_window_leaves_chi_on_horizon() {
        let mut rec = PerturbationRecipe::empty(0.01);
        rec.conformal.push(ScalarTerm { l: 2, m: 0, amplitude: 1.0, window: WindowKind::S, width: 1.0 });
        let st = Spacetime::perturbed(gauge(), rec).unwrap();
        let sch = Spacetime::schwarzschild(gauge());
        for &(u, th) in &[(0.0, 0.5), (0.4, 1.2), (-0.8, 2.5)] {
            let a = st.coeffs(0.0, u, th, 0.3).unwrap();
            let b = sch.coeffs(0.0, u, th, 0.3).unwrap();
            for i in 0..3 {
                assert!((a.chi[i] - b.chi[i]).abs() <= 1e-15);
            }
            let h = 1e-4;
            let gp = st.sample(0.0, u + h, th, 0.3).unwrap().metric.g[0].v;
            let gm = st.sample(0.0, u - h, th, 0.3).unwrap().metric.g[0].v;
            assert!((0.5 * (gp - gm) / (2.0 * h) - a.chi[0]).abs() <= 1e-8);
        }
    }

    #[test]
    fn derivative_slots_converge_at_second_order() {
        let st = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
        let (s, u, th, ph) = (0.11, 0.23, 0.7, 0.4);
        let pick = |c: &Coeffs<f64>| [c.tr_chi, c.tr_chibar, c.omegabar, c.eta[0], c.log_omega, c.g[2], c.chi_hat[0], c.omega];
        let pick_d = |c: &CoeffBundle<f64>, slot: usize| {
            [c.tr_chi, c.tr_chibar, c.omegabar, c.eta[0], c.log_omega, c.g[2], c.chi_hat[0], c.omega].map(|j| j.d[slot])
        };
        let exact = st.bundle(s, u, th, ph).unwrap();
        for slot in [S, U] {
            let d = pick_d(&exact, slot);
            let err = |h: f64| {
                let (ds, du) = if slot == S { (h, 0.0) } else { (0.0, h) };
                let p = pick(&st.coeffs(s + ds, u + du, th, ph).unwrap());
                let m = pick(&st.coeffs(s - ds, u - du, th, ph).unwrap());
                (0..p.len()).map(|i| ((p[i] - m[i]) / (2.0 * h) - d[i]).abs()).collect::<Vec<_>>()
            };
            let e1 = err(0.04);
            let e2 = err(0.02);
            for i in 0..e1.len() {
                if e1[i] < 1e-11 {
                    continue;
                }
                let slope = (e1[i] / e2[i]).log2();
                assert!((slope - 2.0).abs() <= 0.1, "slot {slot} field {i}: slope {slope}");
            }
        }
    }

    #[test]
    fn angular_slots_match_finite_differences() {
        let st = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
        let exact = st.bundle(0.1, -0.3, 1.1, 0.8).unwrap();
        let h = 1e-5;
        let p = st.coeffs(0.1, -0.3, 1.1 + h, 0.8).unwrap();
        let m = st.coeffs(0.1, -0.3, 1.1 - h, 0.8).unwrap();
        assert_relative_eq!((p.eta[1] - m.eta[1]) / (2.0 * h), exact.eta[1].d[TH], epsilon = 1e-8);
        assert_relative_eq!((p.b[1] - m.b[1]) / (2.0 * h), exact.b[1].d[TH], epsilon = 1e-8);
    }

    #[test]
    fn schwarzschild_envelope_ratios_vanish() {
        let g = gauge();
        let sampling = EnvelopeSampling::uniform(&g, 5, 6);
        let rep = Spacetime::schwarzschild(g).validate_envelopes(&sampling).unwrap();
        assert_eq!(rep.max_ratio(), 0.0);
        let empty = Spacetime::perturbed(g, PerturbationRecipe::empty(1e-3)).unwrap();
        assert!(empty.validate_envelopes(&sampling).unwrap().max_ratio() <= 1e-10);
    }

    #[test]
    fn default_recipe_respects_envelopes() {
        let g = gauge();
        let st = Spacetime::perturbed(g, PerturbationRecipe::default()).unwrap();
        let rep = st.validate_envelopes(&EnvelopeSampling::uniform(&g, 9, 8)).unwrap();
        assert!(rep.passed(), "{}", rep.to_csv());
        assert!(rep.max_ratio() > 0.5);
        assert_eq!(rep.rows.len(), 1 + 3 * 6 + 8 * 4);
    }

    #[test]
    fn doubled_amplitudes_are_flagged() {
        let g = gauge();
        let rec = PerturbationRecipe::default().scaled_amplitudes(2.0);
        let st = Spacetime::perturbed(g, rec).unwrap();
        let rep = st.validate_envelopes(&EnvelopeSampling::uniform(&g, 9, 8)).unwrap();
        assert!(!rep.passed());
        assert!(rep.to_csv().contains(",true,"));
    }

    #[test]
    fn halving_linear_channels_halves_ratios() {
        let g = gauge();
        let mut rec = PerturbationRecipe::empty(1e-3);
        rec.log_omega.push(ScalarTerm { l: 2, m: 1, amplitude: 0.4, window: WindowKind::Gaussian, width: 0.8 });
        rec.eta.push(ScalarTerm { l: 1, m: -1, amplitude: 0.2, window: WindowKind::S, width: 1.0 });
        assert!(rec.is_linear());
        let sampling = EnvelopeSampling::uniform(&g, 5, 6);
        let full = Spacetime::perturbed(g, rec.clone()).unwrap().validate_envelopes(&sampling).unwrap();
        let half = Spacetime::perturbed(g, rec.scaled_amplitudes(0.5)).unwrap().validate_envelopes(&sampling).unwrap();
        for (a, b) in full.rows.iter().zip(&half.rows) {
            assert!((b.max_ratio - 0.5 * a.max_ratio).abs() <= 1e-10, "{} {}", a.channel, a.derivative);
        }
        assert!(full.ratio("eta", "value").unwrap() > 0.0);
    }

    #[test]
    fn recipe_constraints_are_enforced() {
        let mut rec = PerturbationRecipe::empty(1e-3);
        rec.conformal.push(ScalarTerm { l: 1, m: 0, amplitude: 1.0, window: WindowKind::U, width: 1.0 });
        assert!(matches!(rec.validate(), Err(Error::Recipe(_))));
        let mut rec = PerturbationRecipe::empty(1e-3);
        rec.shift.push(ShiftTerm { l: 1, m: 0, amplitude: 1.0, kind: ShiftKind::Gradient, window: WindowKind::One, width: 1.0 });
        assert!(rec.validate().is_err());
        let mut rec = PerturbationRecipe::empty(1e-3);
        rec.log_omega.push(ScalarTerm { l: 1, m: 2, amplitude: 1.0, window: WindowKind::One, width: 1.0 });
        assert!(rec.validate().is_err());
        assert!(PerturbationRecipe::empty(-1.0).validate().is_err());
    }

    #[test]
    fn recipe_serde_round_trip() {
        let rec = PerturbationRecipe::default();
        let text = serde_json::to_string(&rec).unwrap();
        let back: PerturbationRecipe = serde_json::from_str(&text).unwrap();
        assert_eq!(rec, back);
        assert!(text.contains("\"u2_lorentzian\""));
    }

    #[test]
    fn single_precision_agrees() {
        let g32 = SchwarzschildGauge::new(1.0f32, 0.25, 0.5).unwrap();
        let st32 = Spacetime::perturbed(g32, PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
        let st64 = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
        let a = st32.coeffs(0.1, 0.2, 1.0, 0.5).unwrap();
        let b = st64.coeffs(0.1, 0.2, 1.0, 0.5).unwrap();
        assert!((a.tr_chibar as f64 - b.tr_chibar).abs() <= 1e-5);
        assert!((a.eta[0] as f64 - b.eta[0]).abs() <= 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn induced_metric_is_positive_definite(s in -0.5f64..0.5, u in -0.99f64..0.99, th in 0.05f64..3.1, ph in 0.0f64..6.2) {
            let st = Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(0.05)).unwrap();
            let c = st.coeffs(s, u, th, ph).unwrap();
            prop_assert!(c.g[0] > 0.0);
            prop_assert!(c.g[0] * c.g[2] - c.g[1] * c.g[1] > 0.0);
            prop_assert!(c.omega2 > 0.0);
        }
    }
}
