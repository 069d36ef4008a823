//! Schwarzschild spacetime in the renormalised double null gauge `(s, ū, θ, φ)`.
//!
//! The area radius `r(s, ū)` solves `(r − r₀) e^{r/r₀} = s e^{(s+ū+r₀)/r₀}`
//! with `r₀ = 2m`; the event horizon is `{s = 0}`. Writing `x = r/r₀ − 1`
//! and `y = (s/r₀) e^{(s+ū)/r₀}` the relation becomes `x eˣ = y`, so
//! `x = W(y)` with the principal Lambert function, which is what is solved.
//! The metric is
//! `g = 2Ω² (ds ⊗ dū + dū ⊗ ds) + r² g̊` with
//! `Ω² = (s + r₀) e^{(s+ū+r₀−r)/r₀} / r`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{Dual, Real};

/// Schwarzschild mass and coordinate neighbourhood
/// `{|s| ≤ κ r₀, |ū| < τ r₀}` of the horizon section `Σ₀₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchwarzschildGauge<T> {
    pub mass: T,
    pub kappa: T,
    pub tau: T,
}

/// Background quantities at one point `(s, ū)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BackgroundPoint<T> {
    pub r: T,
    pub omega2: T,
    pub dr_ds: T,
    pub dr_du: T,
    pub tr_chi: T,
    pub tr_chibar: T,
    pub tr_chi_prime: T,
    pub omega: T,
    pub omegabar: T,
}

/// Principal branch of the Lambert function on `[−1/e, ∞)`, returned with
/// its first two derivatives.
fn lambert_w<T: Real>(y: T) -> Option<(T, T, T)> {
    let one = T::one();
    let min_y = -(-one).exp();
    if !(y >= min_y) || !y.is_finite() {
        return None;
    }
    let f = |x: T| x * x.exp() - y;
    let mut lo = -one;
    let mut hi = if y > one.exp() { y.ln() } else { one };
    let mut x = if y.abs() < T::lit(0.3) {
        y * (one - y * (one - T::lit(1.5) * y))
    } else {
        for _ in 0..12 {
            let mid = (lo + hi) * T::lit(0.5);
            if f(mid) > T::zero() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo + hi) * T::lit(0.5)
    };
    let tol = T::epsilon() * T::lit(8.0);
    let mut converged = false;
    for _ in 0..60 {
        let ex = x.exp();
        let fx = x * ex - y;
        let d = ex * (one + x);
        if d <= T::zero() {
            break;
        }
        let mut next = x - fx / d;
        if !(next > lo && next < hi) {
            if fx > T::zero() {
                hi = x;
            } else {
                lo = x;
            }
            next = (lo + hi) * T::lit(0.5);
        } else if fx > T::zero() {
            hi = hi.min(x.max(next));
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol * (one + x.abs()) {
            converged = true;
            break;
        }
    }
    if !converged || !(x > -one) {
        return None;
    }
    let ex = x.exp();
    let d1 = one / (ex * (one + x));
    let d2 = -(T::lit(2.0) + x) / (ex * ex * (one + x).powi(3));
    Some((x, d1, d2))
}

impl<T: Real> SchwarzschildGauge<T> {
    /// Validated gauge description.
    pub fn new(mass: T, kappa: T, tau: T) -> Result<Self> {
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::InvalidParameter("mass must be positive".into()));
        }
        if !(kappa > T::zero() && kappa < T::one()) {
            return Err(Error::InvalidParameter("kappa must lie in (0, 1)".into()));
        }
        if !(tau > T::zero()) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        Ok(SchwarzschildGauge { mass, kappa, tau })
    }

    /// Horizon radius `r₀ = 2m`.
    #[inline]
    pub fn r0(&self) -> T {
        T::lit(2.0) * self.mass
    }

    /// Whether `(s, ū)` lies in the coordinate neighbourhood.
    pub fn contains(&self, s: T, u: T) -> bool {
        let r0 = self.r0();
        s.abs() <= self.kappa * r0 && u.abs() < self.tau * r0
    }

    /// Errors when `(s, ū)` is outside the neighbourhood.
    pub fn check(&self, s: T, u: T) -> Result<()> {
        if !s.is_finite() || !u.is_finite() {
            return Err(Error::NonFinite("chart coordinates".into()));
        }
        if self.contains(s, u) {
            Ok(())
        } else {
            Err(Error::OutsideNeighbourhood { s: s.as_f64(), u: u.as_f64() })
        }
    }

    /// Area radius as a [`Dual`] expression of `(s, ū)`.
    pub fn area_radius_dual<D: Dual<T>>(&self, s: D, u: D) -> Result<D> {
        self.check(s.val(), u.val())?;
        let r0 = self.r0();
        let y = s / r0 * ((s + u) / r0).dexp();
        let (x, d1, d2) = lambert_w(y.val()).ok_or(Error::RootSolve { s: s.val().as_f64(), u: u.val().as_f64() })?;
        let w = y.dapply(x, d1, d2);
        Ok((w + T::one()) * r0)
    }

    /// Area radius `r(s, ū)`.
    pub fn area_radius(&self, s: T, u: T) -> Result<T> {
        self.area_radius_dual(s, u)
    }

    /// `Ω²` as a [`Dual`] expression given the area radius.
    pub fn omega2_dual<D: Dual<T>>(&self, s: D, u: D, r: D) -> D {
        let r0 = self.r0();
        (s + r0) * ((s + u - r + r0) / r0).dexp() / r
    }

    /// All background quantities at `(s, ū)`.
    pub fn point(&self, s: T, u: T) -> Result<BackgroundPoint<T>> {
        let r0 = self.r0();
        let r = self.area_radius(s, u)?;
        let omega2 = self.omega2_dual(s, u, r);
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let dr_ds = omega2;
        let dr_du = (r - r0) / r;
        Ok(BackgroundPoint {
            r,
            omega2,
            dr_ds,
            dr_du,
            tr_chi: two * (r - r0) / (r * r),
            tr_chibar: two * omega2 / r,
            tr_chi_prime: two * s / (r * (s + r0)),
            omega: r0 / (two * r * r),
            omegabar: half * ((s + r0).recip() + (T::one() - dr_ds) / r0 - dr_ds / r),
        })
    }

    /// `(∂_s tr χ′, ∂_ū tr χ′)` at `(s, ū)`.
    pub fn trchi_prime_partials(&self, s: T, u: T) -> Result<(T, T)> {
        let p = self.point(s, u)?;
        let r0 = self.r0();
        let two = T::lit(2.0);
        let q = p.r * (s + r0);
        let ds = two / q - two * s * (p.dr_ds * (s + r0) + p.r) / (q * q);
        let du = -two * s * p.dr_du / (p.r * p.r * (s + r0));
        Ok((ds, du))
    }
}
