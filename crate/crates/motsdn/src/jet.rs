//! Forward-mode jets in the four chart variables `(s, ū, θ, φ)`.
//!
//! [`Jet1`] carries a value and its gradient, [`Jet2`] additionally carries
//! the Hessian. Closed form expressions written against [`Dual`] therefore
//! yield exact analytic derivatives without any differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::{Dual, Real};

/// Number of independent variables carried by a jet.
pub const NVAR: usize = 4;
/// Slot of the outgoing null coordinate `s`.
pub const S: usize = 0;
/// Slot of the incoming null coordinate `ū`.
pub const U: usize = 1;
/// Slot of the polar angle.
pub const TH: usize = 2;
/// Slot of the azimuthal angle.
pub const PH: usize = 3;

/// A [`Dual`] number that knows its own derivatives.
pub trait Jet<T: Real>: Dual<T> {
    /// Jet of one order lower.
    type Lower: Dual<T>;
    /// Independent variable in `slot` with the given value.
    fn var(value: T, slot: usize) -> Self;
    /// Drops the highest order.
    fn lower(&self) -> Self::Lower;
    /// Partial derivative with respect to `slot`, one order lower.
    fn partial(&self, slot: usize) -> Self::Lower;
}

/// Value and gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1<T> {
    pub v: T,
    pub d: [T; NVAR],
}

/// Value, gradient and Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<T> {
    pub v: T,
    pub d: [T; NVAR],
    pub h: [[T; NVAR]; NVAR],
}

impl<T: Real> Jet1<T> {
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= df;
        }
        Jet1 { v: f, d }
    }
}

impl<T: Real> Jet2<T> {
    #[inline]
    fn chain(self, f: T, df: T, ddf: T) -> Self {
        let mut d = self.d;
        let mut h = self.h;
        for i in 0..NVAR {
            d[i] = self.d[i] * df;
            for j in 0..NVAR {
                h[i][j] = self.h[i][j] * df + self.d[i] * self.d[j] * ddf;
            }
        }
        Jet2 { v: f, d, h }
    }
}

macro_rules! jet_common {
    ($J:ident) => {
        impl<T: Real> Neg for $J<T> {
            type Output = Self;
            #[inline]
            fn neg(self) -> Self {
                self * (-T::one())
            }
        }
        impl<T: Real> Sub for $J<T> {
            type Output = Self;
            #[inline]
            fn sub(self, o: Self) -> Self {
                self + (-o)
            }
        }
        impl<T: Real> Div for $J<T> {
            type Output = Self;
            #[inline]
            #[allow(clippy::suspicious_arithmetic_impl)]
            fn div(self, o: Self) -> Self {
                self * o.drecip()
            }
        }
        impl<T: Real> Add<T> for $J<T> {
            type Output = Self;
            #[inline]
            fn add(mut self, o: T) -> Self {
                self.v += o;
                self
            }
        }
        impl<T: Real> Sub<T> for $J<T> {
            type Output = Self;
            #[inline]
            fn sub(mut self, o: T) -> Self {
                self.v -= o;
                self
            }
        }
        impl<T: Real> Div<T> for $J<T> {
            type Output = Self;
            #[inline]
            #[allow(clippy::suspicious_arithmetic_impl)]
            fn div(self, o: T) -> Self {
                self * o.recip()
            }
        }
    };
}

jet_common!(Jet1);
jet_common!(Jet2);

impl<T: Real> Add for Jet1<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..NVAR {
            d[i] += o.d[i];
        }
        Jet1 { v: self.v + o.v, d }
    }
}

impl<T: Real> Mul for Jet1<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..NVAR {
            d[i] = self.v * o.d[i] + o.v * self.d[i];
        }
        Jet1 { v: self.v * o.v, d }
    }
}

impl<T: Real> Mul<T> for Jet1<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: T) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= o;
        }
        Jet1 { v: self.v * o, d }
    }
}

impl<T: Real> Add for Jet2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut r = self;
        r.v += o.v;
        for i in 0..NVAR {
            r.d[i] += o.d[i];
            for j in 0..NVAR {
                r.h[i][j] += o.h[i][j];
            }
        }
        r
    }
}

impl<T: Real> Mul for Jet2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = self;
        r.v = self.v * o.v;
        for i in 0..NVAR {
            r.d[i] = self.v * o.d[i] + o.v * self.d[i];
            for j in 0..NVAR {
                r.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.d[i] * o.d[j]
                    + o.d[i] * self.d[j];
            }
        }
        r
    }
}

impl<T: Real> Mul<T> for Jet2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: T) -> Self {
        let mut r = self;
        r.v *= o;
        for i in 0..NVAR {
            r.d[i] *= o;
            for j in 0..NVAR {
                r.h[i][j] *= o;
            }
        }
        r
    }
}

impl<T: Real> Dual<T> for Jet1<T> {
    #[inline]
    fn cst(v: T) -> Self {
        Jet1 { v, d: [T::zero(); NVAR] }
    }
    #[inline]
    fn val(&self) -> T {
        self.v
    }
    fn dexp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn dln(self) -> Self {
        self.chain(self.v.ln(), self.v.recip())
    }
    fn dsqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, T::lit(0.5) / r)
    }
    fn dsin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn dcos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn drecip(self) -> Self {
        let r = self.v.recip();
        self.chain(r, -r * r)
    }
    fn dpowi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(T::one());
        }
        let nf = T::from_i32(n).expect("exponent");
        self.chain(self.v.powi(n), nf * self.v.powi(n - 1))
    }
    fn dapply(self, f: T, df: T, _ddf: T) -> Self {
        self.chain(f, df)
    }
}

impl<T: Real> Dual<T> for Jet2<T> {
    #[inline]
    fn cst(v: T) -> Self {
        Jet2 { v, d: [T::zero(); NVAR], h: [[T::zero(); NVAR]; NVAR] }
    }
    #[inline]
    fn val(&self) -> T {
        self.v
    }
    fn dexp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn dln(self) -> Self {
        let r = self.v.recip();
        self.chain(self.v.ln(), r, -r * r)
    }
    fn dsqrt(self) -> Self {
        let r = self.v.sqrt();
        let d1 = T::lit(0.5) / r;
        self.chain(r, d1, -d1 / (T::lit(2.0) * self.v))
    }
    fn dsin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn dcos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn drecip(self) -> Self {
        let r = self.v.recip();
        self.chain(r, -r * r, T::lit(2.0) * r * r * r)
    }
    fn dpowi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(T::one());
        }
        let nf = T::from_i32(n).expect("exponent");
        let d2 = if n == 1 { T::zero() } else { nf * (nf - T::one()) * self.v.powi(n - 2) };
        self.chain(self.v.powi(n), nf * self.v.powi(n - 1), d2)
    }
    fn dapply(self, f: T, df: T, ddf: T) -> Self {
        self.chain(f, df, ddf)
    }
}

impl<T: Real> Jet<T> for Jet1<T> {
    type Lower = T;
    fn var(value: T, slot: usize) -> Self {
        let mut j = Self::cst(value);
        j.d[slot] = T::one();
        j
    }
    fn lower(&self) -> T {
        self.v
    }
    fn partial(&self, slot: usize) -> T {
        self.d[slot]
    }
}

impl<T: Real> Jet<T> for Jet2<T> {
    type Lower = Jet1<T>;
    fn var(value: T, slot: usize) -> Self {
        let mut j = Self::cst(value);
        j.d[slot] = T::one();
        j
    }
    fn lower(&self) -> Jet1<T> {
        Jet1 { v: self.v, d: self.d }
    }
    fn partial(&self, slot: usize) -> Jet1<T> {
        Jet1 { v: self.d[slot], d: self.h[slot] }
    }
}

/// Square root through the [`Dual`] interface.
#[inline]
pub fn sqrt<T: Real, D: Dual<T>>(x: D) -> D {
    x.dsqrt()
}

/// Exponential through the [`Dual`] interface.
#[inline]
pub fn exp<T: Real, D: Dual<T>>(x: D) -> D {
    x.dexp()
}

/// Natural logarithm through the [`Dual`] interface.
#[inline]
pub fn ln<T: Real, D: Dual<T>>(x: D) -> D {
    x.dln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<D: Dual<f64>>(x: D, y: D) -> D {
        (x * y).dsin() + (x.dexp() / (y * y + 1.0)).dsqrt() - x.dpowi(3) * y.dln()
    }

    #[test]
    fn jet2_matches_central_differences() {
        let (x0, y0) = (0.3, 1.7);
        let j = f(Jet2::var(x0, 0), Jet2::var(y0, 1));
        let h = 1e-4;
        let fx = |x: f64, y: f64| f(x, y);
        let dx = (fx(x0 + h, y0) - fx(x0 - h, y0)) / (2.0 * h);
        let dy = (fx(x0, y0 + h) - fx(x0, y0 - h)) / (2.0 * h);
        let dxy = (fx(x0 + h, y0 + h) - fx(x0 + h, y0 - h) - fx(x0 - h, y0 + h)
            + fx(x0 - h, y0 - h))
            / (4.0 * h * h);
        let dxx = (fx(x0 + h, y0) - 2.0 * fx(x0, y0) + fx(x0 - h, y0)) / (h * h);
        assert_relative_eq!(j.v, fx(x0, y0), epsilon = 1e-14);
        assert_relative_eq!(j.d[0], dx, epsilon = 1e-7);
        assert_relative_eq!(j.d[1], dy, epsilon = 1e-7);
        assert_relative_eq!(j.h[0][1], dxy, epsilon = 1e-5);
        assert_relative_eq!(j.h[1][0], dxy, epsilon = 1e-5);
        assert_relative_eq!(j.h[0][0], dxx, epsilon = 1e-5);
    }

    #[test]
    fn partial_of_jet2_is_consistent_jet1() {
        let x = Jet2::<f64>::var(0.4, 2);
        let y = (x * x * x).dcos();
        let p = y.partial(2);
        let dv = -(0.4f64.powi(3)).sin() * 3.0 * 0.16;
        assert_relative_eq!(p.v, dv, epsilon = 1e-14);
        assert_eq!(y.lower().v, y.v);
    }

    #[test]
    fn reciprocal_second_derivative() {
        let x = Jet2::<f64>::var(2.0, 0).drecip();
        assert_relative_eq!(x.h[0][0], 2.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(x.d[0], -0.25, epsilon = 1e-15);
    }
}
