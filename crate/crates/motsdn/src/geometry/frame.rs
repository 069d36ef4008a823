//! Null frames of spacelike surfaces given in the first parametrization and
//! the full spacetime metric rebuilt from the double null data.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::Jet1;
use crate::provider::{Metric, Spacetime};
use crate::scalar::{Dual, Real};
use crate::sphere::{inverse2, SphereField, SphereGrid};

/// Tilt of the null normals of a surface `(s, ū) = (f(θ), f̄(θ))` relative to
/// the background frame `{L̄ = ∂_s + b, L = ∂_ū}` at one point:
/// `L̄̃ = L̄ + ε̄ L + ε̄^i ∂_i` and `L̃ = L + ε L̄ + ε^i ∂_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrameTilt<D> {
    pub e: [D; 2],
    pub ebar: [D; 2],
    pub eps: D,
    pub epsbar: D,
    pub eps_vec: [D; 2],
    pub epsbar_vec: [D; 2],
    /// `Ω̃²` with `2Ω̃² = g(L̄̃, L̃)`.
    pub omega2_tilde: D,
}

#[inline]
fn dot<T: Real, D: Dual<T>>(g: &[D; 3], a: &[D; 2], b: &[D; 2]) -> D {
    g[0] * a[0] * b[0] + g[1] * (a[0] * b[1] + a[1] * b[0]) + g[2] * a[1] * b[1]
}

#[inline]
fn raise<T: Real, D: Dual<T>>(ginv: &[D; 3], w: &[D; 2]) -> [D; 2] {
    [ginv[0] * w[0] + ginv[1] * w[1], ginv[1] * w[0] + ginv[2] * w[1]]
}

/// Frame tilt at one point from `Ω²`, `g̸`, `b` and the differentials of
/// `f` and `f̄`. Returns `None` when the surface is not spacelike there.
pub fn frame_tilt<T: Real, D: Dual<T>>(omega2: D, g: &[D; 3], b: &[D; 2], df: &[D; 2], dfb: &[D; 2]) -> Option<FrameTilt<D>> {
    let ginv = inverse2::<T, D>(g);
    let two = T::lit(2.0);
    let one = D::cst(T::one());
    let bdf = b[0] * df[0] + b[1] * df[1];
    let bdfb = b[0] * dfb[0] + b[1] * dfb[1];
    let den_b = one - bdf;
    if !(den_b.val().abs() > T::zero()) {
        return None;
    }
    let wf = [df[0] / den_b, df[1] / den_b];
    let k = bdfb / den_b;
    let wfb = [dfb[0] + df[0] * k, dfb[1] + df[1] * k];
    let m2 = omega2 * (-two);
    let ru = raise::<T, D>(&ginv, &wf);
    let rb = raise::<T, D>(&ginv, &wfb);
    let e = [ru[0] * m2, ru[1] * m2];
    let ebar = [rb[0] * m2, rb[1] * m2];
    let ee = dot::<T, D>(g, &e, &e);
    let bb = dot::<T, D>(g, &ebar, &ebar);
    let eb = dot::<T, D>(g, &e, &ebar);
    let a = omega2 * two + eb;
    let disc = a * a - ee * bb;
    if !(disc.val() > T::zero()) {
        return None;
    }
    let den = a + disc.dsqrt();
    if !(den.val() > T::zero()) {
        return None;
    }
    let epsbar = -(bb / den);
    let eps = -(ee / den);
    let epsbar_vec = [ebar[0] + e[0] * epsbar, ebar[1] + e[1] * epsbar];
    let eps_vec = [e[0] + ebar[0] * eps, e[1] + ebar[1] * eps];
    let omega2_tilde = omega2 * (one + eps * epsbar) + dot::<T, D>(g, &eps_vec, &epsbar_vec) * T::lit(0.5);
    Some(FrameTilt { e, ebar, eps, epsbar, eps_vec, epsbar_vec, omega2_tilde })
}

/// Spacetime metric `g_{μν}` in the chart `(s, ū, θ, φ)` from the double
/// null data: `g_sū = 2Ω²`, `g_ss = g̸(b, b)`, `g_si = −g̸_ij b^j`, `g_ij = g̸_ij`.
pub fn spacetime_metric<T: Real, D: Dual<T>>(omega2: D, g: &[D; 3], b: &[D; 2]) -> [[D; 4]; 4] {
    let zero = D::cst(T::zero());
    let mut m = [[zero; 4]; 4];
    let bl = [g[0] * b[0] + g[1] * b[1], g[1] * b[0] + g[2] * b[1]];
    m[0][0] = bl[0] * b[0] + bl[1] * b[1];
    m[0][1] = omega2 * T::lit(2.0);
    m[1][0] = m[0][1];
    for i in 0..2 {
        m[0][2 + i] = -bl[i];
        m[2 + i][0] = -bl[i];
    }
    m[2][2] = g[0];
    m[2][3] = g[1];
    m[3][2] = g[1];
    m[3][3] = g[2];
    m
}

/// Inverse spacetime metric: `g^{sū} = 1/(2Ω²)`, `g^{ūi} = b^i/(2Ω²)`,
/// `g^{ij} = g̸^{ij}`, all other components zero.
pub fn spacetime_inverse<T: Real, D: Dual<T>>(omega2: D, g: &[D; 3], b: &[D; 2]) -> [[D; 4]; 4] {
    let zero = D::cst(T::zero());
    let mut m = [[zero; 4]; 4];
    let ginv = inverse2::<T, D>(g);
    let h = (omega2 * T::lit(2.0)).drecip();
    m[0][1] = h;
    m[1][0] = h;
    for i in 0..2 {
        m[1][2 + i] = b[i] * h;
        m[2 + i][1] = b[i] * h;
    }
    m[2][2] = ginv[0];
    m[2][3] = ginv[1];
    m[3][2] = ginv[1];
    m[3][3] = ginv[2];
    m
}

/// Contraction `g(X, Y)` with a 4×4 metric.
#[inline]
pub fn contract<T: Real>(m: &[[T; 4]; 4], x: &[T; 4], y: &[T; 4]) -> T {
    let mut acc = T::zero();
    for a in 0..4 {
        for b in 0..4 {
            acc += m[a][b] * x[a] * y[b];
        }
    }
    acc
}

/// Spacetime components `(s, ū, θ, φ)` of the tilted null normals.
pub fn frame_vectors<T: Real>(tilt: &FrameTilt<T>, b: &[T; 2]) -> ([T; 4], [T; 4]) {
    let lbar = [T::one(), tilt.epsbar, b[0] + tilt.epsbar_vec[0], b[1] + tilt.epsbar_vec[1]];
    let l = [tilt.eps, T::one(), tilt.eps * b[0] + tilt.eps_vec[0], tilt.eps * b[1] + tilt.eps_vec[1]];
    (lbar, l)
}

/// Null frame tilts of a surface sampled at every node of its grid.
#[derive(Clone, Debug)]
pub struct NullFrameTilt<T> {
    pub grid: Arc<SphereGrid<T>>,
    pub tilts: Vec<FrameTilt<T>>,
    /// `B_i^j = δ_i^j − f_i b^j`, stored row-major as `[B_θ^θ, B_θ^φ, B_φ^θ, B_φ^φ]`.
    pub b_tensor: Vec<[T; 4]>,
    /// Metric values at the surface points.
    pub metric: Vec<Metric<T>>,
}

impl<T: Real> NullFrameTilt<T> {
    /// Largest `|g(L̄̃, L̄̃)|`, `|g(L̃, L̃)|` and `|g(L̄̃, L̃′) − 2|` over the
    /// nodes, each evaluated with the rebuilt spacetime metric.
    pub fn nullity_defects(&self) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (t, m) in self.tilts.iter().zip(&self.metric) {
            let g4 = spacetime_metric::<T, T>(m.omega2, &m.g, &m.b);
            let (lb, l) = frame_vectors(t, &m.b);
            out[0] = out[0].max(contract(&g4, &lb, &lb).abs());
            out[1] = out[1].max(contract(&g4, &l, &l).abs());
            let n = contract(&g4, &lb, &l) / t.omega2_tilde;
            out[2] = out[2].max((n - T::lit(2.0)).abs());
        }
        out
    }
}

/// Builds the null frame tilts of the surface `(s, ū) = (f(θ), f̄(θ))`.
pub fn frame_from_first_param<T: Real>(st: &Spacetime<T>, f: &SphereField<T>, fbar: &SphereField<T>) -> Result<NullFrameTilt<T>> {
    let grid = f.grid().clone();
    let [ft, fp] = f.grad();
    let [gt, gp] = fbar.grad();
    let mut tilts = Vec::with_capacity(grid.len());
    let mut b_tensor = Vec::with_capacity(grid.len());
    let mut metric = Vec::with_capacity(grid.len());
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let m = st.metric_values(f.values()[k], fbar.values()[k], th, ph)?;
        let df = [ft[k], fp[k]];
        let dfb = [gt[k], gp[k]];
        let tilt = frame_tilt::<T, T>(m.omega2, &m.g, &m.b, &df, &dfb).ok_or(Error::NotSpacelike { node: k })?;
        let one = T::one();
        b_tensor.push([one - df[0] * m.b[0], -df[0] * m.b[1], -df[1] * m.b[0], one - df[1] * m.b[1]]);
        tilts.push(tilt);
        metric.push(m);
    }
    Ok(NullFrameTilt { grid, tilts, b_tensor, metric })
}

/// First partials of the spacetime metric at one point, `out[c][μ][ν] = ∂_c g_{μν}`.
pub fn spacetime_metric_partials<T: Real>(m: &Metric<Jet1<T>>) -> ([[T; 4]; 4], [[[T; 4]; 4]; 4]) {
    let g4 = spacetime_metric::<T, Jet1<T>>(m.omega2, &m.g, &m.b);
    let mut val = [[T::zero(); 4]; 4];
    let mut d = [[[T::zero(); 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            val[a][b] = g4[a][b].v;
            for c in 0..4 {
                d[c][a][b] = g4[a][b].d[c];
            }
        }
    }
    (val, d)
}

/// Christoffel symbols `Γ^μ_{αβ}` of the spacetime metric at one point.
pub fn spacetime_christoffel<T: Real>(m: &Metric<Jet1<T>>) -> [[[T; 4]; 4]; 4] {
    let (_, d) = spacetime_metric_partials(m);
    let om = m.omega2.v;
    let g = [m.g[0].v, m.g[1].v, m.g[2].v];
    let b = [m.b[0].v, m.b[1].v];
    let inv = spacetime_inverse::<T, T>(om, &g, &b);
    let half = T::lit(0.5);
    let mut low = [[[T::zero(); 4]; 4]; 4];
    for l in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                low[l][a][b] = (d[a][b][l] + d[b][a][l] - d[l][a][b]) * half;
            }
        }
    }
    let mut out = [[[T::zero(); 4]; 4]; 4];
    for mu in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = T::zero();
                for l in 0..4 {
                    acc += inv[mu][l] * low[l][a][b];
                }
                out[mu][a][b] = acc;
            }
        }
    }
    out
}
