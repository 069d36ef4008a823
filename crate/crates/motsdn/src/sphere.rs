//! Spectral calculus on the unit round sphere.
//!
//! Functions are stored as real spherical harmonic coefficients up to degree
//! `l_max` together with their values on a Gauss–Legendre × uniform longitude
//! grid. The grid is padded (`n_lat = ⌈(3L+1)/2⌉`, `n_lon = 3L+1`) so that the
//! projection of a product of two band-limited functions is exact.
//!
//! Conventions:
//! * coefficients are ordered `l`-major with `m = -l..=l`, index `l² + l + m`;
//! * `Y_l0 = P̄_l0(cos θ)`, `Y_lm = √2 P̄_lm cos mφ` for `m > 0` and
//!   `Y_lm = √2 P̄_l|m| sin |m|φ` for `m < 0`, orthonormal on the sphere and
//!   without the Condon–Shortley phase, so `Y_11 ∝ +x` and `Y_1,-1 ∝ +y`;
//! * node values are ring-major, index `i * n_lon + j` with `θ_i` increasing.
//!
//! Only scalar functions are differentiated spectrally. Derivatives of tangent
//! vector fields go through their Cartesian components, which are smooth
//! functions on the sphere (see [`vector_partials`]).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dual, Real};

/// Index of `(l, m)` in the coefficient vector.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Number of coefficients of a degree `l_max` expansion.
#[inline]
pub fn n_coeffs(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Quadrature grid and Legendre tables for a fixed band limit.
#[derive(Debug)]
pub struct SphereGrid<T> {
    l_max: usize,
    n_lat: usize,
    n_lon: usize,
    theta: Vec<T>,
    cos_t: Vec<T>,
    sin_t: Vec<T>,
    weight: Vec<T>,
    phi: Vec<T>,
    cos_m: Vec<T>,
    sin_m: Vec<T>,
    p: Vec<T>,
    dp: Vec<T>,
    ddp: Vec<T>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in decreasing order.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let nf = T::count(n);
    for k in 0..n {
        let mut z = (T::PI() * (T::count(k) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (mut p0, mut p1) = (T::one(), z);
            for j in 2..=n {
                let jf = T::count(j);
                let p2 = ((T::lit(2.0) * jf - T::one()) * z * p1 - (jf - T::one()) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = T::one();
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - T::one());
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        x[k] = z;
        w[k] = T::lit(2.0) / ((T::one() - z * z) * dp * dp);
    }
    (x, w)
}

/// Fills normalised associated Legendre values `P̄_lm` and `dP̄_lm/dθ` for
/// `0 ≤ m ≤ l ≤ l_max` at a single colatitude.
fn legendre_row<T: Real>(l_max: usize, c: T, s: T, p: &mut [T], dp: &mut [T]) {
    let one = T::one();
    let two = T::lit(2.0);
    p[tri(0, 0)] = one / (T::lit(4.0) * T::PI()).sqrt();
    for m in 1..=l_max {
        let mf = T::count(m);
        p[tri(m, m)] = ((two * mf + one) / (two * mf)).sqrt() * s * p[tri(m - 1, m - 1)];
    }
    for m in 0..l_max {
        let mf = T::count(m);
        p[tri(m + 1, m)] = (two * mf + T::lit(3.0)).sqrt() * c * p[tri(m, m)];
    }
    for m in 0..=l_max {
        let mf = T::count(m);
        for l in (m + 2)..=l_max {
            let lf = T::count(l);
            let a = ((T::lit(4.0) * lf * lf - one) / (lf * lf - mf * mf)).sqrt();
            let lm1 = lf - one;
            let b = ((lm1 * lm1 - mf * mf) / (T::lit(4.0) * lm1 * lm1 - one)).sqrt();
            p[tri(l, m)] = a * (c * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    for l in 0..=l_max {
        let lf = T::count(l);
        for m in 0..=l {
            let mf = T::count(m);
            let prev = if l > m {
                ((two * lf + one) / (two * lf - one) * (lf * lf - mf * mf)).sqrt() * p[tri(l - 1, m)]
            } else {
                T::zero()
            };
            dp[tri(l, m)] = (lf * c * p[tri(l, m)] - prev) / s;
        }
    }
}

impl<T: Real> SphereGrid<T> {
    /// Padded grid for band limit `l_max`.
    pub fn new(l_max: usize) -> Arc<Self> {
        let n_lat = (3 * l_max + 2) / 2;
        Self::with_nodes(l_max, n_lat.max(l_max + 1), 3 * l_max + 1)
    }

    /// Grid with explicit node counts.
    ///
    /// # Panics
    /// Panics if the grid cannot represent band `l_max` exactly.
    pub fn with_nodes(l_max: usize, n_lat: usize, n_lon: usize) -> Arc<Self> {
        assert!(n_lat > l_max && n_lon > 2 * l_max, "grid too coarse for band limit");
        let (x, w) = gauss_legendre::<T>(n_lat);
        let nt = tri(l_max, l_max) + 1;
        let dphi = T::lit(2.0) * T::PI() / T::count(n_lon);
        let mut grid = SphereGrid {
            l_max,
            n_lat,
            n_lon,
            theta: x.iter().map(|&c| c.acos()).collect(),
            cos_t: x.clone(),
            sin_t: x.iter().map(|&c| (T::one() - c * c).sqrt()).collect(),
            weight: w.iter().map(|&wi| wi * dphi).collect(),
            phi: (0..n_lon).map(|j| T::count(j) * dphi).collect(),
            cos_m: vec![T::zero(); n_lon * (l_max + 1)],
            sin_m: vec![T::zero(); n_lon * (l_max + 1)],
            p: vec![T::zero(); n_lat * nt],
            dp: vec![T::zero(); n_lat * nt],
            ddp: vec![T::zero(); n_lat * nt],
        };
        for j in 0..n_lon {
            for m in 0..=l_max {
                let a = T::count(m) * grid.phi[j];
                grid.cos_m[j * (l_max + 1) + m] = a.cos();
                grid.sin_m[j * (l_max + 1) + m] = a.sin();
            }
        }
        for i in 0..n_lat {
            let (c, s) = (grid.cos_t[i], grid.sin_t[i]);
            let row = i * nt;
            legendre_row(l_max, c, s, &mut grid.p[row..row + nt], &mut grid.dp[row..row + nt]);
            for l in 0..=l_max {
                let ll = T::count(l * (l + 1));
                for m in 0..=l {
                    let mf = T::count(m);
                    let k = row + tri(l, m);
                    grid.ddp[k] = -c / s * grid.dp[k] - (ll - mf * mf / (s * s)) * grid.p[k];
                }
            }
        }
        Arc::new(grid)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }
    pub fn n_lat(&self) -> usize {
        self.n_lat
    }
    pub fn n_lon(&self) -> usize {
        self.n_lon
    }
    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of spectral coefficients.
    pub fn n_coeffs(&self) -> usize {
        n_coeffs(self.l_max)
    }
    /// Colatitude of node `k`.
    #[inline]
    pub fn theta(&self, k: usize) -> T {
        self.theta[k / self.n_lon]
    }
    /// Longitude of node `k`.
    #[inline]
    pub fn phi(&self, k: usize) -> T {
        self.phi[k % self.n_lon]
    }
    /// `(sin θ, cos θ)` of node `k`.
    #[inline]
    pub fn sin_cos_theta(&self, k: usize) -> (T, T) {
        let i = k / self.n_lon;
        (self.sin_t[i], self.cos_t[i])
    }
    /// Quadrature weight of node `k` (sums to `4π`).
    #[inline]
    pub fn weight(&self, k: usize) -> T {
        self.weight[k / self.n_lon]
    }
    /// Iterator over `(θ, φ)` of all nodes.
    pub fn nodes(&self) -> impl Iterator<Item = (T, T)> + '_ {
        (0..self.len()).map(move |k| (self.theta(k), self.phi(k)))
    }

    /// Quadrature of node values over the sphere.
    pub fn integrate(&self, values: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.n_lat {
            let mut ring = T::zero();
            for j in 0..self.n_lon {
                ring += values[i * self.n_lon + j];
            }
            acc += ring * self.weight[i];
        }
        acc
    }

    /// Projects node values onto the band-limited coefficients.
    pub fn analyze(&self, values: &[T]) -> Vec<T> {
        assert_eq!(values.len(), self.len());
        let lm = self.l_max + 1;
        let nt = tri(self.l_max, self.l_max) + 1;
        let sqrt2 = T::lit(2.0).sqrt();
        let mut c = vec![T::zero(); self.n_coeffs()];
        let mut a = vec![T::zero(); lm];
        let mut b = vec![T::zero(); lm];
        for i in 0..self.n_lat {
            a.iter_mut().for_each(|x| *x = T::zero());
            b.iter_mut().for_each(|x| *x = T::zero());
            for j in 0..self.n_lon {
                let f = values[i * self.n_lon + j];
                for m in 0..lm {
                    a[m] += f * self.cos_m[j * lm + m];
                    b[m] += f * self.sin_m[j * lm + m];
                }
            }
            let w = self.weight[i];
            let row = &self.p[i * nt..(i + 1) * nt];
            for l in 0..=self.l_max {
                let base = l * l + l;
                c[base] += w * row[tri(l, 0)] * a[0];
                for m in 1..=l {
                    let pw = w * sqrt2 * row[tri(l, m)];
                    c[base + m] += pw * a[m];
                    c[base - m] += pw * b[m];
                }
            }
        }
        c
    }

    /// Evaluates `∂_θ^dt ∂_φ^dp` of the expansion at all nodes (`dt ≤ 2`, `dp ≤ 2`).
    pub fn synth(&self, c: &[T], dt: usize, dp: usize) -> Vec<T> {
        assert_eq!(c.len(), self.n_coeffs());
        let lm = self.l_max + 1;
        let nt = tri(self.l_max, self.l_max) + 1;
        let table = match dt {
            0 => &self.p,
            1 => &self.dp,
            2 => &self.ddp,
            _ => panic!("θ derivative order above two"),
        };
        let sqrt2 = T::lit(2.0).sqrt();
        let mut out = vec![T::zero(); self.len()];
        let mut a = vec![T::zero(); lm];
        let mut b = vec![T::zero(); lm];
        for i in 0..self.n_lat {
            let row = &table[i * nt..(i + 1) * nt];
            for m in 0..lm {
                let mut sa = T::zero();
                let mut sb = T::zero();
                for l in m..=self.l_max {
                    let base = l * l + l;
                    sa += c[base + m] * row[tri(l, m)];
                    if m > 0 {
                        sb += c[base - m] * row[tri(l, m)];
                    }
                }
                if m > 0 {
                    sa *= sqrt2;
                    sb *= sqrt2;
                }
                let mf = T::count(m);
                let (aa, bb) = match dp {
                    0 => (sa, sb),
                    1 => (mf * sb, -mf * sa),
                    2 => (-mf * mf * sa, -mf * mf * sb),
                    _ => panic!("φ derivative order above two"),
                };
                a[m] = aa;
                b[m] = bb;
            }
            for j in 0..self.n_lon {
                let mut v = T::zero();
                for m in 0..lm {
                    v += a[m] * self.cos_m[j * lm + m] + b[m] * self.sin_m[j * lm + m];
                }
                out[i * self.n_lon + j] = v;
            }
        }
        out
    }

    /// Evaluates an expansion at an arbitrary point.
    pub fn eval_point(&self, c: &[T], theta: T, phi: T) -> T {
        let nt = tri(self.l_max, self.l_max) + 1;
        let mut p = vec![T::zero(); nt];
        let mut dp = vec![T::zero(); nt];
        let s = theta.sin().max(T::min_positive_value());
        legendre_row(self.l_max, theta.cos(), s, &mut p, &mut dp);
        let sqrt2 = T::lit(2.0).sqrt();
        let mut v = T::zero();
        for l in 0..=self.l_max {
            let base = l * l + l;
            v += c[base] * p[tri(l, 0)];
            for m in 1..=l {
                let mf = T::count(m);
                let (sm, cm) = (mf * phi).sin_cos();
                v += sqrt2 * p[tri(l, m)] * (c[base + m] * cm + c[base - m] * sm);
            }
        }
        v
    }
}

/// Band-limited scalar field on the sphere.
#[derive(Clone, Debug)]
pub struct SphereField<T> {
    grid: Arc<SphereGrid<T>>,
    coeffs: Vec<T>,
    values: Vec<T>,
}

/// Coefficient layout written into snapshots.
pub const SNAPSHOT_BASIS: &str = "real-lm-lmajor";

/// Serializable snapshot of a field; the grid is rebuilt from the band limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSnapshot {
    pub band_limit: usize,
    pub basis: String,
    pub coeffs: Vec<f64>,
}

/// Exponent of a Sobolev norm; `f64::INFINITY` selects the sup norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormSpec {
    pub n: usize,
    pub p: f64,
}

impl NormSpec {
    /// Validated norm specification; requires `p > 1`.
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter(format!("Sobolev exponent p = {p} must exceed 1")));
        }
        Ok(NormSpec { n, p })
    }
}

impl<T: Real> SphereField<T> {
    /// Field from spectral coefficients.
    pub fn from_coeffs(grid: &Arc<SphereGrid<T>>, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), grid.n_coeffs());
        let values = grid.synth(&coeffs, 0, 0);
        SphereField { grid: grid.clone(), coeffs, values }
    }

    /// Band-limited projection of node values.
    pub fn from_values(grid: &Arc<SphereGrid<T>>, values: &[T]) -> Self {
        Self::from_coeffs(grid, grid.analyze(values))
    }

    /// Projection of a function of `(θ, φ)` sampled at the nodes.
    pub fn from_fn(grid: &Arc<SphereGrid<T>>, f: impl Fn(T, T) -> T) -> Self {
        let v: Vec<T> = grid.nodes().map(|(t, p)| f(t, p)).collect();
        Self::from_values(grid, &v)
    }

    pub fn zeros(grid: &Arc<SphereGrid<T>>) -> Self {
        SphereField { grid: grid.clone(), coeffs: vec![T::zero(); grid.n_coeffs()], values: vec![T::zero(); grid.len()] }
    }

    /// Constant field.
    pub fn constant(grid: &Arc<SphereGrid<T>>, c: T) -> Self {
        let mut coeffs = vec![T::zero(); grid.n_coeffs()];
        coeffs[0] = c * (T::lit(4.0) * T::PI()).sqrt();
        SphereField { grid: grid.clone(), coeffs, values: vec![c; grid.len()] }
    }

    /// `amp · Y_lm`.
    pub fn ylm(grid: &Arc<SphereGrid<T>>, l: usize, m: i64, amp: T) -> Self {
        assert!(l <= grid.l_max() && m.unsigned_abs() as usize <= l);
        let mut coeffs = vec![T::zero(); grid.n_coeffs()];
        coeffs[lm_index(l, m)] = amp;
        Self::from_coeffs(grid, coeffs)
    }

    pub fn grid(&self) -> &Arc<SphereGrid<T>> {
        &self.grid
    }
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn l_max(&self) -> usize {
        self.grid.l_max
    }
    /// Coefficient of `Y_lm`.
    pub fn coeff(&self, l: usize, m: i64) -> T {
        self.coeffs[lm_index(l, m)]
    }

    /// Round-sphere mean `(1/4π) ∫ f`.
    pub fn mean(&self) -> T {
        self.coeffs[0] / (T::lit(4.0) * T::PI()).sqrt()
    }

    /// Field with its mean removed.
    pub fn without_mean(&self) -> Self {
        let mut c = self.coeffs.clone();
        c[0] = T::zero();
        Self::from_coeffs(&self.grid, c)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Self {
        let c = self.coeffs.iter().zip(&other.coeffs).map(|(&x, &y)| a * x + b * y).collect();
        let v = self.values.iter().zip(&other.values).map(|(&x, &y)| a * x + b * y).collect();
        SphereField { grid: self.grid.clone(), coeffs: c, values: v }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lincomb(T::one(), other, T::one())
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.lincomb(T::one(), other, -T::one())
    }
    pub fn scale(&self, a: T) -> Self {
        self.lincomb(a, self, T::zero())
    }

    /// Projection of a pointwise map of the node values.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let v: Vec<T> = self.values.iter().map(|&x| f(x)).collect();
        Self::from_values(&self.grid, &v)
    }

    /// Projection of the pointwise product.
    pub fn mul(&self, other: &Self) -> Self {
        let v: Vec<T> = self.values.iter().zip(&other.values).map(|(&x, &y)| x * y).collect();
        Self::from_values(&self.grid, &v)
    }

    /// Coordinate partials `(∂_θ f, ∂_φ f)` at the nodes.
    pub fn grad(&self) -> [Vec<T>; 2] {
        [self.grid.synth(&self.coeffs, 1, 0), self.grid.synth(&self.coeffs, 0, 1)]
    }

    /// Coordinate second partials `(∂_θθ, ∂_θφ, ∂_φφ)` at the nodes.
    pub fn coord_hessian(&self) -> [Vec<T>; 3] {
        [
            self.grid.synth(&self.coeffs, 2, 0),
            self.grid.synth(&self.coeffs, 1, 1),
            self.grid.synth(&self.coeffs, 0, 2),
        ]
    }

    /// Covariant Hessian with respect to the round metric, coordinate components.
    pub fn round_hessian(&self) -> [Vec<T>; 3] {
        let [ft, fp] = self.grad();
        let [htt, htp, hpp] = self.coord_hessian();
        let n = self.grid.len();
        let mut out = [htt, vec![T::zero(); n], vec![T::zero(); n]];
        for k in 0..n {
            let (s, c) = self.grid.sin_cos_theta(k);
            out[1][k] = htp[k] - c / s * fp[k];
            out[2][k] = hpp[k] + s * c * ft[k];
        }
        out
    }

    /// Round Laplacian, computed spectrally.
    pub fn laplacian(&self) -> Self {
        let mut c = self.coeffs.clone();
        for l in 0..=self.l_max() {
            let f = -T::count(l * (l + 1));
            for m in -(l as i64)..=(l as i64) {
                c[lm_index(l, m)] *= f;
            }
        }
        Self::from_coeffs(&self.grid, c)
    }

    /// Applies the rotation field `R_a` (`a ∈ {0, 1, 2}`).
    pub fn rotation(&self, a: usize) -> Self {
        let [ft, fp] = self.grad();
        let v: Vec<T> = (0..self.grid.len())
            .map(|k| {
                let r = rotation_field(a, self.grid.theta(k), self.grid.phi(k));
                r[0] * ft[k] + r[1] * fp[k]
            })
            .collect();
        Self::from_values(&self.grid, &v)
    }

    /// Evaluates the expansion at an arbitrary point.
    pub fn eval(&self, theta: T, phi: T) -> T {
        self.grid.eval_point(&self.coeffs, theta, phi)
    }

    /// `L²` norm.
    pub fn l2_norm(&self) -> T {
        self.coeffs.iter().map(|&c| c * c).sum::<T>().sqrt()
    }

    /// Maximum absolute node value.
    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Sobolev norm `Σ_{k≤n} (∫ Σ_{a_1..a_k} |R_{a_1}…R_{a_k} f|^p)^{1/p}` built
    /// from the rotation fields; for `p = ∞` each word contributes its sup.
    pub fn sobolev_norm(&self, spec: NormSpec) -> T {
        let mut level = vec![self.clone()];
        let mut total = T::zero();
        for k in 0..=spec.n {
            if k > 0 {
                level = level.iter().flat_map(|f| (0..3).map(move |a| f.rotation(a))).collect();
            }
            total += lp_of_fields(&self.grid, &level, spec.p);
        }
        total
    }

    /// Covariant Sobolev norm `Σ_{k≤n} ‖∇̊^k f‖_{L^p}` for `n ≤ 2`.
    pub fn sobolev_norm_covariant(&self, spec: NormSpec) -> Result<T> {
        if spec.n > 2 {
            return Err(Error::InvalidParameter("covariant norm supports n ≤ 2".into()));
        }
        let g = &self.grid;
        let n = g.len();
        let mut mags: Vec<Vec<T>> = vec![self.values.clone()];
        if spec.n >= 1 {
            let [ft, fp] = self.grad();
            mags.push(
                (0..n)
                    .map(|k| {
                        let (s, _) = g.sin_cos_theta(k);
                        (ft[k] * ft[k] + fp[k] * fp[k] / (s * s)).sqrt()
                    })
                    .collect(),
            );
        }
        if spec.n >= 2 {
            let [htt, htp, hpp] = self.round_hessian();
            mags.push(
                (0..n)
                    .map(|k| {
                        let (s, _) = g.sin_cos_theta(k);
                        let s2 = s * s;
                        (htt[k] * htt[k] + T::lit(2.0) * htp[k] * htp[k] / s2 + hpp[k] * hpp[k] / (s2 * s2)).sqrt()
                    })
                    .collect(),
            );
        }
        let mut total = T::zero();
        for m in &mags {
            total += lp_of_values(g, &[m.as_slice()], spec.p);
        }
        Ok(total)
    }

    /// Covariant Hessian `∂_i∂_j f − Γ^k_ij ∂_k f` for a general 2-metric.
    pub fn covariant_hessian(&self, metric: &MetricSamples<T>) -> [Vec<T>; 3] {
        let [ft, fp] = self.grad();
        let [htt, htp, hpp] = self.coord_hessian();
        let n = self.grid.len();
        let mut out = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
        for k in 0..n {
            let gam = christoffel(&metric.g[k], &metric.dg[k]);
            let df = [ft[k], fp[k]];
            let h = [htt[k], htp[k], hpp[k]];
            for (idx, (i, j)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                out[idx][k] = h[idx] - gam[0][i][j] * df[0] - gam[1][i][j] * df[1];
            }
        }
        out
    }

    /// Solves `Δ̊u = self` for the mean-zero `u`.
    pub fn solve_poisson(&self) -> Result<Self> {
        let scale = self.l2_norm().max(T::one());
        let mean = self.mean();
        if mean.abs() > T::lit(1e-10) * scale {
            return Err(Error::NonZeroMean { mean: mean.as_f64() });
        }
        let mut c = self.coeffs.clone();
        c[0] = T::zero();
        for l in 1..=self.l_max() {
            let f = -T::count(l * (l + 1));
            for m in -(l as i64)..=(l as i64) {
                c[lm_index(l, m)] /= f;
            }
        }
        Ok(Self::from_coeffs(&self.grid, c))
    }

    /// Serializable snapshot.
    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            band_limit: self.l_max(),
            basis: SNAPSHOT_BASIS.to_string(),
            coeffs: self.coeffs.iter().map(|c| c.as_f64()).collect(),
        }
    }

    /// Field on `grid` from a snapshot; modes above the grid's band limit
    /// are dropped and missing ones are zero.
    pub fn from_snapshot(grid: &Arc<SphereGrid<T>>, snap: &FieldSnapshot) -> Result<Self> {
        if snap.basis != SNAPSHOT_BASIS {
            return Err(Error::InvalidParameter(format!("unknown coefficient basis {:?}", snap.basis)));
        }
        if snap.coeffs.len() != n_coeffs(snap.band_limit) {
            return Err(Error::InvalidParameter(format!(
                "snapshot has {} coefficients, band limit {} needs {}",
                snap.coeffs.len(),
                snap.band_limit,
                n_coeffs(snap.band_limit)
            )));
        }
        if snap.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("snapshot coefficients".into()));
        }
        let mut c = vec![T::zero(); grid.n_coeffs()];
        for (dst, &src) in c.iter_mut().zip(&snap.coeffs) {
            *dst = T::lit(src);
        }
        Ok(Self::from_coeffs(grid, c))
    }
}

fn lp_of_values<T: Real>(grid: &SphereGrid<T>, fields: &[&[T]], p: f64) -> T {
    if p.is_infinite() {
        return fields
            .iter()
            .map(|f| f.iter().fold(T::zero(), |m, &x| m.max(x.abs())))
            .sum();
    }
    let pt = T::lit(p);
    let mut acc = vec![T::zero(); grid.len()];
    for f in fields {
        for (a, &x) in acc.iter_mut().zip(f.iter()) {
            *a += x.abs().powf(pt);
        }
    }
    grid.integrate(&acc).powf(pt.recip())
}

fn lp_of_fields<T: Real>(grid: &SphereGrid<T>, fields: &[SphereField<T>], p: f64) -> T {
    if p.is_infinite() {
        let refs: Vec<&[T]> = fields.iter().map(|f| f.values()).collect();
        return lp_of_values(grid, &refs, p);
    }
    let refs: Vec<&[T]> = fields.iter().map(|f| f.values()).collect();
    lp_of_values(grid, &refs, p)
}

/// Induced 2-metric samples: components `(g_θθ, g_θφ, g_φφ)` and their
/// coordinate partials `dg[k][i]` with `i = 0` for `∂_θ`, `1` for `∂_φ`.
#[derive(Clone, Debug)]
pub struct MetricSamples<T> {
    pub g: Vec<[T; 3]>,
    pub dg: Vec<[[T; 3]; 2]>,
}

#[inline]
fn sym2<T: Copy>(g: &[T; 3], i: usize, j: usize) -> T {
    match (i, j) {
        (0, 0) => g[0],
        (1, 1) => g[2],
        _ => g[1],
    }
}

/// Christoffel symbols `Γ^k_ij` (indexed `[k][i][j]`) of a 2-metric from its
/// components and coordinate partials.
pub fn christoffel<T: Real, D: Dual<T>>(g: &[D; 3], dg: &[[D; 3]; 2]) -> [[[D; 2]; 2]; 2] {
    let inv = inverse2(g);
    let half = T::lit(0.5);
    let zero = D::cst(T::zero());
    let mut low = [[[zero; 2]; 2]; 2];
    for l in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                low[l][i][j] = (sym2(&dg[i], j, l) + sym2(&dg[j], i, l) - sym2(&dg[l], i, j)) * half;
            }
        }
    }
    let mut out = [[[zero; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                out[k][i][j] = sym2(&inv, k, 0) * low[0][i][j] + sym2(&inv, k, 1) * low[1][i][j];
            }
        }
    }
    out
}

/// Inverse of a symmetric 2×2 matrix stored as `(a, b, c)`.
#[inline]
pub fn inverse2<T: Real, D: Dual<T>>(g: &[D; 3]) -> [D; 3] {
    let det = g[0] * g[2] - g[1] * g[1];
    let r = det.drecip();
    [g[2] * r, -(g[1] * r), g[0] * r]
}

/// Rotation field `R_a` in coordinate components `(R^θ, R^φ)`:
/// `R_0 = -sin φ ∂_θ - cot θ cos φ ∂_φ`, `R_1 = cos φ ∂_θ - cot θ sin φ ∂_φ`,
/// `R_2 = ∂_φ`. They satisfy `Σ_a R_a ⊗ R_a = g̊⁻¹`.
#[inline]
pub fn rotation_field<T: Real>(a: usize, theta: T, phi: T) -> [T; 2] {
    let (sp, cp) = phi.sin_cos();
    let cot = theta.cos() / theta.sin();
    match a {
        0 => [-sp, -cot * cp],
        1 => [cp, -cot * sp],
        _ => [T::zero(), T::one()],
    }
}

/// Coordinate partials of the rotation field components, `out[j][i] = ∂_j R_a^i`.
#[inline]
pub fn rotation_field_partials<T: Real>(a: usize, theta: T, phi: T) -> [[T; 2]; 2] {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let cot = ct / st;
    let csc2 = (st * st).recip();
    match a {
        0 => [[T::zero(), cp * csc2], [-cp, cot * sp]],
        1 => [[T::zero(), sp * csc2], [-sp, -cot * cp]],
        _ => [[T::zero(); 2]; 2],
    }
}

/// Spectral coordinate partials of node values after band-limited projection.
pub fn grad_of_values<T: Real>(grid: &Arc<SphereGrid<T>>, values: &[T]) -> [Vec<T>; 2] {
    SphereField::from_values(grid, values).grad()
}

/// Coordinate partials `out[i][k] = ∂_i V^k` of a tangent vector field given
/// by its coordinate components, computed through the smooth Cartesian
/// components of `V` in the embedding `S² ⊂ ℝ³`.
pub fn vector_partials<T: Real>(grid: &Arc<SphereGrid<T>>, vt: &[T], vp: &[T]) -> [[Vec<T>; 2]; 2] {
    let n = grid.len();
    let mut cart = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    let frames: Vec<_> = (0..n).map(|k| embedding_frame(grid.theta(k), grid.phi(k))).collect();
    for k in 0..n {
        let (et, ep) = (&frames[k].0, &frames[k].1);
        for c in 0..3 {
            cart[c][k] = vt[k] * et[c] + vp[k] * ep[c];
        }
    }
    let grads: Vec<[Vec<T>; 2]> = cart.iter().map(|c| grad_of_values(grid, c)).collect();
    let mut out = [[vec![T::zero(); n], vec![T::zero(); n]], [vec![T::zero(); n], vec![T::zero(); n]]];
    for k in 0..n {
        let (st, ct) = grid.sin_cos_theta(k);
        let (sp, cp) = grid.phi(k).sin_cos();
        let (et, ep) = (&frames[k].0, &frames[k].1);
        let v = [cart[0][k], cart[1][k], cart[2][k]];
        let dtt = [-st * cp, -st * sp, -ct];
        let dtp = [-ct * sp, ct * cp, T::zero()];
        let dpp = [-st * cp, -st * sp, T::zero()];
        let second = [[dtt, dtp], [dtp, dpp]];
        for i in 0..2 {
            let dv = [grads[0][i][k], grads[1][i][k], grads[2][i][k]];
            let dot = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            out[i][0][k] = dot(&dv, et) + dot(&v, &second[i][0]);
            let s2 = st * st;
            let d_inv_s2 = if i == 0 { -T::lit(2.0) * ct / (s2 * st) } else { T::zero() };
            out[i][1][k] = (dot(&dv, ep) + dot(&v, &second[i][1])) / s2 + dot(&v, ep) * d_inv_s2;
        }
    }
    out
}

/// Embedding tangent vectors `(∂_θ X, ∂_φ X)` of the unit sphere.
#[inline]
pub fn embedding_frame<T: Real>(theta: T, phi: T) -> ([T; 3], [T; 3]) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    ([ct * cp, ct * sp, -st], [-st * sp, st * cp, T::zero()])
}

/// Real spherical harmonic evaluated through the [`Dual`] interface.
pub fn ylm_dual<T: Real, D: Dual<T>>(l: usize, m: i64, theta: D, phi: D) -> D {
    let (p, _) = legendre_dual::<T, D>(l, m.unsigned_abs() as usize, theta);
    p * azimuthal::<T, D>(m, phi)
}

/// `(∂_θ Y_lm, ∂_φ Y_lm)` evaluated through the [`Dual`] interface.
pub fn ylm_grad_dual<T: Real, D: Dual<T>>(l: usize, m: i64, theta: D, phi: D) -> (D, D) {
    let am = m.unsigned_abs() as usize;
    let (p, dp) = legendre_dual::<T, D>(l, am, theta);
    let az = azimuthal::<T, D>(m, phi);
    let mf = T::count(am);
    let daz = if m == 0 {
        D::cst(T::zero())
    } else if m > 0 {
        (phi * mf).dsin() * (-T::lit(2.0).sqrt() * mf)
    } else {
        (phi * mf).dcos() * (T::lit(2.0).sqrt() * mf)
    };
    (dp * az, p * daz)
}

fn azimuthal<T: Real, D: Dual<T>>(m: i64, phi: D) -> D {
    let am = T::count(m.unsigned_abs() as usize);
    if m == 0 {
        D::cst(T::one())
    } else if m > 0 {
        (phi * am).dcos() * T::lit(2.0).sqrt()
    } else {
        (phi * am).dsin() * T::lit(2.0).sqrt()
    }
}

/// `(P̄_lm, dP̄_lm/dθ)` in dual arithmetic.
fn legendre_dual<T: Real, D: Dual<T>>(l: usize, m: usize, theta: D) -> (D, D) {
    assert!(m <= l);
    let c = theta.dcos();
    let s = theta.dsin();
    let one = T::one();
    let two = T::lit(2.0);
    let mut pmm = D::cst(one / (T::lit(4.0) * T::PI()).sqrt());
    for k in 1..=m {
        let kf = T::count(k);
        pmm = s * pmm * ((two * kf + one) / (two * kf)).sqrt();
    }
    let mf = T::count(m);
    let mut prev = D::cst(T::zero());
    let mut cur = pmm;
    if l > m {
        prev = pmm;
        cur = c * pmm * (two * mf + T::lit(3.0)).sqrt();
        for ll in (m + 2)..=l {
            let lf = T::count(ll);
            let a = ((T::lit(4.0) * lf * lf - one) / (lf * lf - mf * mf)).sqrt();
            let lm1 = lf - one;
            let b = ((lm1 * lm1 - mf * mf) / (T::lit(4.0) * lm1 * lm1 - one)).sqrt();
            let next = (c * cur - prev * b) * a;
            prev = cur;
            cur = next;
        }
    }
    let lf = T::count(l);
    let down = if l > m { prev * ((two * lf + one) / (two * lf - one) * (lf * lf - mf * mf)).sqrt() } else { D::cst(T::zero()) };
    let dp = (c * cur * lf - down) / s;
    (cur, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_field(grid: &Arc<SphereGrid<f64>>, seed: u64, band: usize) -> SphereField<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = vec![0.0; grid.n_coeffs()];
        for l in 0..=band.min(grid.l_max()) {
            for m in -(l as i64)..=(l as i64) {
                c[lm_index(l, m)] = rng.gen_range(-1.0..1.0);
            }
        }
        SphereField::from_coeffs(grid, c)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre::<f64>(7);
        let sum: f64 = w.iter().sum();
        assert_relative_eq!(sum, 2.0, epsilon = 1e-14);
        let i12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(i12, 2.0 / 13.0, epsilon = 1e-14);
    }

    #[test]
    fn default_grid_shape() {
        let g = SphereGrid::<f64>::new(15);
        assert_eq!(g.n_lat(), 23);
        assert_eq!(g.n_lon(), 46);
        let w: f64 = (0..g.len()).map(|k| g.weight(k)).sum();
        assert_relative_eq!(w, 4.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn low_harmonics_match_closed_forms() {
        let g = SphereGrid::<f64>::new(4);
        let pi = std::f64::consts::PI;
        let y11 = SphereField::ylm(&g, 1, 1, 1.0);
        let y1m1 = SphereField::ylm(&g, 1, -1, 1.0);
        let y20 = SphereField::ylm(&g, 2, 0, 1.0);
        for k in 0..g.len() {
            let (t, p) = (g.theta(k), g.phi(k));
            assert_relative_eq!(y11.values()[k], (3.0 / (4.0 * pi)).sqrt() * t.sin() * p.cos(), epsilon = 1e-14);
            assert_relative_eq!(y1m1.values()[k], (3.0 / (4.0 * pi)).sqrt() * t.sin() * p.sin(), epsilon = 1e-14);
            let c = t.cos();
            assert_relative_eq!(y20.values()[k], (5.0 / (16.0 * pi)).sqrt() * (3.0 * c * c - 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn round_trip_is_exact_for_band_limited_data() {
        let g = SphereGrid::<f64>::new(15);
        let f = random_field(&g, 7, 15);
        let back = g.analyze(f.values());
        for (a, b) in back.iter().zip(f.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_eigenvalue_of_y32() {
        let g = SphereGrid::<f64>::new(8);
        let f = SphereField::ylm(&g, 3, 2, 1.0);
        let lap = f.laplacian();
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert_relative_eq!(*a, -12.0 * b, epsilon = 1e-13);
        }
        let [htt, _, hpp] = f.round_hessian();
        for k in 0..g.len() {
            let (s, _) = g.sin_cos_theta(k);
            assert_relative_eq!(htt[k] + hpp[k] / (s * s), lap.values()[k], epsilon = 1e-11);
        }
    }

    #[test]
    fn sobolev_norms_of_y20() {
        let g = SphereGrid::<f64>::new(8);
        let f = SphereField::ylm(&g, 2, 0, 1.0);
        let n12 = f.sobolev_norm(NormSpec::new(1, 2.0).unwrap());
        assert_relative_eq!(n12, 1.0 + 6f64.sqrt(), epsilon = 1e-12);
        let c12 = f.sobolev_norm_covariant(NormSpec::new(1, 2.0).unwrap()).unwrap();
        assert_relative_eq!(c12, n12, epsilon = 1e-12);
        let n22 = f.sobolev_norm(NormSpec::new(2, 2.0).unwrap());
        assert_relative_eq!(n22, 1.0 + 6f64.sqrt() + 6.0, epsilon = 1e-11);
    }

    #[test]
    fn mean_of_y00_and_one_plus_y10() {
        let g = SphereGrid::<f64>::new(6);
        let pi = std::f64::consts::PI;
        assert_relative_eq!(SphereField::ylm(&g, 0, 0, 1.0).mean(), 1.0 / (4.0 * pi).sqrt(), epsilon = 1e-15);
        let f = SphereField::constant(&g, 1.0).add(&SphereField::ylm(&g, 1, 0, 1.0));
        assert_relative_eq!(f.mean(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn poisson_on_y32_and_mean_rejection() {
        let g = SphereGrid::<f64>::new(8);
        let f = SphereField::ylm(&g, 3, 2, 1.0);
        let u = f.solve_poisson().unwrap();
        assert_relative_eq!(u.coeff(3, 2), -1.0 / 12.0, epsilon = 1e-15);
        let bad = f.add(&SphereField::constant(&g, 0.1));
        assert!(matches!(bad.solve_poisson(), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn hessian_under_conformal_metric() {
        let g = SphereGrid::<f64>::new(10);
        let f = SphereField::ylm(&g, 2, 1, 1.0).add(&SphereField::ylm(&g, 3, -2, 0.5));
        let n = g.len();
        let mut ms = MetricSamples { g: Vec::with_capacity(n), dg: Vec::with_capacity(n) };
        for k in 0..n {
            let (s, c) = g.sin_cos_theta(k);
            let w = 1.0 + 0.1 * c;
            let dw = -0.1 * s;
            ms.g.push([w, 0.0, w * s * s]);
            ms.dg.push([[dw, 0.0, dw * s * s + w * 2.0 * s * c], [0.0; 3]]);
        }
        let h = f.covariant_hessian(&ms);
        let [ft, fp] = f.grad();
        let h0 = f.round_hessian();
        for k in 0..n {
            let (s, c) = g.sin_cos_theta(k);
            let w = 1.0 + 0.1 * c;
            let dlog = -0.1 * s / w;
            let lam = 0.5 * dlog;
            assert_relative_eq!(h[0][k], h0[0][k] - lam * ft[k], epsilon = 1e-11);
            assert_relative_eq!(h[1][k], h0[1][k] - lam * fp[k], epsilon = 1e-11);
            assert_relative_eq!(h[2][k], h0[2][k] + s * s * lam * ft[k], epsilon = 1e-11);
            let _ = c;
        }
    }

    #[test]
    fn rotation_fields_resolve_inverse_round_metric() {
        let (t, p) = (0.7f64, 2.1f64);
        let mut acc = [0.0; 3];
        for a in 0..3 {
            let r = rotation_field(a, t, p);
            acc[0] += r[0] * r[0];
            acc[1] += r[0] * r[1];
            acc[2] += r[1] * r[1];
        }
        assert_relative_eq!(acc[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(acc[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(acc[2], 1.0 / t.sin().powi(2), epsilon = 1e-13);
        let h = 1e-6;
        for a in 0..3 {
            let d = rotation_field_partials(a, t, p);
            let rt = rotation_field(a, t + h, p);
            let rm = rotation_field(a, t - h, p);
            let pt = rotation_field(a, t, p + h);
            let pm = rotation_field(a, t, p - h);
            for i in 0..2 {
                assert_relative_eq!(d[0][i], (rt[i] - rm[i]) / (2.0 * h), epsilon = 1e-8);
                assert_relative_eq!(d[1][i], (pt[i] - pm[i]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn point_evaluation_matches_nodes() {
        let g = SphereGrid::<f64>::new(9);
        let f = random_field(&g, 3, 9);
        for k in (0..g.len()).step_by(17) {
            assert_relative_eq!(f.eval(g.theta(k), g.phi(k)), f.values()[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn dual_harmonics_match_tables() {
        use crate::jet::{Jet1, Jet, TH, PH};
        let g = SphereGrid::<f64>::new(6);
        for &(l, m) in &[(0usize, 0i64), (2, 1), (3, -2), (5, 5), (4, -4), (6, 0)] {
            let f = SphereField::ylm(&g, l, m, 1.0);
            let [ft, fp] = f.grad();
            for k in (0..g.len()).step_by(11) {
                let t = Jet1::<f64>::var(g.theta(k), TH);
                let p = Jet1::<f64>::var(g.phi(k), PH);
                let y = ylm_dual::<f64, _>(l, m, t, p);
                assert_relative_eq!(y.v, f.values()[k], epsilon = 1e-12);
                assert_relative_eq!(y.d[TH], ft[k], epsilon = 1e-11);
                assert_relative_eq!(y.d[PH], fp[k], epsilon = 1e-11);
                let (gt, gp) = ylm_grad_dual::<f64, _>(l, m, t, p);
                assert_relative_eq!(gt.v, ft[k], epsilon = 1e-11);
                assert_relative_eq!(gp.v, fp[k], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn vector_partials_of_rotation_field() {
        let g = SphereGrid::<f64>::new(8);
        let n = g.len();
        let r: Vec<[f64; 2]> = (0..n).map(|k| rotation_field(0, g.theta(k), g.phi(k))).collect();
        let vt: Vec<f64> = r.iter().map(|x| x[0]).collect();
        let vp: Vec<f64> = r.iter().map(|x| x[1]).collect();
        let d = vector_partials(&g, &vt, &vp);
        for k in 0..n {
            let e = rotation_field_partials(0, g.theta(k), g.phi(k));
            for i in 0..2 {
                for c in 0..2 {
                    assert_relative_eq!(d[i][c][k], e[i][c], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn rotations_kill_constants_and_axial_functions() {
        let g = SphereGrid::<f64>::new(6);
        let c = SphereField::constant(&g, 3.0);
        for a in 0..3 {
            assert!(c.rotation(a).sup_norm() < 1e-13);
        }
        assert!(SphereField::ylm(&g, 1, 0, 1.0).rotation(2).sup_norm() < 1e-14);
    }

    #[test]
    fn rotation_identity_for_y21() {
        let g = SphereGrid::<f64>::new(6);
        let f = SphereField::ylm(&g, 2, 1, 1.0);
        let r: Vec<_> = (0..3).map(|a| f.rotation(a)).collect();
        let [ft, fp] = f.grad();
        for k in 0..g.len() {
            let (s, _) = g.sin_cos_theta(k);
            let lhs: f64 = r.iter().map(|x| x.values()[k].powi(2)).sum();
            let rhs = ft[k] * ft[k] + fp[k] * fp[k] / (s * s);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-3));
        }
    }

    #[test]
    fn poisson_inverts_a_combination() {
        let g = SphereGrid::<f64>::new(6);
        let rhs = SphereField::ylm(&g, 1, 0, -2.0).add(&SphereField::ylm(&g, 2, 0, -6.0));
        let u = rhs.solve_poisson().unwrap();
        assert_relative_eq!(u.coeff(1, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(u.coeff(2, 0), 1.0, epsilon = 1e-14);
        assert!(SphereField::zeros(&g).solve_poisson().unwrap().sup_norm() == 0.0);
    }

    #[test]
    fn norm_exponent_must_exceed_one() {
        assert!(NormSpec::new(2, 1.0).is_err());
        assert!(NormSpec::new(2, f64::INFINITY).is_ok());
        let g = SphereGrid::<f64>::new(4);
        assert_eq!(SphereField::zeros(&g).sobolev_norm(NormSpec::new(3, 4.0).unwrap()), 0.0);
        assert_relative_eq!(SphereField::ylm(&g, 1, 0, 1.0).sobolev_norm(NormSpec::new(0, 2.0).unwrap()), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let g = SphereGrid::<f64>::new(3);
        let f = SphereField::ylm(&g, 2, -1, 0.5);
        let js = serde_json::to_value(f.snapshot()).unwrap();
        assert_eq!(js["band_limit"], 3);
        assert_eq!(js["basis"], "real-lm-lmajor");
        assert_eq!(js["coeffs"][lm_index(2, -1)], 0.5);
        let back: FieldSnapshot = serde_json::from_value(js).unwrap();
        assert_eq!(SphereField::from_snapshot(&g, &back).unwrap().coeffs(), f.coeffs());
        let wide = SphereField::from_snapshot(&SphereGrid::<f64>::new(5), &back).unwrap();
        assert_eq!(wide.coeff(2, -1), 0.5);
        assert_eq!(wide.coeff(4, 0), 0.0);
        let narrow = SphereField::from_snapshot(&SphereGrid::<f64>::new(1), &back).unwrap();
        assert_eq!(narrow.sup_norm(), 0.0);
        let mut bad = back.clone();
        bad.coeffs.pop();
        assert!(SphereField::from_snapshot(&g, &bad).is_err());
        bad = back.clone();
        bad.basis = "complex".into();
        assert!(SphereField::from_snapshot(&g, &bad).is_err());
    }

    #[test]
    fn single_precision_grid_works() {
        let g = SphereGrid::<f32>::new(6);
        let f = SphereField::ylm(&g, 2, 0, 1.0f32);
        assert!((f.laplacian().coeff(2, 0) + 6.0).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_is_idempotent(seed in 0u64..1000) {
            let g = SphereGrid::<f64>::new(10);
            let f = random_field(&g, seed, 10);
            let sq = f.map(|x| x * x);
            let again = SphereField::from_values(&g, sq.values());
            for (a, b) in again.coeffs().iter().zip(sq.coeffs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn laplacian_is_self_adjoint(s1 in 0u64..1000, s2 in 0u64..1000) {
            let g = SphereGrid::<f64>::new(12);
            let f = random_field(&g, s1, 12);
            let h = random_field(&g, s2 + 5000, 12);
            let a: f64 = f.laplacian().values().iter().zip(h.values()).map(|(x, y)| x * y).collect::<Vec<_>>().iter().enumerate().map(|(k, v)| v * g.weight(k)).sum();
            let b: f64 = h.laplacian().values().iter().zip(f.values()).map(|(x, y)| x * y).collect::<Vec<_>>().iter().enumerate().map(|(k, v)| v * g.weight(k)).sum();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }

        #[test]
        fn laplacian_has_zero_mean_and_poisson_inverts_it(seed in 0u64..1000) {
            let g = SphereGrid::<f64>::new(10);
            let f = random_field(&g, seed, 10).without_mean();
            let lap = f.laplacian();
            prop_assert!(lap.mean().abs() <= 1e-12 * f.l2_norm());
            let back = lap.solve_poisson().unwrap();
            prop_assert!(back.sub(&f).l2_norm() <= 1e-10 * f.l2_norm());
        }

        #[test]
        fn rotation_identity_holds_pointwise(seed in 0u64..1000) {
            let g = SphereGrid::<f64>::new(9);
            let f = random_field(&g, seed, 9);
            let r: Vec<_> = (0..3).map(|a| f.rotation(a)).collect();
            let [ft, fp] = f.grad();
            for k in 0..g.len() {
                let (s, _) = g.sin_cos_theta(k);
                let lhs: f64 = r.iter().map(|x| x.values()[k].powi(2)).sum();
                let rhs = ft[k] * ft[k] + fp[k] * fp[k] / (s * s);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
            }
        }

        #[test]
        fn rotation_norm_equals_covariant_norm_at_first_order(seed in 0u64..1000) {
            let g = SphereGrid::<f64>::new(8);
            let f = random_field(&g, seed, 8);
            let a = f.sobolev_norm(NormSpec::new(1, 2.0).unwrap());
            let b = f.sobolev_norm_covariant(NormSpec::new(1, 2.0).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
