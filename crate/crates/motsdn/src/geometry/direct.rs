//! Structure coefficients of a surface given in the first parametrization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet1, PH, S, TH};
use crate::provider::{Metric, Spacetime};
use crate::scalar::Real;
use crate::sphere::{christoffel, grad_of_values, inverse2, vector_partials, SphereField, SphereGrid};

use super::frame::{contract, frame_tilt, spacetime_christoffel, spacetime_inverse, spacetime_metric, FrameTilt};
use super::{apply, bilinear, combine, comp, pair, sym_outer, trace};

/// Structure coefficients of a surface at every node of its grid.
///
/// `L̄̃` is normalised by `L̄̃ s = 1` and `L̃′` by `g(L̄̃, L̃′) = 2`.
#[derive(Clone, Debug)]
pub struct SurfaceGeometry<T> {
    pub grid: Arc<SphereGrid<T>>,
    /// Induced metric `g̸̃_ij`.
    pub induced: Vec<[T; 3]>,
    pub chibar: Vec<[T; 3]>,
    pub chi_prime: Vec<[T; 3]>,
    pub eta: Vec<[T; 2]>,
    pub tr_chibar: SphereField<T>,
    pub tr_chi_prime: SphereField<T>,
}

impl<T: Real> SurfaceGeometry<T> {
    pub(crate) fn assemble(grid: Arc<SphereGrid<T>>, induced: Vec<[T; 3]>, chibar: Vec<[T; 3]>, chi_prime: Vec<[T; 3]>, eta: Vec<[T; 2]>) -> Result<Self> {
        let n = grid.len();
        let mut trb = Vec::with_capacity(n);
        let mut trc = Vec::with_capacity(n);
        for k in 0..n {
            let gi = inverse2::<T, T>(&induced[k]);
            trb.push(trace(&gi, &chibar[k]));
            trc.push(trace(&gi, &chi_prime[k]));
        }
        if trc.iter().chain(&trb).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("surface structure coefficients".into()));
        }
        Ok(SurfaceGeometry {
            tr_chibar: SphereField::from_values(&grid, &trb),
            tr_chi_prime: SphereField::from_values(&grid, &trc),
            grid,
            induced,
            chibar,
            chi_prime,
            eta,
        })
    }
}

/// Null normals `(L̄̃, L̃′)` of a surface with tangents `t0, t1`, obtained
/// from the null directions of its normal plane.
fn null_normals<T: Real>(ginv4: &[[T; 4]; 4], g4: &[[T; 4]; 4], df: [T; 2], dfb: [T; 2], node: usize) -> Result<([T; 4], [T; 4])> {
    let nu1 = [T::one(), T::zero(), -df[0], -df[1]];
    let nu2 = [T::zero(), T::one(), -dfb[0], -dfb[1]];
    let g11 = contract(ginv4, &nu1, &nu1);
    let g12 = contract(ginv4, &nu1, &nu2);
    let g22 = contract(ginv4, &nu2, &nu2);
    let disc = g12 * g12 - g11 * g22;
    if !(disc > T::zero()) || !(g12 > T::zero()) {
        return Err(Error::NotSpacelike { node });
    }
    let root = g12 + disc.sqrt();
    let beta = -g11 / root;
    let alpha = -g22 / root;
    let raise = |nu: [T; 4]| -> [T; 4] { std::array::from_fn(|m| (0..4).map(|n| ginv4[m][n] * nu[n]).sum()) };
    let outgoing = raise(std::array::from_fn(|m| nu1[m] + beta * nu2[m]));
    let incoming = raise(std::array::from_fn(|m| alpha * nu1[m] + nu2[m]));
    let lbar: [T; 4] = std::array::from_fn(|m| incoming[m] / incoming[0]);
    let norm = contract(g4, &lbar, &outgoing);
    let lprime: [T; 4] = std::array::from_fn(|m| outgoing[m] * T::lit(2.0) / norm);
    Ok((lbar, lprime))
}

/// Coefficients of `(s, ū) = (f(θ), f̄(θ))` from the spacetime connection:
/// `χ̃_ij = −g(L̃′, ∇_i ∂̃_j)`, `χ̄̃_ij = −g(L̄̃, ∇_i ∂̃_j)` and
/// `η̃_i = ½ g(∇_i L̄̃, L̃′)`.
pub fn exact_coeffs<T: Real>(st: &Spacetime<T>, f: &SphereField<T>, fbar: &SphereField<T>) -> Result<SurfaceGeometry<T>> {
    let grid = f.grid().clone();
    let n = grid.len();
    let df = f.grad();
    let dfb = fbar.grad();
    let hf = f.coord_hessian();
    let hfb = fbar.coord_hessian();
    let mut induced = Vec::with_capacity(n);
    let mut chibar = Vec::with_capacity(n);
    let mut chi_prime = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut lb_comp = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let m = st.metric::<Jet1<T>>(f.values()[k], fbar.values()[k], th, ph)?;
        let (om, g, b) = metric_values(&m);
        let g4 = spacetime_metric::<T, T>(om, &g, &b);
        let gi4 = spacetime_inverse::<T, T>(om, &g, &b);
        let gam = spacetime_christoffel(&m);
        let dfk = [df[0][k], df[1][k]];
        let dfbk = [dfb[0][k], dfb[1][k]];
        let tang = [[dfk[0], dfbk[0], T::one(), T::zero()], [dfk[1], dfbk[1], T::zero(), T::one()]];
        let (lbar, lprime) = null_normals(&gi4, &g4, dfk, dfbk, k)?;
        let mut gi = [T::zero(); 3];
        let mut cb = [T::zero(); 3];
        let mut cp = [T::zero(); 3];
        for (c, (i, j)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
            gi[c] = contract(&g4, &tang[i], &tang[j]);
            let mut acc: [T; 4] = [comp(&[hf[0][k], hf[1][k], hf[2][k]], i, j), comp(&[hfb[0][k], hfb[1][k], hfb[2][k]], i, j), T::zero(), T::zero()];
            for mu in 0..4 {
                for a in 0..4 {
                    for bb in 0..4 {
                        acc[mu] += gam[mu][a][bb] * tang[i][a] * tang[j][bb];
                    }
                }
            }
            cb[c] = -contract(&g4, &lbar, &acc);
            cp[c] = -contract(&g4, &lprime, &acc);
        }
        induced.push(gi);
        chibar.push(cb);
        chi_prime.push(cp);
        for c in 0..3 {
            lb_comp[c][k] = lbar[c + 1];
        }
        frames.push((lbar, lprime, gam, g4, tang));
    }
    let dlu = grad_of_values(&grid, &lb_comp[0]);
    let dla = vector_partials(&grid, &lb_comp[1], &lb_comp[2]);
    let mut eta = Vec::with_capacity(n);
    for k in 0..n {
        let (lbar, lprime, gam, g4, tang) = &frames[k];
        let mut e = [T::zero(); 2];
        for i in 0..2 {
            let mut d = [T::zero(), dlu[i][k], dla[i][0][k], dla[i][1][k]];
            for mu in 0..4 {
                for a in 0..4 {
                    for bb in 0..4 {
                        d[mu] += gam[mu][a][bb] * tang[i][a] * lbar[bb];
                    }
                }
            }
            e[i] = T::lit(0.5) * contract(g4, &d, lprime);
        }
        eta.push(e);
    }
    SurfaceGeometry::assemble(grid, induced, chibar, chi_prime, eta)
}

fn metric_values<T: Real>(m: &Metric<Jet1<T>>) -> (T, [T; 3], [T; 2]) {
    (m.omega2.v, [m.g[0].v, m.g[1].v, m.g[2].v], [m.b[0].v, m.b[1].v])
}

/// Christoffel symbols of `g̸` at a point from a metric with first partials.
pub(crate) fn sphere_christoffel<T: Real>(m: &Metric<Jet1<T>>) -> [[[T; 2]; 2]; 2] {
    let g = [m.g[0].v, m.g[1].v, m.g[2].v];
    let dg = [[m.g[0].d[TH], m.g[1].d[TH], m.g[2].d[TH]], [m.g[0].d[PH], m.g[1].d[PH], m.g[2].d[PH]]];
    christoffel::<T, T>(&g, &dg)
}

/// `∇̸_i b^k` at a point, stored `[i][k]`.
pub(crate) fn shift_derivative<T: Real>(m: &Metric<Jet1<T>>, gam: &[[[T; 2]; 2]; 2]) -> [[T; 2]; 2] {
    let b = [m.b[0].v, m.b[1].v];
    let slots = [TH, PH];
    std::array::from_fn(|i| std::array::from_fn(|k| m.b[k].d[slots[i]] + gam[k][i][0] * b[0] + gam[k][i][1] * b[1]))
}

/// Pulled back covariant Hessian `∂_i∂_j f − Γ̸^k_ij f_k`.
pub(crate) fn pulled_hessian<T: Real>(h: [T; 3], df: [T; 2], gam: &[[[T; 2]; 2]; 2]) -> [T; 3] {
    let mut out = h;
    for (c, (i, j)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
        out[c] = h[c] - gam[0][i][j] * df[0] - gam[1][i][j] * df[1];
    }
    out
}

/// Closed-form coefficients of the surface `(f, f̄)` in terms of the tilts
/// of its null frame and the structure coefficients of the foliation.
pub fn direct_coeffs_general<T: Real>(st: &Spacetime<T>, f: &SphereField<T>, fbar: &SphereField<T>) -> Result<SurfaceGeometry<T>> {
    let grid = f.grid().clone();
    let n = grid.len();
    let df = f.grad();
    let dfb = fbar.grad();
    let hf = f.coord_hessian();
    let hfb = fbar.coord_hessian();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let mut samples = Vec::with_capacity(n);
    let mut tilts: Vec<FrameTilt<T>> = Vec::with_capacity(n);
    let mut epsbar_vals = vec![T::zero(); n];
    let mut epsbar_vec = [vec![T::zero(); n], vec![T::zero(); n]];
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let smp = st.sample(f.values()[k], fbar.values()[k], th, ph)?;
        let c = &smp.coeffs;
        let tilt = frame_tilt::<T, T>(c.omega2, &c.g, &c.b, &[df[0][k], df[1][k]], &[dfb[0][k], dfb[1][k]]).ok_or(Error::NotSpacelike { node: k })?;
        epsbar_vals[k] = tilt.epsbar;
        epsbar_vec[0][k] = tilt.epsbar_vec[0];
        epsbar_vec[1][k] = tilt.epsbar_vec[1];
        samples.push(smp);
        tilts.push(tilt);
    }
    let d_epsbar = grad_of_values(&grid, &epsbar_vals);
    let d_epsbar_vec = vector_partials(&grid, &epsbar_vec[0], &epsbar_vec[1]);
    let mut induced = Vec::with_capacity(n);
    let mut chibar_out = Vec::with_capacity(n);
    let mut chi_prime_out = Vec::with_capacity(n);
    let mut eta_out = Vec::with_capacity(n);
    for k in 0..n {
        let smp = &samples[k];
        let c = &smp.coeffs;
        let t = &tilts[k];
        let om = c.omega2;
        let g = c.g;
        let b = c.b;
        let gam = sphere_christoffel(&smp.metric);
        let nb = shift_derivative(&smp.metric, &gam);
        let ds_b = [smp.metric.b[0].d[S], smp.metric.b[1].d[S]];
        let dfk = [df[0][k], df[1][k]];
        let dfbk = [dfb[0][k], dfb[1][k]];
        let hess_f = pulled_hessian([hf[0][k], hf[1][k], hf[2][k]], dfk, &gam);
        let hess_fb = pulled_hessian([hfb[0][k], hfb[1][k], hfb[2][k]], dfbk, &gam);
        let dot = |u: &[T; 2], v: &[T; 2]| bilinear(&g, u, v);
        let nabla_b_dot = |v: &[T; 2]| -> [T; 2] { std::array::from_fn(|i| dot(&nb[i], v)) };
        let nabla_bb = [b[0] * nb[0][0] + b[1] * nb[1][0], b[0] * nb[0][1] + b[1] * nb[1][1]];
        let (eps, epsb, ev, ebv) = (t.eps, t.epsbar, t.eps_vec, t.epsbar_vec);
        let eta_l = c.eta;
        let etab_l = c.etabar;
        let (chi, chib) = (c.chi, c.chibar);
        let ff = sym_outer(&dfk, &dfk);
        let fbfb = sym_outer(&dfbk, &dfbk);
        let ffb = sym_outer(&dfk, &dfbk);
        let add2 = |a: [T; 2], b_: [T; 2]| [a[0] + b_[0], a[1] + b_[1]];
        let sc2 = |s: T, a: [T; 2]| [s * a[0], s * a[1]];

        let wb_fb = add2(apply(&chi, &ebv), sc2(two * om, etab_l));
        let wb_f = [
            nabla_b_dot(&ebv)[0] - apply(&chib, &ebv)[0] - epsb * apply(&chi, &b)[0] - apply(&chib, &b)[0] - two * om * epsb * eta_l[0],
            nabla_b_dot(&ebv)[1] - apply(&chib, &ebv)[1] - epsb * apply(&chi, &b)[1] - apply(&chib, &b)[1] - two * om * epsb * eta_l[1],
        ];
        let cb_ff = two * bilinear(&chib, &b, &ebv) + bilinear(&chib, &b, &b) + epsb * bilinear(&chi, &b, &b)
            + four * om * epsb * pair(&eta_l, &b)
            - dot(&nabla_bb, &ebv)
            + dot(&ds_b, &ebv)
            - four * om * epsb * c.omegabar;
        let cb_ffb = two * om * pair(&eta_l, &ebv) + bilinear(&chi, &b, &ebv) + two * om * pair(&etab_l, &b);
        let chibar_t = combine(&[
            (T::one(), chib),
            (epsb, chi),
            (dot(&ebv, &b) - two * om * epsb, hess_f),
            (-two * om, hess_fb),
            (-two, sym_outer(&wb_fb, &dfbk)),
            (two, sym_outer(&wb_f, &dfk)),
            (cb_ff, ff),
            (two * cb_ffb, ffb),
            (-four * c.omega * om, fbfb),
        ]);

        let w_fb = add2(apply(&chi, &ev), sc2(two * om * eps, etab_l));
        let nbe = nabla_b_dot(&ev);
        let w_f: [T; 2] = std::array::from_fn(|i| nbe[i] - apply(&chib, &ev)[i] - eps * apply(&chib, &b)[i] - apply(&chi, &b)[i] - two * om * eta_l[i]);
        let c_ff = two * bilinear(&chib, &b, &ev) + bilinear(&chi, &b, &b) + eps * bilinear(&chib, &b, &b) + four * om * pair(&eta_l, &b)
            - dot(&nabla_bb, &ev)
            + dot(&ds_b, &ev)
            - four * om * c.omegabar;
        let c_ffb = two * om * pair(&eta_l, &ev) + bilinear(&chi, &b, &ev) + two * om * eps * pair(&etab_l, &b);
        let chi_t = combine(&[
            (T::one(), chi),
            (eps, chib),
            (dot(&ev, &b) - two * om, hess_f),
            (-two * om * eps, hess_fb),
            (-two, sym_outer(&w_fb, &dfbk)),
            (two, sym_outer(&w_f, &dfk)),
            (c_ff, ff),
            (two * c_ffb, ffb),
            (-four * eps * c.omega * om, fbfb),
        ]);

        let norm = two * om * (T::one() + eps * epsb) + dot(&ev, &ebv);
        let nabla_ebv: [[T; 2]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|kk| d_epsbar_vec[i][kk][k] + gam[kk][i][0] * ebv[0] + gam[kk][i][1] * ebv[1])
        });
        let nabla_ebv_b: [T; 2] = std::array::from_fn(|kk| ebv[0] * nb[0][kk] + ebv[1] * nb[1][kk]);
        let f_coef = four * om * c.omegabar - two * om * pair(&eta_l, &b) - two * om * eps * epsb * pair(&eta_l, &b) + two * om * pair(&eta_l, &ebv)
            - two * om * epsb * pair(&eta_l, &ev)
            + bilinear(&chi, &b, &ebv)
            - epsb * bilinear(&chi, &b, &ev)
            + bilinear(&chib, &ebv, &ev)
            - bilinear(&chib, &b, &ev)
            + eps * bilinear(&chib, &b, &ebv)
            - dot(&nabla_ebv_b, &ev);
        let fb_coef = -two * om * pair(&etab_l, &ev) + two * om * eps * pair(&etab_l, &ebv) + four * om * eps * epsb * c.omega + bilinear(&chi, &ebv, &ev);
        let mut eta_t = [T::zero(); 2];
        for i in 0..2 {
            let v = two * om * eta_l[i] + two * om * eps * epsb * etab_l[i] - apply(&chi, &ebv)[i] + epsb * apply(&chi, &ev)[i] + apply(&chib, &ev)[i]
                - eps * apply(&chib, &ebv)[i]
                + dfk[i] * f_coef
                + dfbk[i] * fb_coef
                + two * om * eps * d_epsbar[i][k]
                + dot(&nabla_ebv[i], &ev);
            eta_t[i] = v / norm;
        }

        let induced_k = induced_metric(&g, &b, om, dfk, dfbk);
        let om_t = t.omega2_tilde;
        chibar_out.push(chibar_t);
        chi_prime_out.push([chi_t[0] / om_t, chi_t[1] / om_t, chi_t[2] / om_t]);
        eta_out.push(eta_t);
        induced.push(induced_k);
    }
    SurfaceGeometry::assemble(grid, induced, chibar_out, chi_prime_out, eta_out)
}

/// Induced metric `g̃_ij = B_i^k B_j^l g̸_kl + 2Ω²(f_i f̄_j + f_j f̄_i)` with `B = δ − df ⊗ b`.
pub fn induced_metric<T: Real>(g: &[T; 3], b: &[T; 2], omega2: T, df: [T; 2], dfb: [T; 2]) -> [T; 3] {
    let bm = [[T::one() - df[0] * b[0], -df[0] * b[1]], [-df[1] * b[0], T::one() - df[1] * b[1]]];
    let mut out = [T::zero(); 3];
    for (c, (i, j)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
        let mut acc = T::zero();
        for k in 0..2 {
            for l in 0..2 {
                acc += bm[i][k] * bm[j][l] * comp(g, k, l);
            }
        }
        out[c] = acc + T::lit(2.0) * omega2 * (df[i] * dfb[j] + df[j] * dfb[i]);
    }
    out
}
