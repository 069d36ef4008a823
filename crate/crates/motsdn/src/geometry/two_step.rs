//! Structure coefficients of a surface given in the second parametrization.
//!
//! The surface `Σ̃̃` lies on the incoming null hypersurface `C̄̃` generated by
//! `Σ̃₀ = {(0, f̄₀)}`. Its coefficients are computed in two steps: first the
//! coefficients of the foliation `Σ̃_s = C̄̃ ∩ C_s` at the points of `Σ̃̃`,
//! then those of the graph `s = f̃̃(θ)` inside `C̄̃`. Every coefficient is
//! split into a low degree part and a high degree remainder.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{Jet1, PH, S, TH, U};
use crate::provider::{PointSample, Spacetime};
use crate::scalar::Real;
use crate::sphere::{inverse2, SphereField, SphereGrid};
use crate::transport::{restricted_gradients, SurfaceChart, TransportConfig};

use super::direct::{pulled_hessian, sphere_christoffel, SurfaceGeometry};
use super::{apply, bilinear, combine, comp, pair, sym_outer, trace};

/// Coefficient of `Ω² χ(∇̸f̄, ∇̸f̄)` in the acceleration of the foliation.
pub const ACCELERATION_CHI_WEIGHT: f64 = 1.0;

/// Low degree part and high degree remainder of a coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct Split<V> {
    pub lole: V,
    pub hile: V,
}

/// Coefficients of the foliation `Σ̃_s` of `C̄̃` at the nodes of `Σ̃̃`.
#[derive(Clone, Debug)]
pub struct FoliationCoeffs<T> {
    pub grid: Arc<SphereGrid<T>>,
    /// Shift `t̃b = b − 2Ω² g̸⁻¹ d f̄^s` of the generator of `C̄̃`.
    pub tb: Vec<[T; 2]>,
    pub chibar: Split<Vec<[T; 3]>>,
    pub tr_chibar: Vec<T>,
    pub eta: Vec<[T; 2]>,
    pub omegabar: Split<Vec<T>>,
    pub(crate) nodes: Vec<FoliationNode<T>>,
}

/// Per-node data reused by the graph step.
#[derive(Clone, Debug)]
pub(crate) struct FoliationNode<T> {
    pub sample: PointSample<T>,
    pub p: [T; 2],
    pub hess_fbar: [T; 3],
    pub gamma: [[[T; 2]; 2]; 2],
    pub delta: [[[T; 2]; 2]; 2],
    /// `∇̃_j t̃b^i` stored `[j][i]`.
    pub nabla_tb: [[T; 2]; 2],
    pub ds_tb: [T; 2],
}

impl<T: Real> FoliationCoeffs<T> {
    /// `^s χ̄̃` at every node.
    pub fn chibar_full(&self) -> Vec<[T; 3]> {
        self.chibar.lole.iter().zip(&self.chibar.hile).map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]).collect()
    }

    /// `^s ω̄̃` at every node.
    pub fn omegabar_full(&self) -> Vec<T> {
        self.omegabar.lole.iter().zip(&self.omegabar.hile).map(|(a, b)| *a + *b).collect()
    }
}

/// Coefficients of `Σ̃̃` with their low/high degree split.
#[derive(Clone, Debug)]
pub struct SurfaceCoeffs<T> {
    pub geometry: SurfaceGeometry<T>,
    pub chibar: Split<Vec<[T; 3]>>,
    pub chi_prime: Split<Vec<[T; 3]>>,
    pub eta: Split<Vec<[T; 2]>>,
    pub tr_chibar: Split<SphereField<T>>,
    pub tr_chi_prime: Split<SphereField<T>>,
    pub foliation: FoliationCoeffs<T>,
}

impl<T: Real> SurfaceCoeffs<T> {
    pub fn tr_chi_prime(&self) -> &SphereField<T> {
        &self.geometry.tr_chi_prime
    }

    pub fn tr_chibar(&self) -> &SphereField<T> {
        &self.geometry.tr_chibar
    }

    /// Largest relative mismatch of `lole + hile` against the full
    /// coefficient over all split quantities.
    pub fn split_defect(&self) -> T {
        let g = &self.geometry;
        let mut worst = T::zero();
        let mut check = |full: T, lo: T, hi: T| {
            let scale = T::one().max(full.abs()).max(lo.abs()).max(hi.abs());
            worst = worst.max((lo + hi - full).abs() / scale);
        };
        for k in 0..g.grid.len() {
            for c in 0..3 {
                check(g.chibar[k][c], self.chibar.lole[k][c], self.chibar.hile[k][c]);
                check(g.chi_prime[k][c], self.chi_prime.lole[k][c], self.chi_prime.hile[k][c]);
            }
            for c in 0..2 {
                check(g.eta[k][c], self.eta.lole[k][c], self.eta.hile[k][c]);
            }
            check(g.tr_chibar.values()[k], self.tr_chibar.lole.values()[k], self.tr_chibar.hile.values()[k]);
            check(g.tr_chi_prime.values()[k], self.tr_chi_prime.lole.values()[k], self.tr_chi_prime.hile.values()[k]);
        }
        worst
    }
}

fn mat<T: Real>(h: &[T; 3]) -> [[T; 2]; 2] {
    [[h[0], h[1]], [h[1], h[2]]]
}

fn matmul<T: Real>(a: &[[T; 2]; 2], b: &[[T; 2]; 2]) -> [[T; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

fn jet_values<T: Real>(x: &[Jet1<T>; 3], slot: Option<usize>) -> [T; 3] {
    match slot {
        None => [x[0].v, x[1].v, x[2].v],
        Some(s) => [x[0].d[s], x[1].d[s], x[2].d[s]],
    }
}

/// Coefficients of the foliation of `C̄̃` at the points of `Σ̃̃`.
pub fn foliation_coeffs<T: Real>(st: &Spacetime<T>, chart: &SurfaceChart<T>) -> Result<FoliationCoeffs<T>> {
    let rg = chart
        .restricted
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("chart has no restricted gradients".into()))?;
    let grid = chart.grid().clone();
    let n = grid.len();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let weight = T::lit(ACCELERATION_CHI_WEIGHT);
    let mut out = FoliationCoeffs {
        grid: grid.clone(),
        tb: Vec::with_capacity(n),
        chibar: Split { lole: Vec::with_capacity(n), hile: Vec::with_capacity(n) },
        tr_chibar: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
        omegabar: Split { lole: Vec::with_capacity(n), hile: Vec::with_capacity(n) },
        nodes: Vec::with_capacity(n),
    };
    for (k, (th, ph)) in grid.nodes().enumerate() {
        let s = chart.ftt.values()[k];
        let u = rg.fbar.values()[k];
        let sample = st.sample(s, u, th, ph)?;
        let m = &sample.metric;
        let c = &sample.coeffs;
        let om = c.omega2;
        let p = rg.p[k];
        let w = rg.dp_ds[k];
        let phi = rg.ds[k];
        let gamma = sphere_christoffel(m);
        let hess = pulled_hessian(rg.hessian[k], p, &gamma);
        let pv = apply(&c.ginv, &p);
        let p2 = pair(&p, &pv);

        let ginv_j = inverse2::<T, Jet1<T>>(&m.g);
        let h_j: [Jet1<T>; 3] = std::array::from_fn(|i| ginv_j[i] * m.omega2);
        let h = jet_values(&h_j, None);
        let hp = apply(&h, &p);
        let tb = [c.b[0] - two * hp[0], c.b[1] - two * hp[1]];

        let lole = combine(&[(T::one(), c.chibar), (-two * om, hess)]);
        let hile = combine(&[
            (-om * p2, c.chi),
            (-four * om, sym_outer(&c.etabar, &p)),
            (-four * c.omega * om, sym_outer(&p, &p)),
            (four * om, sym_outer(&p, &apply(&c.chi, &pv))),
        ]);
        let full = combine(&[(T::one(), lole), (T::one(), hile)]);
        let chi_pv = apply(&c.chi, &pv);
        let eta = [c.eta[0] + chi_pv[0], c.eta[1] + chi_pv[1]];
        let om_hile = -two * om * pair(&c.eta, &pv) - weight * om * bilinear(&c.chi, &pv, &pv);

        let mut delta = [[[T::zero(); 2]; 2]; 2];
        for kk in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = T::zero();
                    for l in 0..2 {
                        acc += comp(&c.ginv, kk, l) * (p[i] * comp(&c.chi, j, l) + p[j] * comp(&c.chi, i, l) - p[l] * comp(&c.chi, i, j));
                    }
                    delta[kk][i][j] = acc;
                }
            }
        }
        let gt: [[[T; 2]; 2]; 2] = std::array::from_fn(|a| std::array::from_fn(|i| std::array::from_fn(|j| gamma[a][i][j] + delta[a][i][j])));

        let db = |slot: usize| [m.b[0].d[slot], m.b[1].d[slot]];
        let dh = |slot: usize| jet_values(&h_j, Some(slot));
        let (db_u, dh_u) = (db(U), dh(U));
        let hess_c = rg.hessian[k];
        let mut dtb = [[T::zero(); 2]; 2];
        for (j, slot) in [TH, PH].into_iter().enumerate() {
            let dbj = db(slot);
            let dhj = dh(slot);
            let dh_tot: [T; 3] = std::array::from_fn(|c| dhj[c] + p[j] * dh_u[c]);
            let dhp = apply(&dh_tot, &p);
            let hj = [comp(&hess_c, j, 0), comp(&hess_c, j, 1)];
            let hh = apply(&h, &hj);
            for i in 0..2 {
                dtb[j][i] = dbj[i] + p[j] * db_u[i] - two * dhp[i] - two * hh[i];
            }
        }
        let nabla_tb: [[T; 2]; 2] = std::array::from_fn(|j| std::array::from_fn(|i| dtb[j][i] + gt[i][j][0] * tb[0] + gt[i][j][1] * tb[1]));
        let (db_s, dh_s) = (db(S), dh(S));
        let dh_tot: [T; 3] = std::array::from_fn(|c| dh_s[c] + phi * dh_u[c]);
        let dhp = apply(&dh_tot, &p);
        let hw = apply(&h, &w);
        let ds_tb = [
            db_s[0] + phi * db_u[0] - two * dhp[0] - two * hw[0],
            db_s[1] + phi * db_u[1] - two * dhp[1] - two * hw[1],
        ];

        out.tr_chibar.push(trace(&c.ginv, &full));
        out.tb.push(tb);
        out.chibar.lole.push(lole);
        out.chibar.hile.push(hile);
        out.eta.push(eta);
        out.omegabar.lole.push(c.omegabar);
        out.omegabar.hile.push(om_hile);
        out.nodes.push(FoliationNode { sample, p, hess_fbar: hess, gamma, delta, nabla_tb, ds_tb });
    }
    if out.tr_chibar.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("foliation coefficients".into()));
    }
    Ok(out)
}

/// Coefficients of `Σ̃̃` inside `C̄̃`, with the low/high degree split.
pub fn surface_coeffs<T: Real>(st: &Spacetime<T>, chart: &SurfaceChart<T>) -> Result<SurfaceCoeffs<T>> {
    let fol = foliation_coeffs(st, chart)?;
    let grid = chart.grid().clone();
    let n = grid.len();
    let f = &chart.ftt;
    let df = f.grad();
    let hf = f.coord_hessian();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let half = T::lit(0.5);
    let mut induced = Vec::with_capacity(n);
    let mut chibar = Split { lole: Vec::with_capacity(n), hile: Vec::with_capacity(n) };
    let mut chibar_full = Vec::with_capacity(n);
    let mut chi_prime = Split { lole: Vec::with_capacity(n), hile: Vec::with_capacity(n) };
    let mut chi_prime_full = Vec::with_capacity(n);
    let mut eta = Split { lole: Vec::with_capacity(n), hile: Vec::with_capacity(n) };
    let mut eta_full = Vec::with_capacity(n);
    let mut tr_b = [vec![T::zero(); n], vec![T::zero(); n]];
    let mut tr_c = [vec![T::zero(); n], vec![T::zero(); n]];
    let chibar_s = fol.chibar_full();
    let omegabar_s = fol.omegabar_full();
    for k in 0..n {
        let node = &fol.nodes[k];
        let c = &node.sample.coeffs;
        let om = c.omega2;
        let g = c.g;
        let tb = fol.tb[k];
        let cbs = chibar_s[k];
        let etas = fol.eta[k];
        let oms = omegabar_s[k];
        let dfk = [df[0][k], df[1][k]];
        let hfk = [hf[0][k], hf[1][k], hf[2][k]];
        let hess_plain = pulled_hessian(hfk, dfk, &node.gamma);
        let delta_f: [T; 3] = std::array::from_fn(|cc| {
            let (i, j) = [(0usize, 0usize), (0, 1), (1, 1)][cc];
            node.delta[0][i][j] * dfk[0] + node.delta[1][i][j] * dfk[1]
        });
        let hess_t = combine(&[(T::one(), hess_plain), (-T::one(), delta_f)]);
        let den = T::one() - pair(&dfk, &tb);
        if !(den > T::zero()) {
            return Err(Error::NotSpacelike { node: k });
        }
        let gdf = apply(&c.ginv, &dfk);
        let epsp = -pair(&dfk, &gdf) / (den * den);
        let ev = [-two * gdf[0] / den, -two * gdf[1] / den];
        let chip = [c.chi[0] / om, c.chi[1] / om, c.chi[2] / om];
        let dot = |a: &[T; 2], b: &[T; 2]| bilinear(&g, a, b);
        let nabla_tb = node.nabla_tb;
        let ntb_tb = [tb[0] * nabla_tb[0][0] + tb[1] * nabla_tb[1][0], tb[0] * nabla_tb[0][1] + tb[1] * nabla_tb[1][1]];
        let cbs_tb = apply(&cbs, &tb);
        let cbs_ev = apply(&cbs, &ev);
        let chip_tb = apply(&chip, &tb);
        let wv: [T; 2] = std::array::from_fn(|i| dot(&nabla_tb[i], &ev) - cbs_ev[i] - epsp * cbs_tb[i] - chip_tb[i] - two * etas[i]);
        let cff = two * bilinear(&cbs, &tb, &ev) + epsp * bilinear(&cbs, &tb, &tb) + bilinear(&chip, &tb, &tb) + four * pair(&etas, &tb)
            - dot(&ntb_tb, &ev)
            + dot(&node.ds_tb, &ev)
            - four * oms;
        let ff = sym_outer(&dfk, &dfk);
        let tail = combine(&[(two, sym_outer(&dfk, &wv)), (cff, ff)]);
        let cp_full = combine(&[(T::one(), chip), (epsp, cbs), (dot(&ev, &tb) - two, hess_t), (T::one(), tail)]);
        let cp_lole = combine(&[(T::one(), chip), (-two, hess_plain)]);
        let cp_hile = combine(&[(epsp, cbs), (dot(&ev, &tb), hess_t), (two, delta_f), (T::one(), tail)]);

        let cb_extra = combine(&[(-two, sym_outer(&cbs_tb, &dfk)), (bilinear(&cbs, &tb, &tb), ff)]);
        let cb_full = combine(&[(T::one(), cbs), (T::one(), cb_extra)]);
        let cb_lole = fol.chibar.lole[k];
        let cb_hile = combine(&[(T::one(), fol.chibar.hile[k]), (T::one(), cb_extra)]);

        let fcoef = two * oms - pair(&tb, &etas) - half * bilinear(&cbs, &tb, &ev);
        let eta_f: [T; 2] = std::array::from_fn(|i| etas[i] + half * cbs_ev[i] + dfk[i] * fcoef);
        let bg_ev = apply(&c.chibar, &ev);
        let eta_lo: [T; 2] = std::array::from_fn(|i| etas[i] + half * bg_ev[i]);
        let p = node.p;
        let pv = apply(&c.ginv, &p);
        let hi_s = combine(&[
            (-om * pair(&p, &pv), c.chi),
            (-four * c.omega * om, sym_outer(&p, &p)),
            (four * om, sym_outer(&p, &apply(&c.chi, &pv))),
        ]);
        let bracket = combine(&[(-two * om, node.hess_fbar), (-four * om, sym_outer(&c.etabar, &p)), (T::one(), hi_s)]);
        let br_ev = apply(&bracket, &ev);
        let eta_hi: [T; 2] = std::array::from_fn(|i| half * br_ev[i] + dfk[i] * fcoef);

        let gtb = apply(&g, &tb);
        let hi_g = combine(&[(-two, sym_outer(&gtb, &dfk)), (dot(&tb, &tb), ff)]);
        let gtt = combine(&[(T::one(), g), (T::one(), hi_g)]);
        let gtt_inv = inverse2::<T, T>(&gtt);
        let hm = matmul(&matmul(&mat(&c.ginv), &mat(&hi_g)), &mat(&gtt_inv));
        let hi_inv = [-hm[0][0], -half * (hm[0][1] + hm[1][0]), -hm[1][1]];

        tr_b[0][k] = trace(&c.ginv, &cb_lole);
        tr_b[1][k] = trace(&hi_inv, &cb_lole) + trace(&gtt_inv, &cb_hile);
        tr_c[0][k] = trace(&c.ginv, &cp_lole);
        tr_c[1][k] = trace(&hi_inv, &cp_lole) + trace(&gtt_inv, &cp_hile);
        induced.push(gtt);
        chibar.lole.push(cb_lole);
        chibar.hile.push(cb_hile);
        chibar_full.push(cb_full);
        chi_prime.lole.push(cp_lole);
        chi_prime.hile.push(cp_hile);
        chi_prime_full.push(cp_full);
        eta.lole.push(eta_lo);
        eta.hile.push(eta_hi);
        eta_full.push(eta_f);
    }
    let geometry = SurfaceGeometry::assemble(grid.clone(), induced, chibar_full, chi_prime_full, eta_full)?;
    Ok(SurfaceCoeffs {
        geometry,
        chibar,
        chi_prime,
        eta,
        tr_chibar: Split { lole: SphereField::from_values(&grid, &tr_b[0]), hile: SphereField::from_values(&grid, &tr_b[1]) },
        tr_chi_prime: Split { lole: SphereField::from_values(&grid, &tr_c[0]), hile: SphereField::from_values(&grid, &tr_c[1]) },
        foliation: fol,
    })
}

/// Chart of `(f̄₀, f̃̃)` with the restricted gradients transported.
pub fn transported_chart<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, ftt: &SphereField<T>, cfg: &TransportConfig) -> Result<SurfaceChart<T>> {
    let mut chart = SurfaceChart::new(f0.clone(), ftt.clone())?;
    let rg = restricted_gradients(st, f0, ftt, cfg)?;
    chart.fbar_tt = Some(rg.fbar.clone());
    chart.restricted = Some(rg);
    Ok(chart)
}

/// The map `T(f̄₀, f̃̃) = tr χ̃̃′`.
pub fn expansion_t<T: Real>(st: &Spacetime<T>, f0: &SphereField<T>, ftt: &SphereField<T>, cfg: &TransportConfig) -> Result<SphereField<T>> {
    let chart = transported_chart(st, f0, ftt, cfg)?;
    Ok(surface_coeffs(st, &chart)?.geometry.tr_chi_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::direct::{direct_coeffs_general, exact_coeffs};
    use crate::geometry::frame::spacetime_christoffel;
    use crate::geometry::testing::{default_perturbed, random_field, rich, rng, schwarzschild};

    fn cfg() -> TransportConfig {
        TransportConfig::default()
    }

    #[test]
    fn horizon_section_graphs_are_marginally_trapped() {
        let grid = SphereGrid::<f64>::new(10);
        let st = schwarzschild();
        let mut r = rng(31);
        let zero = SphereField::zeros(&grid);
        for _ in 0..3 {
            let f0 = random_field(&grid, &mut r, 0.1, 0.02, 4);
            let t = expansion_t(&st, &f0, &zero, &cfg()).unwrap();
            assert!(t.sup_norm() < 1e-12, "{}", t.sup_norm());
        }
    }

    #[test]
    fn constant_graph_has_background_expansion() {
        let grid = SphereGrid::<f64>::new(8);
        let st = schwarzschild();
        let s0 = 0.12;
        let t = expansion_t(&st, &SphereField::zeros(&grid), &SphereField::constant(&grid, s0), &cfg()).unwrap();
        let r = st.gauge().area_radius(s0, 0.0).unwrap();
        let expected = 2.0 * s0 / (r * (s0 + 2.0));
        for v in t.values() {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn two_step_matches_general_and_exact_paths() {
        let grid = SphereGrid::<f64>::new(16);
        let mut r = rng(32);
        for st in [schwarzschild(), default_perturbed(1e-3), rich()] {
            for _ in 0..3 {
                let f0 = random_field(&grid, &mut r, 0.2, 0.01, 4);
                let ftt = random_field(&grid, &mut r, 0.05, 0.01, 4);
                let chart = transported_chart(&st, &f0, &ftt, &cfg()).unwrap();
                let sc = surface_coeffs(&st, &chart).unwrap();
                let fbar = chart.fbar_tt.as_ref().unwrap();
                let direct = direct_coeffs_general(&st, &ftt, fbar).unwrap();
                let exact = exact_coeffs(&st, &ftt, fbar).unwrap();
                for other in [&direct, &exact] {
                    assert!(sc.tr_chi_prime().sub(&other.tr_chi_prime).sup_norm() < 1e-7);
                    assert!(sc.tr_chibar().sub(&other.tr_chibar).sup_norm() < 1e-6);
                    for k in 0..grid.len() {
                        for i in 0..2 {
                            assert!((sc.geometry.eta[k][i] - other.eta[k][i]).abs() < 1e-7);
                        }
                        for i in 0..3 {
                            assert!((sc.geometry.induced[k][i] - other.induced[k][i]).abs() < 1e-8);
                        }
                    }
                }
                assert!(sc.split_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn foliation_of_a_coordinate_cone_is_trivial() {
        let grid = SphereGrid::<f64>::new(8);
        let st = schwarzschild();
        let f0 = SphereField::constant(&grid, 0.15);
        let ftt = SphereField::constant(&grid, 0.05).add(&SphereField::ylm(&grid, 2, 0, 0.01));
        let chart = transported_chart(&st, &f0, &ftt, &cfg()).unwrap();
        let fol = foliation_coeffs(&st, &chart).unwrap();
        for (k, tb) in fol.tb.iter().enumerate() {
            let p = st.gauge().point(ftt.values()[k], 0.15).unwrap();
            assert!((fol.tr_chibar[k] - p.tr_chibar).abs() < 1e-13);
            assert!(tb[0].abs() < 1e-15 && tb[1].abs() < 1e-15);
            assert!(fol.eta[k][0].abs() < 1e-15 && fol.eta[k][1].abs() < 1e-15);
        }
    }

    #[test]
    fn foliation_requires_restricted_gradients() {
        let grid = SphereGrid::<f64>::new(4);
        let chart = SurfaceChart::new(SphereField::zeros(&grid), SphereField::zeros(&grid)).unwrap();
        assert!(matches!(foliation_coeffs(&schwarzschild(), &chart), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn foliation_acceleration_matches_connection() {
        let grid = SphereGrid::<f64>::new(10);
        let st = rich();
        let mut r = rng(33);
        let f0 = random_field(&grid, &mut r, 0.2, 0.02, 3);
        let ftt = random_field(&grid, &mut r, 0.05, 0.01, 3);
        let chart = transported_chart(&st, &f0, &ftt, &cfg()).unwrap();
        let fol = foliation_coeffs(&st, &chart).unwrap();
        let om = fol.omegabar_full();
        for (k, node) in fol.nodes.iter().enumerate() {
            let c = &node.sample.coeffs;
            let pv = apply(&c.ginv, &node.p);
            let lbar = [1.0, -c.omega2 * pair(&node.p, &pv), fol.tb[k][0], fol.tb[k][1]];
            let gam = spacetime_christoffel(&node.sample.metric);
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    acc += gam[0][a][b] * lbar[a] * lbar[b];
                }
            }
            assert!((0.5 * acc - om[k]).abs() < 1e-12, "{} vs {}", 0.5 * acc, om[k]);
        }
    }

    #[test]
    fn high_degree_terms_are_quadratic() {
        let grid = SphereGrid::<f64>::new(10);
        let st = schwarzschild();
        let mut r = rng(34);
        let b0 = random_field(&grid, &mut r, 0.0, 0.02, 4);
        let b1 = random_field(&grid, &mut r, 0.0, 0.02, 4);
        let mut hi = Vec::new();
        let mut lo = Vec::new();
        for lambda in [1.0, 0.5, 0.25] {
            let chart = transported_chart(&st, &b0.scale(lambda), &b1.scale(lambda), &cfg()).unwrap();
            let sc = surface_coeffs(&st, &chart).unwrap();
            let background: Vec<f64> = (0..grid.len())
                .map(|k| sc.foliation.nodes[k].sample.coeffs.tr_chi / sc.foliation.nodes[k].sample.coeffs.omega2)
                .collect();
            let bg = SphereField::from_values(&grid, &background);
            hi.push(sc.tr_chi_prime.hile.l2_norm());
            lo.push(sc.tr_chi_prime.lole.sub(&bg).l2_norm());
        }
        for w in hi.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.8, "{ratio}");
        }
        for w in lo.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
        }
    }

    #[test]
    fn vertical_derivative_at_the_horizon_section_is_diagonal() {
        let grid = SphereGrid::<f64>::new(12);
        let st = schwarzschild();
        let zero = SphereField::zeros(&grid);
        let r0 = 2.0;
        for (l, m) in [(0usize, 0i64), (1, 1), (2, 0), (4, -3), (6, 2)] {
            let y = SphereField::ylm(&grid, l, m, 1.0);
            let diff = |h: f64| {
                let plus = expansion_t(&st, &zero, &y.scale(h), &cfg()).unwrap();
                let minus = expansion_t(&st, &zero, &y.scale(-h), &cfg()).unwrap();
                plus.sub(&minus).scale(0.5 / h)
            };
            let (d1, d2) = (diff(1e-3), diff(5e-4));
            let rich = d2.scale(4.0 / 3.0).sub(&d1.scale(1.0 / 3.0));
            let expected = 2.0 / (r0 * r0) * (1.0 + (l * (l + 1)) as f64);
            let got = rich.coeff(l, m);
            assert!(((got - expected) / expected).abs() < 1e-6, "l={l}: {got} vs {expected}");
            let off = rich.sub(&y.scale(got)).sup_norm();
            assert!(off < 1e-6 * expected, "{off}");
        }
    }
}
