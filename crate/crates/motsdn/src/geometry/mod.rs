//! Null frames and structure coefficients of spacelike surfaces.
//!
//! Three independent evaluations are provided:
//! * [`direct::exact_coeffs`] contracts the spacetime connection with the
//!   null normals of the embedded surface;
//! * [`direct::direct_coeffs_general`] evaluates the closed formulas in
//!   terms of the first parametrization `(f, f̄)`;
//! * [`two_step::surface_coeffs`] first describes the foliation of the
//!   incoming null hypersurface and then the graph inside it, and splits
//!   every coefficient into low and high degree parts.

pub mod direct;
pub mod frame;
pub mod two_step;

pub use direct::{direct_coeffs_general, exact_coeffs, SurfaceGeometry};
pub use frame::{frame_from_first_param, frame_tilt, FrameTilt, NullFrameTilt};
pub use two_step::{expansion_t, foliation_coeffs, surface_coeffs, transported_chart, FoliationCoeffs, Split, SurfaceCoeffs};

use crate::scalar::Real;

/// Component `h_ij` of a symmetric tensor stored as `(θθ, θφ, φφ)`.
#[inline]
pub(crate) fn comp<T: Copy>(h: &[T; 3], i: usize, j: usize) -> T {
    match (i, j) {
        (0, 0) => h[0],
        (1, 1) => h[2],
        _ => h[1],
    }
}

/// `h(v)_i = h_ij v^j`.
#[inline]
pub(crate) fn apply<T: Real>(h: &[T; 3], v: &[T; 2]) -> [T; 2] {
    [h[0] * v[0] + h[1] * v[1], h[1] * v[0] + h[2] * v[1]]
}

/// `h(u, v) = h_ij u^i v^j`.
#[inline]
pub(crate) fn bilinear<T: Real>(h: &[T; 3], u: &[T; 2], v: &[T; 2]) -> T {
    h[0] * u[0] * v[0] + h[1] * (u[0] * v[1] + u[1] * v[0]) + h[2] * u[1] * v[1]
}

/// `w(v) = w_i v^i`.
#[inline]
pub(crate) fn pair<T: Real>(w: &[T; 2], v: &[T; 2]) -> T {
    w[0] * v[0] + w[1] * v[1]
}

/// `sym{a ⊗ b}_ij = ½(a_i b_j + a_j b_i)`.
#[inline]
pub(crate) fn sym_outer<T: Real>(a: &[T; 2], b: &[T; 2]) -> [T; 3] {
    let half = T::lit(0.5);
    [a[0] * b[0], half * (a[0] * b[1] + a[1] * b[0]), a[1] * b[1]]
}

/// `Σ c_n h_n` for symmetric tensors.
#[inline]
pub(crate) fn combine<T: Real>(terms: &[(T, [T; 3])]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for (c, h) in terms {
        for k in 0..3 {
            out[k] += *c * h[k];
        }
    }
    out
}

/// Trace `g^{ij} h_ij`.
#[inline]
pub(crate) fn trace<T: Real>(ginv: &[T; 3], h: &[T; 3]) -> T {
    ginv[0] * h[0] + T::lit(2.0) * ginv[1] * h[1] + ginv[2] * h[2]
}

#[cfg(test)]
pub(crate) mod testing {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::background::SchwarzschildGauge;
    use crate::provider::{PerturbationRecipe, ScalarTerm, ShiftKind, ShiftTerm, Spacetime, WindowKind};
    use crate::sphere::{SphereField, SphereGrid};
    use std::sync::Arc;

    pub fn gauge() -> SchwarzschildGauge<f64> {
        SchwarzschildGauge::new(1.0, 0.25, 0.5).unwrap()
    }

    pub fn schwarzschild() -> Spacetime<f64> {
        Spacetime::schwarzschild(gauge())
    }

    /// A strongly deformed spacetime with every metric channel switched on,
    /// including `∂_s b`, so that each term of the coefficient formulas is
    /// exercised at a visible size.
    pub fn rich() -> Spacetime<f64> {
        let scalar = |l, m, amplitude, window| ScalarTerm { l, m, amplitude, window, width: 1.0 };
        let recipe = PerturbationRecipe {
            epsilon: 0.05,
            log_omega: vec![scalar(1, 1, 1.0, WindowKind::Gaussian), scalar(2, 0, 1.0, WindowKind::S)],
            conformal: vec![scalar(2, 1, 1.0, WindowKind::S), scalar(0, 0, 0.5, WindowKind::U2)],
            shift: vec![
                ShiftTerm { l: 1, m: 0, amplitude: 1.0, kind: ShiftKind::Curl, window: WindowKind::Su, width: 1.0 },
                ShiftTerm { l: 2, m: 1, amplitude: 1.0, kind: ShiftKind::Gradient, window: WindowKind::U, width: 1.0 },
            ],
            eta: Vec::new(),
            etabar: Vec::new(),
        };
        Spacetime::perturbed(gauge(), recipe).unwrap()
    }

    pub fn default_perturbed(eps: f64) -> Spacetime<f64> {
        Spacetime::perturbed(gauge(), PerturbationRecipe::default().with_epsilon(eps)).unwrap()
    }

    /// `c + Σ a_lm Y_lm` over `1 ≤ l ≤ l_top` with `|a_lm| ≤ amp`.
    pub fn random_field(grid: &Arc<SphereGrid<f64>>, rng: &mut ChaCha8Rng, c: f64, amp: f64, l_top: usize) -> SphereField<f64> {
        let mut f = SphereField::constant(grid, c);
        for l in 1..=l_top {
            for m in -(l as i64)..=(l as i64) {
                f = f.add(&SphereField::ylm(grid, l, m, amp * rng.gen_range(-1.0..1.0)));
            }
        }
        f
    }

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
}
