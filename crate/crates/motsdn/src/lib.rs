//! Numerical construction of marginally outer trapped surfaces (MOTS) near
//! the Schwarzschild event horizon in double null gauge.
//!
//! The crate is organised bottom-up:
//! * [`sphere`]: spectral calculus on the unit sphere;
//! * [`background`]: the Schwarzschild double null gauge;
//! * [`provider`]: perturbed metrics and their structure coefficients;
//! * [`transport`]: transport equations for incoming null hypersurfaces;
//! * [`geometry`]: null frames and structure coefficients of surfaces;
//! * [`linearizer`]: linearisations of the transport and of the expansion;
//! * [`solver`]: the MOTS iteration, uniqueness check and the map `F`.
//!
//! Everything is generic over the scalar type through [`Real`]; the `…64`
//! aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod background;
pub mod error;
pub mod geometry;
pub mod jet;
pub mod linearizer;
pub mod provider;
pub mod scalar;
pub mod solver;
pub mod sphere;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::{Dual, Real};

/// Double precision sphere grid.
pub type SphereGrid64 = sphere::SphereGrid<f64>;
/// Double precision sphere field.
pub type SphereField64 = sphere::SphereField<f64>;
/// Double precision Schwarzschild gauge.
pub type SchwarzschildGauge64 = background::SchwarzschildGauge<f64>;
/// Double precision spacetime.
pub type Spacetime64 = provider::Spacetime<f64>;
/// Double precision surface chart.
pub type SurfaceChart64 = transport::SurfaceChart<f64>;
/// Double precision linearised state.
pub type LinearizedState64 = linearizer::LinearizedState<f64>;
/// Double precision vertical operator.
pub type VerticalOperator64 = linearizer::VerticalOperator<f64>;
/// Double precision MOTS report.
pub type MotsReport64 = solver::MotsReport<f64>;
/// Single precision sphere field.
pub type SphereField32 = sphere::SphereField<f32>;
/// Single precision spacetime.
pub type Spacetime32 = provider::Spacetime<f32>;
