//! Dense quantum dynamics for trapped-ion entangling gates, Rabi-type light-matter
//! models, lossy atomic boson sampling and NV-center nanoscale NMR.
//!
//! The operator and integrator layers ([`hilbert`], [`dynamics`]) are generic over the
//! real scalar type through [`Real`]. Domain engines work in `f64`.

pub mod bosonsampling;
pub mod ddgates;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod nvnmr;
pub mod quad;
pub mod rabimodels;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases used by the domain engines.
pub type Operator = hilbert::Operator<f64>;
pub type StateVector = hilbert::StateVector<f64>;
pub type DensityMatrix = hilbert::DensityMatrix<f64>;
pub type TimeDependentHamiltonian = dynamics::TimeDependentHamiltonian<f64>;
pub type LindbladModel = dynamics::LindbladModel<f64>;
pub type C64 = num_complex::Complex64;

/// Single-precision aliases, useful for cheap exploratory sweeps.
pub type Operator32 = hilbert::Operator<f32>;
pub type StateVector32 = hilbert::StateVector<f32>;
pub type DensityMatrix32 = hilbert::DensityMatrix<f32>;

/// Physical constants in SI units.
pub mod consts {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const KB: f64 = 1.380_649e-23;
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
    pub const EPS0: f64 = 8.854_187_812_8e-12;
    pub const MU0: f64 = 1.256_637_062_12e-6;
    pub const AMU: f64 = 1.660_539_066_60e-27;
    pub const C_LIGHT: f64 = 299_792_458.0;
    pub const TWO_PI: f64 = std::f64::consts::TAU;
}
