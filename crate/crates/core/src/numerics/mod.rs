//! Numerical building blocks shared by the kernel, geometry and diffusion modules.

pub mod accel;
pub mod bessel;
pub mod fit;
pub mod quad;
pub mod roots;
pub mod special;
pub mod spline;

pub use quad::{QuadResult, Quadrature};
pub use roots::{brent, Root, RootError};
