//! Hadamard finite-part integrals on `(0,1]` and the explicit constructions
//! that surround them: divergence witnesses, unit-mass partitions, the
//! antiderivative-to-summation interface, and an entire-function
//! interpolation family with its growth estimates.
//!
//! Everything here is constructive. No operator is offered that integrates
//! a genuinely non-integrable input from zero: such an antiderivative cannot
//! be written down (it is not Borel measurable and cannot be uniquely
//! defined in ZFC), so every pipeline in this crate works on locally
//! integrable data over truncated domains.

pub mod analyticpf;
pub mod finitepart;
pub mod quad;
pub mod realfunc;
pub mod summation;
pub mod witness;

mod dd;
mod numeric;

pub use numeric::Tolerance;
