//! Size estimates for integrals of absolute rational powers of complex
//! polynomials, together with the numerical oracles used to check them.

pub mod arp;
pub mod estimator;
pub mod extreal;
pub mod germ;
pub mod oracle;
pub mod polynomial;
pub mod quad;
pub mod scales;
pub mod stability;
pub mod suite;

pub use estimator::{EstimateError, EstimateOptions, ExponentPair, SizeEstimate};
pub use polynomial::{ComplexPoly, Root, RootSet, C64};
