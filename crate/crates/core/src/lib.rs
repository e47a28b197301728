//! Coupling-averaged thermal Loschmidt echoes of XX-type spin chains and the
//! unitary matrix models they compute.

pub mod average;
pub mod chain;
pub mod error;
pub mod gww;
pub mod identities;
pub mod kernel;
pub mod linalg;
pub mod logvalue;
pub mod mp;
pub mod quadrature;
pub mod specfun;

pub use error::{Error, Result};
pub use logvalue::LogValue;
