pub mod bench;
pub mod check;
pub mod dac;
pub mod error;
pub mod harness;
pub mod lds;
pub mod linalg;
pub mod meta;
pub mod oc;
pub mod surrogate;

pub use error::{Error, Result, StabilityViolation};
