pub mod error;
pub mod harness;
pub mod imgcore;
pub mod masking;
pub mod metrics;
pub mod perturbsim;
pub mod process;
pub mod purify;
pub mod srbackend;
pub mod transforms;

pub use error::{Error, Result};
pub use imgcore::{ImageF, ImageU8};
