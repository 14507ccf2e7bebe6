pub mod arith;
pub mod counting;
pub mod error;
pub mod expsum;
pub mod fit;
pub mod phase;

pub use error::{LabError, Result};
pub mod kernel;
pub mod quad;
pub mod levelset;
pub mod gkdv;
pub mod xsb;
