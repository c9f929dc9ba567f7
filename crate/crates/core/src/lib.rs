pub mod error;
pub mod fields;
pub mod harness;
pub mod levelset;
pub mod mesh;
pub mod multigrid;
pub mod point;
pub mod stencil;

pub use error::{Error, Result};
