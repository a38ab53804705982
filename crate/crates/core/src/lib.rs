pub mod analyze;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod numkit;
pub mod svg;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
