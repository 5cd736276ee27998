pub mod corpus;
pub mod embed;
pub mod evaluator;
pub mod model;
pub mod trainer;
pub mod error;
pub mod util;

pub use error::{Error, Result};
