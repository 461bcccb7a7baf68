pub mod envelope;
pub mod error;
pub mod grid;
pub mod holder;
pub mod linalg;
pub mod measure;
pub mod operator;

pub use error::{Error, Result};
