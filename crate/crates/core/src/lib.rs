pub mod coarse_opt;
pub mod error;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod models;
pub mod par;
pub mod shape_grad;
pub mod space_mapping;

pub use error::{Error, Result};
