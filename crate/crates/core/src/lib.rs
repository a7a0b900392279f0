pub mod error;
pub mod config;
pub mod experiment;
pub mod flow;
pub mod geom;
pub mod interface;
pub mod io;
pub mod kernel;
pub mod mesh;
pub mod validate;
pub mod velocity;
pub mod zonal;

pub use error::{CapError, Result};
