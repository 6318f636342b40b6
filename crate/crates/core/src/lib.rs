pub mod diff;
pub mod dist;
pub mod error;
pub mod hcore;
pub mod io;
pub mod gauss;
pub mod limits;
pub mod mpair;
pub mod prop;
pub mod refine;

pub use error::{Error, Result};
