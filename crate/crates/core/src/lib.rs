pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod numkit;
pub mod objectives;
pub mod oracle;
pub mod players;
pub mod trainer;

pub use error::{Error, Result};
