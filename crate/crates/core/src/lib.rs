pub mod cli;
pub mod data_io;
pub mod dispatch;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod forecast;
pub mod lp;
pub mod mpc;

pub use error::{Error, Result};
