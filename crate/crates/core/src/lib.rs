pub mod cli;
pub mod config;
pub mod error;
pub mod expert;
pub mod gsse;
pub mod mdp;
pub mod npg;
pub mod verify;

pub use error::{Error, Result};
