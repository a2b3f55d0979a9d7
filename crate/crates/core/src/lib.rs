pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod gaussian;
pub mod grid;
pub mod group;
pub mod kde;
pub mod lift;
pub mod malliavin;
pub mod rde;
pub mod young;

pub use error::{Error, Result};
