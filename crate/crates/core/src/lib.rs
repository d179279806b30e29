//! Simulation of R-factor loading bias when the population combines R-factors
//! (shared by variables) with Q-factors (shared by groups of individuals), plus
//! multivariate kurtosis screening for Q-factor variance.

pub mod cli;
pub mod datagen;
pub mod demo;
pub mod error;
pub mod extract;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod mvnkurt;
pub mod report;

pub use error::{Error, Result};
