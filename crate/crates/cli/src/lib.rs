//! Simulation, fitting and evaluation front end for the spatial GLM-AR
//! model.

pub mod bundle;
pub mod checks;
pub mod cli;
pub mod commands;
pub mod designs;
pub mod error;
pub mod manifest;
pub mod output;
pub mod scenario;
