//! Trilevel Stackelberg solver for congestion-coupled charging markets.

pub mod assignment;
pub mod cli;
pub mod harness;
pub mod io;
pub mod model;
pub mod placement;
pub mod pricing;
