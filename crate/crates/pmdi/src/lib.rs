//! Std companion of `pmdi-core`: run configuration files, output writers, parallel sweeps and
//! Monte Carlo runs. The `pmdi` binary is a thin layer over these.

pub mod config;
pub mod output;
pub mod run;
