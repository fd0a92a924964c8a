pub mod benchmark;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod phase1;
pub mod phase2;
pub mod regression;
pub mod rng;
pub mod sim;
