pub mod geo;
pub mod messages;
pub mod wire;
pub mod aggregators;
pub mod fusion;
pub mod store;
pub mod fixtures;
pub mod metrics;
pub mod stressmap;
pub mod simgen;
pub mod config;
pub mod cli;
