pub mod backend;
pub mod cli;
pub mod config;
pub mod data;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod store;
pub mod sweep;
pub mod synth;
