//! Stream-based monitoring for EVM networks: block header capture, an
//! embedded retention log, a small CEP operator toolkit, rollup-aware
//! normalization, and fee-market volatility metrics.

pub mod cep;
pub mod config;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod plot;
pub mod records;
pub mod runner;
pub mod simnode;
pub mod streamlog;
