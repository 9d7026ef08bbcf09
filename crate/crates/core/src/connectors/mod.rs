pub mod generator;
pub mod ingest;
pub mod simulator;
pub mod templates;
