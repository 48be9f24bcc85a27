pub mod stimulus;
pub mod frontends;
pub mod interchange;
pub mod rdm;
pub mod models;
pub mod stats;
pub mod report;
pub mod config;
pub mod pipeline;
