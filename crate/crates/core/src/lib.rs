pub mod hilbert;
pub mod model;
pub mod dynamics;
pub mod metrics;
pub mod protocols;
pub mod cli;
