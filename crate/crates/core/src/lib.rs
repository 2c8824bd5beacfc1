pub mod calib;
pub mod cli;
pub mod ego_velocity;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod identifiability;
pub mod pipeline;
pub mod scale;
pub mod simulator;
