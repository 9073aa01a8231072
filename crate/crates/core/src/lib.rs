pub mod cost_factors;
pub mod environment;
pub mod error;
pub mod export;
pub mod factor_graph;
pub mod global_planner;
pub mod gp_model;
pub mod pipeline;
pub mod polynomial;
pub mod replanner;
pub mod scenario;
pub mod task_assignment;

pub use error::{Error, Result, Stage};
