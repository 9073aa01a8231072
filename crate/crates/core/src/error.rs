use std::fmt;

use crate::gp_model::Trajectory;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scenario,
    MapPreparation,
    FormationPlanning,
    TaskAssignment,
    TrajectoryOptimization,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Scenario => "scenario",
            Stage::MapPreparation => "map preparation",
            Stage::FormationPlanning => "formation planning",
            Stage::TaskAssignment => "task assignment",
            Stage::TrajectoryOptimization => "trajectory optimization",
            Stage::Export => "export",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point ({x:.4}, {y:.4}) lies outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("planning infeasible: {0}")]
    PlanningInfeasible(String),
    #[error("numeric failure: {message}")]
    NumericFailure {
        message: String,
        /// Last iterate with a finite cost, when one exists.
        last_iterate: Option<Box<Trajectory>>,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{stage}: {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::PlanningInfeasible(msg.into())
    }

    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ Error::InStage { .. } => e,
            e => Error::InStage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InStage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Scenario(_) | Error::InvalidArgument(_) | Error::OutOfBounds { .. } => 2,
            Error::PlanningInfeasible(_) => 3,
            Error::NumericFailure { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
