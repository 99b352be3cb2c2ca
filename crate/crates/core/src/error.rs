use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid crossbar spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("mesh needs {needed} voxels, exceeding the voxel budget of {budget}")]
    VoxelBudget { needed: usize, budget: usize },

    #[error("{what} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
        /// Relative residual sampled along the way, oldest first.
        history: Vec<f64>,
    },

    #[error("unstable time step at t = {time:.3e} s: probe overshoots the steady solution by {overshoot_pct:.1}%, retry with a smaller initial dt")]
    UnstableStep { time: f64, overshoot_pct: f64 },

    #[error("fixed point oscillates: residual grew on two consecutive iterations ({residuals:?}); retry with damping below {suggested_damping}")]
    Oscillation {
        residuals: Vec<f64>,
        suggested_damping: f64,
    },

    #[error("fixed point did not converge in {iterations} iterations; last iterates {previous:?} -> {last:?}")]
    FixedPoint {
        iterations: usize,
        previous: Vec<f64>,
        last: Vec<f64>,
    },

    #[error("thermal runaway: cell {cell} reached {temperature:.1} K, above the {cap} K cap")]
    Runaway { cell: usize, temperature: f64, cap: f64 },

    #[error("solver consistency: {0}")]
    Consistency(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
