//! Moving-horizon estimation: the sliding window, its least-squares
//! problem, the block Levenberg-Marquardt solver and the event pipeline.

pub mod estimator;
pub mod output;
pub mod problem;
pub mod queue;
pub mod solver;
pub mod window;

pub use estimator::{run_events, Estimator, EstimatorStats, RunOutput};
pub use output::{estimate_output, write_estimates, OutputRow, ESTIMATE_HEADER};
pub use problem::{CostBreakdown, Problem};
pub use queue::EventQueue;
pub use solver::{solve, SolveReport, Termination};
pub use window::{SlidingWindow, WindowState};
