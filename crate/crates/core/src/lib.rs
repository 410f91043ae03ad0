//! First-order bilevel minimax optimization: problems, solvers and the
//! stability / generalization-gap measurements built on them.

pub mod analysis;
pub mod constants;
pub mod data;
pub mod error;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod solvers;
pub mod triple;

pub use constants::{ConstantsRegistry, Hoelder};
pub use data::{DatasetPair, Sample, SampleSource};
pub use error::{BimaxError, Result};
pub use problems::{AnalyticBmo, BmoProblem, QuadraticBmo, QuadraticConfig, Radii, ReweightBmo, ReweightConfig};
pub use schedule::StepSchedule;
pub use solvers::{run, run_with_init, Algorithm, HypergradientMode, Init, RunRecord, SamplingMode, SolverError, SolverSpec};
pub use triple::{triple_distance, Dims, ParamTriple};
