//! Row-action solvers for consistent linear systems `A x = b`.
//!
//! * [`kaczmarz`]: relaxed row projections and cyclic sweeps.
//! * [`tanabe`]: the compatibility factor `C(u)` (three constructions) and
//!   the standard-form iteration `y ← y + Aᵀ C(u)ᵀ Λ M (b − A y)`.
//! * [`solver`]: the iteration driver used by every method.
//! * [`analysis`]: the iteration operator `Q(u)`, its restricted spectrum
//!   and an invariant suite.
//! * [`problems`]: reproducible test systems, including a small
//!   parallel-beam tomography model.
//! * [`linalg`]: matrix storage, MatrixMarket I/O and desk-scale
//!   decompositions.

pub mod analysis;
pub mod error;
pub mod kaczmarz;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod tanabe;

pub use error::{Error, Result};
pub use kaczmarz::{RelaxationSchedule, ScheduleMode, ZeroRowPolicy};
pub use linalg::MatrixHandle;
pub use problems::{generate, Problem, ProblemKind, ProblemSpec};
pub use solver::{solve, IterRecord, Method, SolveConfig, SolveRun, StopRule, Termination};
pub use tanabe::{Builder, TriangularFactor, UpperFactorTu};
