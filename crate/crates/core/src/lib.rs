//! Simulation and verification engine for delay differential equations with
//! state-dependent threshold delays.
//!
//! The system integrated here is a two-channel population model
//!
//! ```text
//! w'(t) = q(v(t)) w(t)
//! v'(t) = beta(v(t - tau)) w(t - tau) G(v_t) - mu v(t),    tau = tau(v_t)
//! ```
//!
//! where the delay `tau(v_t)` is defined implicitly as the time an auxiliary
//! maturity variable `y` needs to traverse `[x1, x2]` while evolving under
//! `y'(s) = -g(y(s), v(t-s))`. The crate provides:
//!
//! * [`expr`] — an expression language for the scalar model functions,
//! * [`history`] — piecewise cubic Hermite functions with L2/H1/sup norms,
//! * [`model`] — model definition, assumption validation, derived constants,
//! * [`maturation`] — the nested backward ODE and the threshold delay,
//! * [`rhs`] — the functional `G` and the full right-hand side `F`,
//! * [`solver`] — RK4 method of steps plus a Picard fixed-point oracle,
//! * [`verify`] — executable checks for the a priori bounds and Lipschitz
//!   estimates that underpin well-posedness of the system,
//! * [`config`] + [`cli`] — JSON-configured command-line front end.

pub mod cli;
pub mod config;
pub mod expr;
pub mod history;
pub mod maturation;
pub mod model;
pub mod rhs;
pub mod solver;
pub mod verify;

pub use expr::Expr;
pub use history::History;
pub use model::{DerivedBounds, ModelSpec};
// pub use solver::{SolveSettings, Trajectory};
pub use verify::{CheckReport, CheckStatus};
