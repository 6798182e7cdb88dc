//! Horizontal path lifting and parallel transport for general (nonlinear)
//! connections on chart domains, with finite-time escape detection and a
//! principal-angle diagnostic for uniform vertical boundedness.
//!
//! - [`geometry`]: chart points, tangent vectors and C¹ paths on `[0, 1]`.
//! - [`connections`]: connections stored as graphs `u ↦ (u, −Γ(p,v)·u)`,
//!   plus a gallery of named members.
//! - [`lifting`]: the lift ODE, transport, round trips, Jacobians, holonomy.
//! - [`uvb`]: principal angles against the vertical and fiber scans.
//! - [`cli`]: the `hlift` command-line front end.

pub mod cli;
pub mod connections;
pub mod geometry;
pub mod lifting;
pub mod uvb;
