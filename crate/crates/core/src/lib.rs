//! Planning and closed-loop shape control for placing a deformable
//! linear object (DLO) on a flat surface.
//!
//! The toolkit has three layers:
//!
//! * closed-form Euler elastica equilibrium shapes ([`elliptic`],
//!   [`elastica`]) with built-in verification of their variational
//!   structure (first-integral constancy, Euler-Bernoulli bending law);
//! * surface-contact placement: composite stage shapes, friction-cone,
//!   penetration and self-intersection predicates ([`placement`]) and a
//!   three-stage placement planner ([`planner`]);
//! * a deterministic shape-characterization module ([`characterize`])
//!   and a frame-synchronous feedback controller simulator
//!   ([`controller`]).
//!
//! File formats, configuration and the `dloplace` CLI live in [`io`],
//! [`config`] and [`render`].

pub mod config;
pub mod characterize;
pub mod controller;
pub mod elastica;
pub mod elliptic;
pub mod error;
pub mod io;
pub mod placement;
pub mod planner;
pub mod render;

pub use error::{Error, Result};
