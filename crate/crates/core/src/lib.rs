//! Traffic signal control at a single intersection when only some vehicles
//! are detected.
//!
//! The crate bundles a microscopic intersection simulator ([`sim`]), a
//! reinforcement-learning environment over it ([`env`]), a small neural
//! function approximator with Kronecker-factored curvature ([`approx`]),
//! four learning controllers plus a fixed-time baseline ([`agents`]), the
//! deployment-phase adaptation loop ([`adapt`]) and the experiment harness
//! behind the `pdtsc` command-line tool ([`harness`]).

pub mod error;
pub mod harness;
pub mod adapt;
pub mod agents;
pub mod approx;
pub mod env;
pub mod sim;
