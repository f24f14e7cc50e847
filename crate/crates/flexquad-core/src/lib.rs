//! Simulation, estimation and control stack for a quadrotor with passively
//! compliant (spring-hinged) arms that is allowed to touch, slide along and
//! bounce off obstacles.
//!
//! The crate is organised as a pipeline:
//!
//! ```text
//!   sim        rigid body + spring arms + polygon contact world
//!   estimator  external force/torque from arm deflections and accelerometer
//!   control    P-PID tracking + admittance reshaping + collision recovery
//!   explorer   contact-driven exploration state machine
//!   mapper     contact-based block map + PLY export
//!   cob        collision-inclusive minimum-time braking plans
//!   scenario   plain-text scenario configs and built-in presets
//!   harness    the closed-loop runner, trace logging, reports
//! ```
//!
//! Everything is deterministic: all randomness is drawn from a seeded
//! ChaCha stream, and a rerun with the same scenario and seed produces
//! byte-identical traces and map files.
//!
//! Frame convention: world axes are right handed with e3 pointing down
//! (free fall accelerates along +e3, hover thrust is along the body -b3
//! axis). Exploration and mapping happen in the horizontal xy plane; an
//! altitude of `h` metres corresponds to z = -h.

pub mod cob;
pub mod control;
pub mod estimator;
pub mod explorer;
pub mod filters;
pub mod harness;
pub mod mapper;
pub mod scenario;
pub mod sim;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time step {0} outside (0, {1}] s")]
    BadTimestep(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("scenario line {line}: {msg}")]
    ScenarioParse { line: usize, msg: String },
    #[error("{0}")]
    Infeasible(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(label: &'static str, vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(label))
    }
}
