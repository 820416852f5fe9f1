//! Joint synthesis of a nominal trajectory and a controlled invariant funnel
//! (ellipsoidal invariant sets with time-varying feedback gains) for
//! discrete-time nonlinear systems with norm-bounded disturbances.

extern crate openblas_src;

pub mod cli;
pub mod conic;
pub mod error;
pub mod funnel;
pub mod funnelopt;
pub mod linalg;
pub mod lipschitz;
pub mod model;
pub mod pipeline;
pub mod support;
pub mod trajectory;
pub mod trajopt;
pub mod verify;

pub use error::{Error, Result};
pub use trajectory::Trajectory;
