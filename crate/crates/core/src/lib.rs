//! Constrained System Level Synthesis toolkit.

pub mod distributed;
pub mod error;
pub mod json;
pub mod lti;
pub mod qp;
pub mod saturation;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};

pub use lti::{FirResponse, LinearSystem, SupportMask};
pub use nalgebra::{DMatrix, DVector};
pub use synthesis::{DualCertificate, RobustSpec};
