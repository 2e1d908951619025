//! Modal decomposition of multi-device power systems into a common mode and
//! differential modes, with per-mode strength metrics and time responses.

pub mod device;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod modal;
pub mod output;
pub mod pencil;
pub mod powerflow;
pub mod random;
pub mod registry;
pub mod response;
pub mod run;
pub mod scenario;
pub mod two_device;

pub use error::{Error, Result};
