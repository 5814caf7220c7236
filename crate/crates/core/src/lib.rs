//! Grid-connected microgrid battery dispatch.
//!
//! The crate bundles an hourly microgrid environment with a security layer,
//! rule-based and trivial baseline controllers, a small reverse-mode
//! differentiation engine, soft actor-critic trained from rule-based
//! demonstrations, a cross-entropy-method baseline and a dynamic-programming
//! dispatch oracle. The [`experiment`] module ties them together behind the
//! `sacfd` command line tool.

pub mod cem;
pub mod env;
pub mod error;
pub mod experiment;
pub mod ndiff;
pub mod oracle;
pub mod policies;
pub mod replay;
pub mod sac;
pub mod scenario;

pub use error::{Error, Result};
