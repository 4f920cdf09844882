//! Reference implementations and random instances for testing `hearth-lp`.
//!
//! Everything in [`oracle`] is written with plain nested `Vec`s and scalar
//! loops, and solves linear systems with its own Gaussian elimination, so it
//! shares no numerical code path with the library it checks.

pub mod instances;
pub mod oracle;
