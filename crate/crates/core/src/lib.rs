//! Supplier pricing against learning newsvendor retailers.
//!
//! The supplier posts a wholesale price each round, the retailer answers with
//! an order computed from a perceived demand distribution, and regret is
//! measured against a clairvoyant who knows that distribution.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod market;
pub mod retailer;
pub mod sim;
pub mod supplier;
pub mod regret;

pub use error::{Error, Result};
