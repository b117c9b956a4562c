//! Sequential analysis toolkit: exponential-family tests that stop early,
//! changepoint detectors, Bayesian multiple-changepoint filters, first-passage
//! approximations, and adaptive multi-stage designs, with a deterministic
//! Monte Carlo harness for calibrating and verifying their operating
//! characteristics.

pub mod bcmix;
pub mod binary;
pub mod changepoint;
pub mod error;
pub mod expfam;
pub mod glr;
pub mod groupseq;
pub mod io;
pub mod quad;
pub mod renewal;
pub mod sim;

pub use error::{Error, Result};
