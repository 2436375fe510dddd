//! Analytic core of the two-class server farm revenue model.
//!
//! A provider runs `S` identical servers split into a premium pool, a shared
//! (basic) pool and a switched-off remainder. Premium jobs that find their pool
//! full may overflow into the shared pool; jobs finding no idle server are lost,
//! and lost premium jobs cost a penalty. This crate evaluates expected revenue
//! for a candidate split and searches for good splits:
//!
//! * [`loss`]: Erlang-B blocking for integer and fractional server counts.
//! * [`overflow`]: overflow-traffic moments and Hayward's blocking approximation.
//! * [`economics`]: revenue, throughput, power and penalty per allocation.
//! * [`policies`]: exhaustive search, hill climbing and the allocation heuristics.
//! * [`forecasting`]: Holt smoothing and the forecast-error percentile.
//!
//! The crate is `no_std` (it needs `alloc`) unless the default `std` feature
//! is enabled.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod economics;
mod error;
pub mod forecasting;
pub mod loss;
pub(crate) mod math;
pub mod overflow;
pub mod policies;

pub use economics::{Allocation, EconomicParams, Load, RevenueBreakdown};
pub use error::{Error, Result};
pub use forecasting::{ErrorHistory, SmoothingState};
pub use loss::{erlang_b, min_servers_for_blocking, stationary_distribution, LossEvaluation};
pub use overflow::TrafficStream;
pub use policies::{Model, PolicyConfig};
