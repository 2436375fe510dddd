//! Trace input, discrete-event simulation and the command-line front end for
//! the server farm revenue model in [`farmrev_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod sim;
pub mod trace;
