//! Floquet and static effective Hamiltonian toolkit for the squeezing-driven
//! Kerr parametric oscillator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod effective;
pub mod error;
pub mod expansion;
pub mod floquet;
pub mod fock;
pub mod model;
pub mod sweep;

pub use error::{Error, Result};
