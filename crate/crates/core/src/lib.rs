//! Kinetic exchange models of money and wealth.
//!
//! Agents trade in random pairs, each trade conserving the pair's money.
//! The crate provides the trade rules ([`kernels`]), saving-propensity
//! distributions ([`lambda`]), a parallel Monte Carlo driver ([`engine`]),
//! histogram and tail-fit tools ([`stats`]) and closed-form reference values
//! ([`theory`]).

pub mod engine;
pub mod io;
pub mod kernels;
pub mod lambda;
pub mod numeric;
pub mod stats;
pub mod theory;
