//! Recurrent advantage actor-critic agents trained with a temporal-order
//! auxiliary loss on a partially observable gridworld.
//!
//! The crate is split into the environment ([`env`]), a small hand-written
//! differentiable core ([`numeric`]), the recurrent network ([`agent`]), the
//! order-classification loss ([`auxloss`]), synchronous A2C training
//! ([`trainer`]) and the experiment harness ([`harness`]).

pub mod agent;
pub mod auxloss;
pub mod env;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod trainer;

pub use error::{Error, Result};
