//! Policy-gradient laboratory for studying delayed critic updates.

pub mod diffnet;
pub mod envsuite;
pub mod rollout;
pub mod objectives;
pub mod agents;
pub mod harness;
pub mod analysis;
