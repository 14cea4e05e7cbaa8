//! Steady-states of splitter networks: exact solvers, balancer generators,
//! priority optimization and a discrete belt simulator.

pub mod balancers;
pub mod circulation;
pub mod discrete;
mod linalg;
pub mod lp;
pub mod network;
pub mod priority;
pub mod rational;
pub mod steady_state;

pub use network::{ArcId, NodeId, NodeKind, SplitterNetwork};
pub use rational::Rational;

