//! Reliability-aware erasure-coded placement across heterogeneous storage
//! nodes, with a trace-driven simulator and a reference Reed-Solomon codec.

pub mod codec;
pub mod model;
pub mod perfmodel;
pub mod reliability;
pub mod schedulers;
pub mod simulator;
pub mod trace_io;
