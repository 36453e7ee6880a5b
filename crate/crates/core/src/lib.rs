//! A cycle-based simulator of a WaveScalar-style dataflow processor with two
//! memory ordering disciplines: strict wave-ordered memory (optionally with
//! decoupled store halves) and speculative, transactional out-of-order
//! execution of memory operations across waves.

pub mod ir;
pub mod oracle;
pub mod fabric;
pub mod memory;
pub mod twc;
pub mod sim;
pub mod harness;
