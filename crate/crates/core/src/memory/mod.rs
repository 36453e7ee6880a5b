//! Wave-ordered memory: the StoreBuffer with per-wave request chains and
//! partial store queues, and the cache latency model.

mod cache;
mod store_buffer;

pub use cache::{Level, MemoryConfig, MemoryModel};
pub use store_buffer::{
    Acceptance, MemoryRequest, OpKind, ReadyOp, RequestKind, Step, StoreBuffer, WaveState, Window,
};
