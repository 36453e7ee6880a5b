//! Program representation: instructions, wave blocks, `<P,C,S>` annotations,
//! the assembly format, static validation and kernel generators.

mod asm;
pub mod builder;
pub mod kernels;
pub mod samples;
mod types;
mod validate;

pub use asm::{emit_program, parse_program, ParseError, ParseErrorKind};
pub use builder::{ProgramBuilder, Value};
pub use kernels::{build_kernel, KernelError, KernelKind, KernelParams, MatrixLayout, VectorLayout};
pub use types::*;
pub use validate::{validate_program, ValidationReport, Violation};
