//! Structure-of-arrays lattice with integer-tag dispatch.
//!
//! Each cell carries a 32-bit tag naming its dynamics chain and an index into
//! a flat parameter table. A step resolves tags through a [`DispatchSet`]; any
//! tag outside the set aborts the step with the missing chain's name.

mod block;
mod dump;
mod mirror;
mod registry;

pub use block::AcceleratedBlock;
pub use dump::{FieldDump, DUMP_MAGIC};
pub use mirror::{mirror_to_accelerated, mirror_to_reference};
pub use registry::{DispatchSet, DynamicsRegistry, ParamSlot, Registration, StepKernel};
