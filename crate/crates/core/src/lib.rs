//! D3Q19 lattice Boltzmann solver built around two mirrored containers.
//!
//! The [`reference`] lattice stores cells as an array of structures and
//! resolves each cell's dynamics chain through trait objects. The
//! [`accelerated`] lattice stores populations as a structure of arrays,
//! identifies chains by integer tags and runs a tag-dispatched, two-population
//! pull kernel. Both containers execute the same cell-local kernels from
//! [`collision`] and [`boundaries`], so they can be compared bit for bit.
//!
//! [`multiblock`] decomposes the accelerated lattice into regular blocks that
//! exchange their envelopes through a message-passing [`multiblock::Transport`].
//! [`cases`], [`diagnostics`] and [`perfmodel`] provide the benchmark setups,
//! reductions and the analytical bandwidth model.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod accelerated;
pub mod boundaries;
pub mod cases;
pub mod collision;
pub mod descriptor;
pub mod diagnostics;
pub mod dynamics;
pub mod multiblock;
pub mod perfmodel;
pub mod reference;

mod error;
mod real;

pub use error::{Error, Result};
pub use real::{Precision, Real};
