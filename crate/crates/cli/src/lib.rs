//! Library surface of the `slotfill` command: model persistence and the
//! workflow plumbing shared by the subcommands.

pub mod persist;
pub mod pipeline;
