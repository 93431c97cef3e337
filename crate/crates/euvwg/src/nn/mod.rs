//! Small dense networks and the optimizers that train them.
//!
//! Everything is real-valued and deterministic for a fixed seed: weights are
//! drawn from a seeded stream generator in a fixed order, forward and
//! reverse passes are sequential batched GEMMs, and the optimizers carry all
//! of their state explicitly so staged schedules resume exactly.

mod mlp;
mod opt;

pub use mlp::{Gradients, Jet, JetTape, Mlp, MlpCheckpoint, Tape};
pub use opt::{Adam, Lbfgs};
