//! Minimal dense-network numerics with hand-written backward passes.
//!
//! Layers never own their weights. They hold [`SlotId`]s into a
//! [`ParamStore`], run forward into an explicit cache value, and accumulate
//! gradients back into the store on the backward pass.

mod adam;
mod dense;
mod gradcheck;
mod init;
mod lstm;
mod matrix;
mod store;

pub use adam::{AdamConfig, AdamState};
pub use dense::{dense_backward, dense_forward, Activation, Dense, DenseCache, DenseGrads};
pub use gradcheck::{gradcheck, relative_error, GradCheckReport, Parameterized};
pub use init::glorot_uniform;
pub use lstm::{LstmCell, LstmStepCache};
pub use matrix::Matrix;
pub use store::{ParamStore, Slot, SlotId};
