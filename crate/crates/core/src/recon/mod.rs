//! Image formation: delay-and-sum backprojection and analysis-through-synthesis
//! fitting of the neural field.

mod ats;
mod bp;
mod grid;

pub use ats::{
    adam_step, ats_continue, ats_reconstruct, batch_loss_and_gradient, extract_image, fresh_field, scan_loss, scan_loss_grad,
    AdamState, AtsOutput, TrainConfig, TrainHooks,
};
pub use bp::{backproject, backproject_coherent, interp_row, BpMode};
pub use grid::{GridSpec, ReconImage, MIN_GRID_SIDE};
