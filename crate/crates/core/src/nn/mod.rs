//! Dense numerics, recurrent cells, the two-layer model and its optimizer.

mod adam;
mod cell;
pub mod checkpoint;
mod gradcheck;
mod model;
mod tensor;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use cell::{
    blstm_layer_backward, blstm_layer_forward, gru_cell_backward, gru_cell_forward, lstm_cell_backward,
    lstm_cell_forward, CellState, GruParams, HSource, LstmParams,
};
pub use gradcheck::{compare_gradients, grad_check, grad_check_l2, relative_error, GradCheckReport, DEFAULT_STEP};
pub use model::{model_backward, model_forward, predict, LayerParams, Mode, ModelKind, ModelParams};
pub use tensor::{relu, sigmoid, Tensor};

pub(crate) use model::{backward_into, forward_traced};
