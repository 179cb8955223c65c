//! Dense tensors, a reverse-mode autodiff tape and the layers built on it.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tensor;

pub use attention::{attend, attention, AttentionState};
pub use gradcheck::{grad_check, grad_check_params, rel_err, GradCheckReport};
pub use graph::{Backward, CeTarget, Graph, Var};
pub use lstm::{lstm_step, LstmLayer, StackedLstm};
pub use optim::{Optimizer, Rule};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::{ShapeError, Tensor};
