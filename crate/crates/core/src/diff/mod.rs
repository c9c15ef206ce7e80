//! Reverse-mode differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records each primitive together with its inputs. Calling
//! [`Tape::backward`] on a scalar returns [`Gradients`] for every recorded
//! value that depends on a parameter. [`grad_check`] compares those
//! gradients against central differences.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE};
pub(crate) use tape::peak_index;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
