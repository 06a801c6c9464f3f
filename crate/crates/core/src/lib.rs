//! Laboratory for linear-complexity sequence modeling built around the
//! Expand–Oscillation–Shrink recurrence: a scan engine with exact analytical
//! gradients, a zoo of known methods with numerically verified equivalences,
//! and a desk-scale training harness for associative recall.

pub mod code;
pub mod gradcheck;
pub mod model;
pub mod mqar;
pub mod optim;
pub mod scan;
pub mod state;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use code::{Activation, CodeKind, ModelCode, Psi};
pub use tensor::{CMatrix, Matrix, Vector};
