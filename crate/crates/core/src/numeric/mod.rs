//! Dense tensors, parameter containers, initialization, Adam and the
//! finite-difference gradient checker every network in the crate is verified with.

mod adam;
mod gradcheck;
mod init;
mod param;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use init::{derive_seed, fans, xavier_init};
pub use param::{clip_grad_norm, param_hash, Parameter, Parameterized};
pub use tensor::{gemm_acc, Real, Tensor};
