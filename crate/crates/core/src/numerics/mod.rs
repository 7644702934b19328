//! Dense tensors, seeded random streams, initializers and gradient checking.

pub mod gradcheck;
pub mod init;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_gradcheck, GradCheckReport, Objective};
pub use init::{he_normal_init, xavier_uniform_init, Initializer};
pub use rng::{LabRng, RngStream};
pub use tensor::{frobenius_norm, gemm, Tensor};
