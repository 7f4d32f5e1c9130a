//! Dense symmetric linear algebra, symmetric tensors, sphere nets and random streams.

pub mod eigen;
pub mod matrix;
pub mod net;
pub mod quadrature;
pub mod rng;
pub mod tensor;

pub use eigen::{op_norm, psd_pinv, psd_sqrt, sym_eigh, Eigh};
pub use matrix::{Cholesky, DenseMatrix, SymMatrix};
pub use net::sphere_net;
pub use quadrature::GaussHermite;
pub use rng::RngStream;
pub use tensor::{tensor_opnorm, SymTensor};
