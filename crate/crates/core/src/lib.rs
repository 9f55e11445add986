pub mod checkpoint;
pub mod dataset;
pub mod descriptor;
pub mod encoder;
pub mod error;
pub mod format;
pub mod image;
pub mod loss;
pub mod maskcrop;
pub mod optim;
pub mod retrieval;
pub mod scalar;
pub mod subspace;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision for training, checkpoints and retrieval.
pub type Real = f32;
pub type Params = encoder::EncoderParams<Real>;
pub type Optimizer = optim::Adam<Real>;
pub type KdTreeF32 = subspace::KdTree<f32>;
pub type KdTreeF64 = subspace::KdTree<f64>;
