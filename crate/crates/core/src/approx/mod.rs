//! Small feed-forward networks with exact backpropagation, first-order
//! optimizers, Kronecker-factored curvature and a binary checkpoint format.

pub mod checkpoint;
mod kfac;
mod mlp;
mod optim;

pub use kfac::{BiasMode, CurvatureBatch, KfacConfig, KfacStats, LayerFactors};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, LayerGradient, LayerShape, Mlp};
pub use optim::{Optimizer, OptimizerKind};
