//! Reverse-mode autodiff, the ResNet regularizer, the k-space loss and Adam.

pub mod adam;
pub mod conv;
pub mod graph;
pub mod loss;
pub mod resnet;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{ComputeGraph, Gradients, NodeId};
pub use loss::loss_l1l2;
pub use resnet::{resnet_nodes, resnet_regularizer, NetworkParams, ParamNodes, ResNetArch};
pub use tensor::Tensor;
