//! U-Net and UNet-GNN segmentation networks.
//!
//! The UNet-GNN replaces nothing in the backbone: after the bottleneck
//! DoubleConv produces `F_L`, every location becomes a graph node, a k-NN
//! graph is built in feature space and `T` graph convolutions update the
//! nodes before the decoder resumes. k-NN selection is not differentiated;
//! gradients reach the features, `W` and `b`.

mod config;
mod graph;
mod model;
mod train;

pub use config::UNetConfig;
pub use graph::{build_knn_graph, graph_conv, knn_nodes, FeatureMap, Graph, NodeFeatures};
pub use model::{forward, images_to_tensor, init_params, predict_mask, Forward, ProbMap, SegNet};
pub use train::{train, train_step, validation_split, EpochRecord, ModelCard, TrainConfig, TrainHistory};
