//! A fast linear text classifier: averaged n-gram embeddings trained
//! with asynchronous SGD, full or hierarchical softmax over the labels,
//! and pruned top-T tree inference.

pub mod dictionary;
pub mod error;
pub mod huffman;
pub mod metrics;
pub mod model;
pub mod persistence;
pub mod predictor;
pub mod trainer;

pub use dictionary::{tokenize, Dictionary, FeatureVector};
pub use error::{Error, Result};
pub use huffman::HuffmanTree;
pub use metrics::{evaluate, precision_recall_at_k, EvalReport};
pub use model::{LossKind, Matrix, Model, ModelImpl, ScratchState};
pub use persistence::{load, save, LoadedModel};
pub use predictor::{
    count_visited_nodes, predict, predict_full, predict_hs, BoundedMinHeap, Prediction,
};
pub use trainer::{lr_at, pick_label, train, ProgressCounter, TrainConfig, TrainOutput};
