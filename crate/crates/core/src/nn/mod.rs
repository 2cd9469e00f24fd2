//! The GQANet quality model with hand-written reverse-mode gradients.

mod checkpoint;
mod layers;
mod model;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointConfig, Stage, CHECKPOINT_VERSION};
pub use layers::{knn_graph, leaky_relu, sigmoid, softplus, EdgeConv, EdgeConvCache, Linear, Mlp, MlpCache};
pub use model::{
    cross_entropy, model_index, patch_coords, CloudForward, GqaNet, HeadsOutput, MpfeCache, NetConfig, ParamGroup,
    FEATURE_DIM, NUM_CLASSES,
};
pub use tensor::Tensor;
