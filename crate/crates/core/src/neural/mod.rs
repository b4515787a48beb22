//! One-hidden-layer neural network with optional entity embeddings.

mod descent;
mod embedding;
mod mlp;

pub use descent::MAX_HALVINGS;
pub use embedding::{
    default_embedding_dim, embedded_loss, embedded_loss_and_gradient, fit_embeddings, init_embedded, EmbeddedMlp,
    EmbeddingSpec, EmbeddingTable,
};
pub use mlp::{
    fit_mlp, grid_search_nn, grid_search_nn_with, hidden_grid, init_mlp, init_mlp_with_schema, loss,
    loss_and_gradient, train, train_with_checkpoints, Activation, BatchMode, Forward, MlpGradient, MlpModel, NnCell,
    NnGrid, TrainConfig, Trained, DEFAULT_LEARNING_RATE, MLP_SCHEMA_VERSION,
};
