//! Autodiff engine, parameter layout and the position-free Transformer.

pub mod encoder;
pub mod graph;
pub mod layout;

pub use encoder::{
    attach_downstream_head, encode, init_encoder, load_encoder, load_model, predict,
    predict_proba, reconstruct, save_encoder, save_model, EncoderConfig, EncoderState,
    ModelState, Task, ViewEmbedding,
};
