//! The stacked decomposition network: embedding, per-layer AttnNorm blocks
//! with inference and extrapolation fusion, and a per-horizon linear head.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{normalizer_path, Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{count_parameters, parameter_breakdown, ModelConfig, ParameterBreakdown};
pub use forward::{Forward, LayerDiagnostics, Model, TapedForward, TapedLayer};
pub use params::{LayerParams, LayerVars, ModelParams, ParamVars};
