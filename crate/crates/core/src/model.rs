//! The full predictor: parameter registration, configuration, and the
//! window-level forward pass wiring interaction graphs, scene encoding,
//! cross-attention fusion, and the TCN decoder together.

use thiserror::Error;

use crate::data::{SceneAssets, TrajectoryWindow};
use crate::decoder::{self, DecoderConfig};
use crate::fusion::{self, FusionConfig};
use crate::graph::{self, GraphConfig, SparseGraphSet};
use crate::scene::{self, SceneConfig};
use crate::tensor::{BoundParams, ParameterSet, Scalar, Tape, TensorError, TensorId};

/// Errors from model construction and forward passes.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Everything that fixes the network architecture. Parameter shapes are a
/// pure function of this plus the scene channel counts.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Graph feature width.
    pub graph_dim: usize,
    /// Scene token width.
    pub scene_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub sparsity_k: usize,
    pub graph_layers: usize,
    pub scene_channels: Vec<usize>,
    pub scene_stride: usize,
    pub scene_kernel: usize,
    pub scene_mlp_hidden: usize,
    pub min_raster: usize,
    pub tcn_kernel: usize,
    pub tcn_dilations: Vec<usize>,
    pub use_semantic: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            obs_len: 8,
            pred_len: 12,
            graph_dim: 64,
            scene_dim: 64,
            key_dim: 64,
            value_dim: 64,
            sparsity_k: 4,
            graph_layers: 2,
            scene_channels: vec![16, 32, 64],
            scene_stride: 2,
            scene_kernel: 3,
            scene_mlp_hidden: 64,
            min_raster: 32,
            tcn_kernel: 3,
            tcn_dilations: vec![1, 2],
            use_semantic: true,
        }
    }
}

impl ModelConfig {
    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            feature_dim: self.graph_dim,
            layers: self.graph_layers,
            sparsity_k: self.sparsity_k,
        }
    }

    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            channels: self.scene_channels.clone(),
            stride: self.scene_stride,
            kernel: self.scene_kernel,
            token_dim: self.scene_dim,
            mlp_hidden: self.scene_mlp_hidden,
            use_semantic: self.use_semantic,
            min_raster: self.min_raster,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            graph_dim: self.graph_dim,
            scene_dim: self.scene_dim,
            key_dim: self.key_dim,
            value_dim: self.value_dim,
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            feature_dim: self.graph_dim,
            obs_len: self.obs_len,
            pred_len: self.pred_len,
            kernel: self.tcn_kernel,
            dilations: self.tcn_dilations.clone(),
        }
    }
}

/// A configured predictor and its trainable parameters.
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParameterSet<T>,
    pub frame_channels: usize,
    pub semantic_classes: usize,
}

/// Tape handles produced by one window forward pass.
pub struct ForwardPass {
    pub bound: BoundParams,
    /// Absolute predicted positions `[N, pred_len, 2]`.
    pub prediction: TensorId,
    /// Predicted per-step displacements `[N, pred_len, 2]`.
    pub displacements: TensorId,
    pub graph_features: TensorId,
    pub fused_features: TensorId,
    pub scene_tokens: TensorId,
    /// Cross-attention rows `[N * T_obs, S]`.
    pub attention: TensorId,
    pub graphs: SparseGraphSet,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with freshly initialized parameters. The registration
    /// sequence is fixed, so a fixed seed gives bit-identical parameters.
    pub fn new(
        config: ModelConfig,
        frame_channels: usize,
        semantic_classes: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if config.obs_len < 2 || config.pred_len < 1 {
            return Err(ModelError::Config(format!(
                "horizons must satisfy obs >= 2, pred >= 1; got {} and {}",
                config.obs_len, config.pred_len
            )));
        }
        if config.use_semantic && semantic_classes == 0 {
            return Err(ModelError::Config(
                "semantic features enabled but no semantic classes given".into(),
            ));
        }
        let mut params = ParameterSet::new(seed);
        graph::register_params(&mut params, &config.graph());
        scene::register_params(&mut params, &config.scene(), frame_channels, semantic_classes);
        fusion::register_params(&mut params, &config.fusion());
        decoder::register_params(&mut params, &config.decoder());
        Ok(Model { config, params, frame_channels, semantic_classes })
    }

    /// Full forward pass for one window against its scene assets.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        window: &TrajectoryWindow,
        assets: &SceneAssets,
    ) -> Result<ForwardPass, ModelError> {
        if window.n_peds() == 0 {
            return Err(ModelError::Config("window has no pedestrians".into()));
        }
        if window.obs_len != self.config.obs_len {
            return Err(ModelError::Config(format!(
                "window observes {} steps, model expects {}",
                window.obs_len, self.config.obs_len
            )));
        }
        let bound = self.params.bind(tape);
        let n = window.n_peds();
        let disp = tape.leaf_from_f64(&window.disp_flat(), &[n, window.obs_len, 2])?;

        let (graph_features, graphs) =
            graph::interaction_forward(tape, &bound, &self.config.graph(), disp)?;
        let scene_tokens = scene::scene_forward(tape, &bound, &self.config.scene(), assets)?;
        let (attended, attention) =
            fusion::cross_attention(tape, &bound, graph_features, scene_tokens)?;
        let fused_features = fusion::residual_fuse(tape, attended, graph_features)?;
        let displacements = decoder::tcn_decode(tape, &bound, &self.config.decoder(), fused_features)?;
        let prediction = decoder::integrate(tape, displacements, &window.last_obs())?;

        Ok(ForwardPass {
            bound,
            prediction,
            displacements,
            graph_features,
            fused_features,
            scene_tokens,
            attention,
            graphs,
        })
    }
}
