//! Scene representation from a frame raster and an optional semantic class
//! grid.
//!
//! Both inputs run through small trainable strided-conv stacks to a shared
//! coarse grid; the per-cell feature vectors are concatenated (frame only in
//! the ablation configuration) and refined by a two-layer MLP into a bank of
//! scene tokens that the fusion stage attends over.

use crate::data::{nearest_resample, one_hot, SceneAssets};
use crate::model::ModelError;
use crate::tensor::{BoundParams, ParameterSet, Scalar, Tape, TensorId};

#[derive(Debug, Clone)]
pub struct SceneConfig {
    /// Output channels of each conv layer.
    pub channels: Vec<usize>,
    /// Stride shared by all conv layers.
    pub stride: usize,
    /// Square kernel width.
    pub kernel: usize,
    /// Width of the emitted scene tokens.
    pub token_dim: usize,
    pub mlp_hidden: usize,
    pub use_semantic: bool,
    /// Smallest accepted raster edge.
    pub min_raster: usize,
}

impl SceneConfig {
    pub fn total_stride(&self) -> usize {
        self.stride.pow(self.channels.len() as u32)
    }

    /// Token-grid extents for a given raster size.
    pub fn token_grid(&self, h: usize, w: usize) -> (usize, usize) {
        let s = self.total_stride();
        (h.div_ceil(s), w.div_ceil(s))
    }
}

pub fn register_params<T: Scalar>(
    params: &mut ParameterSet<T>,
    cfg: &SceneConfig,
    frame_channels: usize,
    semantic_classes: usize,
) {
    let k = cfg.kernel;
    let mut c_in = frame_channels;
    for (i, &c_out) in cfg.channels.iter().enumerate() {
        params.add_uniform(&format!("frame_enc{i}.weight"), &[c_out, c_in, k, k], c_in * k * k);
        params.add_constant(&format!("frame_enc{i}.bias"), &[c_out], 0.0);
        params.add_constant(&format!("frame_enc{i}.prelu"), &[1], 0.25);
        c_in = c_out;
    }
    if cfg.use_semantic {
        let mut c_in = semantic_classes;
        for (i, &c_out) in cfg.channels.iter().enumerate() {
            params.add_uniform(&format!("sem_enc{i}.weight"), &[c_out, c_in, k, k], c_in * k * k);
            params.add_constant(&format!("sem_enc{i}.bias"), &[c_out], 0.0);
            params.add_constant(&format!("sem_enc{i}.prelu"), &[1], 0.25);
            c_in = c_out;
        }
    }
    let last = *cfg.channels.last().expect("scene encoder needs at least one conv layer");
    let cell_dim = if cfg.use_semantic { 2 * last } else { last };
    params.add_uniform("scene_mlp.w1", &[cell_dim, cfg.mlp_hidden], cell_dim);
    params.add_constant("scene_mlp.b1", &[cfg.mlp_hidden], 0.0);
    params.add_constant("scene_mlp.prelu", &[1], 0.25);
    params.add_uniform("scene_mlp.w2", &[cfg.mlp_hidden, cfg.token_dim], cfg.mlp_hidden);
    params.add_constant("scene_mlp.b2", &[cfg.token_dim], 0.0);
}

fn conv_stack<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &SceneConfig,
    prefix: &str,
    input: TensorId,
) -> Result<TensorId, ModelError> {
    let mut x = input;
    for i in 0..cfg.channels.len() {
        let y = tape.conv2d(
            x,
            bound.id(&format!("{prefix}{i}.weight")),
            bound.id(&format!("{prefix}{i}.bias")),
            cfg.stride,
        )?;
        x = tape.prelu(y, bound.id(&format!("{prefix}{i}.prelu")))?;
    }
    Ok(x)
}

/// Strided conv stack over the frame raster `[C_img, H, W]`, yielding
/// `[1, C_last, H', W']` with `H' = ceil(H / total_stride)`.
pub fn encode_frame<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &SceneConfig,
    raster: TensorId,
) -> Result<TensorId, ModelError> {
    let shape = tape.shape(raster).to_vec();
    if shape.len() != 3 {
        return Err(ModelError::Config(format!("frame raster must be [C, H, W], got {shape:?}")));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h < cfg.min_raster || w < cfg.min_raster {
        return Err(ModelError::Config(format!(
            "raster {h}x{w} below minimum {0}x{0}",
            cfg.min_raster
        )));
    }
    let x = tape.reshape(raster, &[1, c, h, w])?;
    conv_stack(tape, bound, cfg, "frame_enc", x)
}

/// One-hot semantic channels through the semantic conv stack; the grid is
/// nearest-neighbor aligned to the frame raster first so both encoders emit
/// the same coarse grid.
pub fn encode_semantic<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &SceneConfig,
    assets: &SceneAssets,
) -> Result<TensorId, ModelError> {
    let grid = assets
        .semantic
        .as_ref()
        .ok_or_else(|| ModelError::Config("semantic grid required but not loaded".into()))?;
    let (h, w) = (assets.frame.height, assets.frame.width);
    let ids = nearest_resample(grid, h, w).map_err(|e| ModelError::Config(e.to_string()))?;
    let hot = one_hot(&ids, h, w, grid.class_count);
    let input = tape.leaf_from_f64(&hot, &[1, grid.class_count, h, w])?;
    conv_stack(tape, bound, cfg, "sem_enc", input)
}

/// Concatenates frame and (optionally) semantic feature grids channel-wise,
/// applies the per-cell MLP, and flattens the grid into `[S, token_dim]`.
pub fn fuse_scene<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    frame_feats: TensorId,
    semantic_feats: Option<TensorId>,
) -> Result<TensorId, ModelError> {
    let cells = match semantic_feats {
        Some(sem) => {
            let (fs, ss) = (tape.shape(frame_feats).to_vec(), tape.shape(sem).to_vec());
            if fs[2..] != ss[2..] {
                return Err(ModelError::Tensor(crate::tensor::TensorError::ShapeMismatch {
                    op: "fuse_scene",
                    lhs: fs,
                    rhs: ss,
                }));
            }
            tape.concat(&[frame_feats, sem], 1)?
        }
        None => frame_feats,
    };
    let shape = tape.shape(cells).to_vec(); // [1, C, H', W']
    let (c, gh, gw) = (shape[1], shape[2], shape[3]);
    let grid_major = tape.permute(cells, &[0, 2, 3, 1])?;
    let flat = tape.reshape(grid_major, &[gh * gw, c])?;
    let h1 = tape.matmul(flat, bound.id("scene_mlp.w1"))?;
    let h1 = tape.add(h1, bound.id("scene_mlp.b1"))?;
    let h1 = tape.prelu(h1, bound.id("scene_mlp.prelu"))?;
    let h2 = tape.matmul(h1, bound.id("scene_mlp.w2"))?;
    Ok(tape.add(h2, bound.id("scene_mlp.b2"))?)
}

/// Whole scene pass: raster (and semantic grid when enabled) to scene tokens.
pub fn scene_forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &SceneConfig,
    assets: &SceneAssets,
) -> Result<TensorId, ModelError> {
    let raster = tape.leaf_from_f64(
        &assets.frame.data,
        &[assets.frame.channels, assets.frame.height, assets.frame.width],
    )?;
    let frame_feats = encode_frame(tape, bound, cfg, raster)?;
    let semantic_feats = if cfg.use_semantic {
        Some(encode_semantic(tape, bound, cfg, assets)?)
    } else {
        None
    };
    fuse_scene(tape, bound, frame_feats, semantic_feats)
}
