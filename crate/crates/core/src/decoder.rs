//! Temporal-convolutional decoding of fused features into future
//! displacements, and integration back to absolute positions.
//!
//! Residual blocks of dilated causal 1-D convolutions run over the observed
//! steps; a time-expansion convolution (observed steps as channels) maps the
//! 8-step axis to the 12 prediction steps; a linear head emits per-step
//! (dx, dy); a running sum anchored at the last observed position recovers
//! absolute coordinates.

use crate::model::ModelError;
use crate::tensor::{BoundParams, Padding, ParameterSet, Scalar, Tape, TensorId};

#[derive(Debug, Clone)]
pub struct DecoderConfig {
    pub feature_dim: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    pub kernel: usize,
    /// One residual block per entry.
    pub dilations: Vec<usize>,
}

pub fn register_params<T: Scalar>(params: &mut ParameterSet<T>, cfg: &DecoderConfig) {
    let d = cfg.feature_dim;
    for (i, _) in cfg.dilations.iter().enumerate() {
        params.add_uniform(&format!("tcn_block{i}.weight"), &[d, d, cfg.kernel], d * cfg.kernel);
        params.add_constant(&format!("tcn_block{i}.bias"), &[d], 0.0);
        params.add_constant(&format!("tcn_block{i}.prelu"), &[1], 0.25);
    }
    params.add_uniform(
        "tcn_expand.weight",
        &[cfg.pred_len, cfg.obs_len, cfg.kernel],
        cfg.obs_len * cfg.kernel,
    );
    params.add_constant("tcn_expand.bias", &[cfg.pred_len], 0.0);
    params.add_constant("tcn_expand.prelu", &[1], 0.25);
    params.add_uniform("head.weight", &[d, 2], d);
    params.add_constant("head.bias", &[2], 0.0);
}

/// Fused features `[N, T_obs, D]` to predicted displacements `[N, pred, 2]`.
pub fn tcn_decode<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &DecoderConfig,
    fused: TensorId,
) -> Result<TensorId, ModelError> {
    let shape = tape.shape(fused).to_vec();
    if shape.len() != 3 || shape[1] != cfg.obs_len || shape[2] != cfg.feature_dim {
        return Err(ModelError::Config(format!(
            "decoder input must be [N, {}, {}], got {shape:?}",
            cfg.obs_len, cfg.feature_dim
        )));
    }
    let n = shape[0];

    // residual dilated blocks over the time axis, channels = features
    let mut x = tape.permute(fused, &[0, 2, 1])?; // [N, D, T]
    for (i, &dilation) in cfg.dilations.iter().enumerate() {
        let y = tape.conv1d(
            x,
            bound.id(&format!("tcn_block{i}.weight")),
            bound.id(&format!("tcn_block{i}.bias")),
            dilation,
            Padding::Causal,
        )?;
        let y = tape.prelu(y, bound.id(&format!("tcn_block{i}.prelu")))?;
        x = tape.add(x, y)?;
    }

    // time expansion: observed steps as channels, feature axis as length
    let u = tape.permute(x, &[0, 2, 1])?; // [N, T_obs, D]
    let v = tape.conv1d(
        u,
        bound.id("tcn_expand.weight"),
        bound.id("tcn_expand.bias"),
        1,
        Padding::Symmetric,
    )?; // [N, pred, D]
    let v = tape.prelu(v, bound.id("tcn_expand.prelu"))?;

    let flat = tape.reshape(v, &[n * cfg.pred_len, cfg.feature_dim])?;
    let out = tape.matmul(flat, bound.id("head.weight"))?;
    let out = tape.add(out, bound.id("head.bias"))?;
    Ok(tape.reshape(out, &[n, cfg.pred_len, 2])?)
}

/// Cumulative sum of displacements anchored at each pedestrian's last
/// observed position: `[N, pred, 2]` displacements to absolute positions.
pub fn integrate<T: Scalar>(
    tape: &mut Tape<T>,
    displacements: TensorId,
    last_obs: &[[f64; 2]],
) -> Result<TensorId, ModelError> {
    let shape = tape.shape(displacements).to_vec();
    if shape.len() != 3 || shape[2] != 2 || shape[0] != last_obs.len() {
        return Err(ModelError::Config(format!(
            "integrate expects [N, P, 2] displacements with one anchor per pedestrian, got {shape:?} and {} anchors",
            last_obs.len()
        )));
    }
    let (n, p) = (shape[0], shape[1]);
    let mut anchors = Vec::with_capacity(n * p * 2);
    for pos in last_obs {
        for _ in 0..p {
            anchors.push(pos[0]);
            anchors.push(pos[1]);
        }
    }
    let anchor = tape.leaf_from_f64(&anchors, &[n, p, 2])?;
    let summed = tape.cumsum(displacements, 1)?;
    Ok(tape.add(summed, anchor)?)
}
