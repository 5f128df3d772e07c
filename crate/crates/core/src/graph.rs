//! Learned sparse spatial and temporal interaction graphs over observed
//! trajectories.
//!
//! Displacements are embedded, scored with scaled dot-product self-attention
//! (over pedestrians per timestep for the spatial graph, causally over
//! timesteps per pedestrian for the temporal graph), sparsified to the top-k
//! edges per row plus the self-edge, renormalized row-stochastic, and run
//! through stacked graph-convolution layers. The spatial pass feeds the
//! temporal pass; both outputs are concatenated and projected back to the
//! feature width.

use crate::model::ModelError;
use crate::tensor::{BoundParams, ParameterSet, Scalar, Tape, TensorId};

/// Which interactions a score tensor ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Pedestrian-to-pedestrian edges at each timestep: `[T, N, N]`.
    Spatial,
    /// Timestep-to-timestep edges per pedestrian, causal: `[N, T, T]`.
    Temporal,
}

/// Sparsified, row-stochastic adjacency for both graph kinds, plus the
/// boolean retention masks chosen by top-k selection.
pub struct SparseGraphSet {
    pub spatial_adj: TensorId,
    pub temporal_adj: TensorId,
    pub spatial_mask: Vec<bool>,
    pub temporal_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct GraphConfig {
    /// Feature width of embeddings and graph features.
    pub feature_dim: usize,
    /// Graph-convolution layers per pass.
    pub layers: usize,
    /// Edges kept per adjacency row (the self-edge is always retained on top).
    pub sparsity_k: usize,
}

pub fn register_params<T: Scalar>(params: &mut ParameterSet<T>, cfg: &GraphConfig) {
    let d = cfg.feature_dim;
    params.add_uniform("embed.weight", &[2, d], 2);
    params.add_constant("embed.bias", &[d], 0.0);
    params.add_constant("embed.prelu", &[1], 0.25);
    for branch in ["spatial", "temporal"] {
        params.add_uniform(&format!("{branch}_attn.wq"), &[d, d], d);
        params.add_uniform(&format!("{branch}_attn.wk"), &[d, d], d);
        for l in 0..cfg.layers {
            params.add_uniform(&format!("{branch}_gc{l}.weight"), &[d, d], d);
            params.add_constant(&format!("{branch}_gc{l}.prelu"), &[1], 0.25);
        }
    }
    params.add_uniform("graph_fuse.weight", &[2 * d, d], 2 * d);
    params.add_constant("graph_fuse.bias", &[d], 0.0);
}

/// Linear map + PReLU from per-step displacements `[N, T, 2]` to `[N, T, D]`.
pub fn embed_displacements<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    disp: TensorId,
) -> Result<TensorId, ModelError> {
    let shape = tape.shape(disp).to_vec();
    if shape.len() != 3 || shape[2] != 2 {
        return Err(ModelError::Config(format!("displacements must be [N, T, 2], got {shape:?}")));
    }
    let (n, t) = (shape[0], shape[1]);
    let w = bound.id("embed.weight");
    let d = tape.shape(w)[1];
    let flat = tape.reshape(disp, &[n * t, 2])?;
    let h = tape.matmul(flat, w)?;
    let h = tape.add(h, bound.id("embed.bias"))?;
    let h = tape.prelu(h, bound.id("embed.prelu"))?;
    Ok(tape.reshape(h, &[n, t, d])?)
}

/// Scaled dot-product self-attention scores over features `[N, T, D]`.
/// Spatial mode scores pedestrians against each other per timestep
/// (`[T, N, N]`); temporal mode scores timesteps per pedestrian with future
/// entries masked to -inf (`[N, T, T]`).
pub fn attention_scores<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    features: TensorId,
    mode: GraphMode,
) -> Result<TensorId, ModelError> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 3 {
        return Err(ModelError::Config(format!("features must be [N, T, D], got {shape:?}")));
    }
    let (n, t, d) = (shape[0], shape[1], shape[2]);
    let (prefix, input) = match mode {
        GraphMode::Spatial => ("spatial", tape.permute(features, &[1, 0, 2])?),
        GraphMode::Temporal => ("temporal", features),
    };
    let (batch, rows) = match mode {
        GraphMode::Spatial => (t, n),
        GraphMode::Temporal => (n, t),
    };
    let flat = tape.reshape(input, &[batch * rows, d])?;
    let q = tape.matmul(flat, bound.id(&format!("{prefix}_attn.wq")))?;
    let k = tape.matmul(flat, bound.id(&format!("{prefix}_attn.wk")))?;
    let q = tape.reshape(q, &[batch, rows, d])?;
    let k = tape.reshape(k, &[batch, rows, d])?;
    let k_t = tape.permute(k, &[0, 2, 1])?;
    let scores = tape.matmul(q, k_t)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    match mode {
        GraphMode::Spatial => Ok(scores),
        GraphMode::Temporal => {
            // causal: row t may only attend to s <= t
            let mut keep = vec![false; n * t * t];
            for b in 0..n {
                for row in 0..t {
                    for s in 0..=row {
                        keep[(b * t + row) * t + s] = true;
                    }
                }
            }
            Ok(tape.mask_fill(scores, &keep, T::neg_infinity())?)
        }
    }
}

/// Top-k sparsification and row renormalization of square score blocks
/// `[B, R, R]`. Per row, the k best finite scores plus the self-entry
/// survive (ties broken toward lower index); the rest go to -inf before a
/// row softmax, so dropped edges are exactly zero and gradients flow only
/// through survivors. Returns the adjacency and the retention mask.
pub fn sparsify<T: Scalar>(
    tape: &mut Tape<T>,
    scores: TensorId,
    k: usize,
) -> Result<(TensorId, Vec<bool>), ModelError> {
    if k < 1 {
        return Err(ModelError::Config("sparsity budget k must be >= 1".into()));
    }
    let shape = tape.shape(scores).to_vec();
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(ModelError::Config(format!("scores must be [B, R, R], got {shape:?}")));
    }
    let (batch, rows) = (shape[0], shape[1]);
    let mut keep = vec![false; batch * rows * rows];
    for b in 0..batch {
        for r in 0..rows {
            let base = (b * rows + r) * rows;
            let mut candidates: Vec<(usize, f64)> = (0..rows)
                .map(|c| (c, tape.data(scores)[base + c].to_f64()))
                .filter(|(_, s)| s.is_finite())
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(c, _) in candidates.iter().take(k) {
                keep[base + c] = true;
            }
            keep[base + r] = true; // self-edge always retained
        }
    }
    let masked = tape.mask_fill(scores, &keep, T::neg_infinity())?;
    let adj = tape.softmax(masked, 2)?;
    Ok((adj, keep))
}

/// Stacked graph convolutions `features <- PReLU(adj . features . W)` using
/// the per-layer weights registered under `<prefix>_gc<l>`.
pub fn graph_conv<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    prefix: &str,
    features: TensorId,
    adjacency: TensorId,
    layers: usize,
) -> Result<TensorId, ModelError> {
    let mut h = features;
    for l in 0..layers {
        let mixed = tape.matmul(adjacency, h)?;
        let w = bound.id(&format!("{prefix}_gc{l}.weight"));
        let projected = tape.matmul(mixed, w)?;
        h = tape.prelu(projected, bound.id(&format!("{prefix}_gc{l}.prelu")))?;
    }
    Ok(h)
}

/// Full interaction pass: embed displacements, run the sparse spatial graph,
/// feed its output through the sparse temporal graph, then concatenate both
/// branch outputs and project back to `[N, T, D]`.
pub fn interaction_forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    cfg: &GraphConfig,
    disp: TensorId,
) -> Result<(TensorId, SparseGraphSet), ModelError> {
    let shape = tape.shape(disp).to_vec();
    let (n, t) = (shape[0], shape[1]);
    let d = cfg.feature_dim;

    let embedded = embed_displacements(tape, bound, disp)?;

    let spatial_scores = attention_scores(tape, bound, embedded, GraphMode::Spatial)?;
    let (spatial_adj, spatial_mask) = sparsify(tape, spatial_scores, cfg.sparsity_k)?;
    let time_major = tape.permute(embedded, &[1, 0, 2])?;
    let spatial_out = graph_conv(tape, bound, "spatial", time_major, spatial_adj, cfg.layers)?;
    let spatial_feats = tape.permute(spatial_out, &[1, 0, 2])?; // back to [N, T, D]

    let temporal_scores = attention_scores(tape, bound, spatial_feats, GraphMode::Temporal)?;
    let (temporal_adj, temporal_mask) = sparsify(tape, temporal_scores, cfg.sparsity_k)?;
    let temporal_feats = graph_conv(tape, bound, "temporal", spatial_feats, temporal_adj, cfg.layers)?;

    let cat = tape.concat(&[spatial_feats, temporal_feats], 2)?;
    let flat = tape.reshape(cat, &[n * t, 2 * d])?;
    let fused = tape.matmul(flat, bound.id("graph_fuse.weight"))?;
    let fused = tape.add(fused, bound.id("graph_fuse.bias"))?;
    let features = tape.reshape(fused, &[n, t, d])?;

    Ok((
        features,
        SparseGraphSet { spatial_adj, temporal_adj, spatial_mask, temporal_mask },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{param_grad_check, pseudo};

    fn tiny_cfg(d: usize, layers: usize, k: usize) -> GraphConfig {
        GraphConfig { feature_dim: d, layers, sparsity_k: k }
    }

    fn params_for(cfg: &GraphConfig, seed: u64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new(seed);
        register_params(&mut p, cfg);
        p
    }

    #[test]
    fn embed_zero_displacements_zero_bias_gives_zeros() {
        let cfg = tiny_cfg(4, 1, 2);
        let params = params_for(&cfg, 1);
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let disp = tape.leaf(vec![0.0; 2 * 3 * 2], &[2, 3, 2]).unwrap();
        let out = embed_displacements(&mut tape, &bound, disp).unwrap();
        assert_eq!(tape.shape(out), &[2, 3, 4]);
        assert!(tape.data(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_known_weight_matches_hand_product() {
        let cfg = tiny_cfg(2, 1, 2);
        let mut params = params_for(&cfg, 1);
        params.set_values("embed.weight", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let disp = tape.leaf(vec![0.5, 0.25], &[1, 1, 2]).unwrap();
        let out = embed_displacements(&mut tape, &bound, disp).unwrap();
        // [0.5, 0.25] @ [[1,2],[3,4]] = [1.25, 2.0], positive so PReLU is identity
        assert!((tape.data(out)[0] - 1.25).abs() < 1e-12);
        assert!((tape.data(out)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spatial_scores_single_pedestrian_is_1x1_per_step() {
        let cfg = tiny_cfg(4, 1, 2);
        let params = params_for(&cfg, 2);
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let feats = tape.leaf(pseudo(1 * 3 * 4, 3), &[1, 3, 4]).unwrap();
        let scores = attention_scores(&mut tape, &bound, feats, GraphMode::Spatial).unwrap();
        assert_eq!(tape.shape(scores), &[3, 1, 1]);
    }

    #[test]
    fn identical_feature_rows_give_identical_score_rows() {
        let cfg = tiny_cfg(4, 1, 2);
        let params = params_for(&cfg, 3);
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let row = pseudo(4, 4);
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&row); // 3 pedestrians, same features, T=1
        }
        let feats = tape.leaf(data, &[3, 1, 4]).unwrap();
        let scores = attention_scores(&mut tape, &bound, feats, GraphMode::Spatial).unwrap();
        let s = tape.data(scores); // [1, 3, 3]
        for r in 1..3 {
            for c in 0..3 {
                assert_eq!(s[r * 3 + c], s[c], "row {r} differs");
            }
        }
    }

    #[test]
    fn two_by_two_scores_match_dot_product_oracle() {
        let cfg = tiny_cfg(2, 1, 2);
        let mut params = params_for(&cfg, 4);
        params.set_values("spatial_attn.wq", &[1.0, 0.0, 0.0, 1.0]).unwrap();
        params.set_values("spatial_attn.wk", &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let f = vec![1.0, 0.0, 0.0, 1.0]; // two unit-axis pedestrians, T=1
        let feats = tape.leaf(f, &[2, 1, 2]).unwrap();
        let scores = attention_scores(&mut tape, &bound, feats, GraphMode::Spatial).unwrap();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let want = [inv_sqrt2, 0.0, 0.0, inv_sqrt2]; // q_i . k_j / sqrt(2)
        for (got, want) in tape.data(scores).iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsify_keeps_topk_plus_self() {
        let mut tape: Tape<f64> = Tape::new();
        let scores = tape
            .leaf(vec![5.0, 1.0, 3.0, 2.0, 0.0, 4.0, 1.0, 6.0, 2.0], &[1, 3, 3])
            .unwrap();
        let (adj, mask) = sparsify(&mut tape, scores, 1).unwrap();
        // row 0: top-1 is col 0 (5.0), self is 0 -> only {0}
        assert_eq!(&mask[0..3], &[true, false, false]);
        assert_eq!(tape.data(adj)[0..3], [1.0, 0.0, 0.0]);
        // row 1: top-1 is col 2 (4.0), self 1 retained -> {1, 2}
        assert_eq!(&mask[3..6], &[false, true, true]);
        // row 2: top-1 is col 1 (6.0), self 2 -> {1, 2}
        assert_eq!(&mask[6..9], &[false, true, true]);
        for r in 0..3 {
            let sum: f64 = tape.data(adj)[r * 3..(r + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {r} not stochastic");
        }
    }

    #[test]
    fn sparsify_with_large_k_keeps_dense_rows() {
        let mut tape: Tape<f64> = Tape::new();
        let scores = tape.leaf(pseudo(9, 5), &[1, 3, 3]).unwrap();
        let (_, mask) = sparsify(&mut tape, scores, 5).unwrap();
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn sparsify_matches_sort_oracle_on_random_scores() {
        let data = pseudo(16, 6);
        let mut tape: Tape<f64> = Tape::new();
        let scores = tape.leaf(data.clone(), &[1, 4, 4]).unwrap();
        let k = 2;
        let (adj, mask) = sparsify(&mut tape, scores, k).unwrap();
        for r in 0..4 {
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| data[r * 4 + b].total_cmp(&data[r * 4 + a]).then(a.cmp(&b)));
            let mut want: Vec<usize> = order[..k].to_vec();
            if !want.contains(&r) {
                want.push(r);
            }
            want.sort_unstable();
            let got: Vec<usize> = (0..4).filter(|&c| mask[r * 4 + c]).collect();
            assert_eq!(got, want, "row {r}");
            let nonzeros = tape.data(adj)[r * 4..(r + 1) * 4].iter().filter(|&&v| v != 0.0).count();
            assert!(nonzeros <= k + 1);
        }
    }

    #[test]
    fn sparsify_rejects_zero_budget() {
        let mut tape: Tape<f64> = Tape::new();
        let scores = tape.leaf(vec![0.0; 4], &[1, 2, 2]).unwrap();
        assert!(matches!(sparsify(&mut tape, scores, 0), Err(ModelError::Config(_))));
    }

    #[test]
    fn graph_conv_identity_adjacency_identity_weight_is_prelu() {
        let cfg = tiny_cfg(2, 1, 2);
        let mut params = params_for(&cfg, 7);
        params.set_values("spatial_gc0.weight", &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let fdata = vec![1.0, -2.0, 3.0, -4.0, 0.5, -0.5, 2.0, -1.0];
        let feats = tape.leaf(fdata.clone(), &[1, 4, 2]).unwrap();
        let eye = tape.leaf(
            vec![
                1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
            &[1, 4, 4],
        ).unwrap();
        let out = graph_conv(&mut tape, &bound, "spatial", feats, eye, 1).unwrap();
        for (got, v) in tape.data(out).iter().zip(&fdata) {
            let want = if *v > 0.0 { *v } else { 0.25 * v };
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_conv_uniform_adjacency_averages_rows() {
        let cfg = tiny_cfg(2, 1, 2);
        let mut params = params_for(&cfg, 8);
        params.set_values("spatial_gc0.weight", &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let feats = tape.leaf(vec![2.0, 4.0, 6.0, 8.0], &[1, 2, 2]).unwrap();
        let uniform = tape.leaf(vec![0.5; 4], &[1, 2, 2]).unwrap();
        let out = graph_conv(&mut tape, &bound, "spatial", feats, uniform, 1).unwrap();
        // each row becomes the mean of rows: [4, 6]
        assert_eq!(tape.data(out), &[4.0, 6.0, 4.0, 6.0]);
    }

    #[test]
    fn temporal_adjacency_is_causal_and_budgeted() {
        let cfg = tiny_cfg(4, 2, 2);
        let params = params_for(&cfg, 9);
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let disp = tape.leaf(pseudo(3 * 5 * 2, 10), &[3, 5, 2]).unwrap();
        let (_, graphs) = interaction_forward(&mut tape, &bound, &cfg, disp).unwrap();
        let adj = tape.data(graphs.temporal_adj); // [3, 5, 5]
        for ped in 0..3 {
            for t in 0..5 {
                let row = &adj[(ped * 5 + t) * 5..(ped * 5 + t + 1) * 5];
                for (s, &v) in row.iter().enumerate() {
                    if s > t {
                        assert_eq!(v, 0.0, "future edge ({t}, {s}) nonzero");
                    }
                }
                let nonzeros = row.iter().filter(|&&v| v != 0.0).count();
                assert!(nonzeros <= cfg.sparsity_k + 1);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-5);
            }
        }
        // spatial rows stochastic and budgeted too
        let s_adj = tape.data(graphs.spatial_adj); // [5, 3, 3]
        for b in 0..5 {
            for r in 0..3 {
                let row = &s_adj[(b * 3 + r) * 3..(b * 3 + r + 1) * 3];
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-5);
                assert!(row.iter().filter(|&&v| v != 0.0).count() <= cfg.sparsity_k + 1);
            }
        }
    }

    #[test]
    fn zeroing_future_steps_leaves_earlier_features_bitwise_unchanged() {
        let cfg = tiny_cfg(4, 2, 2);
        let params = params_for(&cfg, 11);
        let t_obs = 6;
        let keep_upto = 2; // steps 0..=2 must be unaffected
        let base = pseudo(2 * t_obs * 2, 12);
        // perturb steps > keep_upto for every pedestrian
        let mut perturbed = base.clone();
        for ped in 0..2 {
            for t in (keep_upto + 1)..t_obs {
                for c in 0..2 {
                    perturbed[(ped * t_obs + t) * 2 + c] += 0.5;
                }
            }
        }
        let run = |input: &[f64]| -> Vec<u64> {
            let mut tape: Tape<f64> = Tape::new();
            let bound = params.bind(&mut tape);
            let disp = tape.leaf(input.to_vec(), &[2, t_obs, 2]).unwrap();
            let (features, _) = interaction_forward(&mut tape, &bound, &cfg, disp).unwrap();
            let data = tape.data(features);
            let mut bits = Vec::new();
            for ped in 0..2 {
                for t in 0..=keep_upto {
                    for d in 0..cfg.feature_dim {
                        bits.push(data[(ped * t_obs + t) * cfg.feature_dim + d].to_bits());
                    }
                }
            }
            bits
        };
        assert_eq!(run(&base), run(&perturbed));
    }

    #[test]
    fn swapping_two_pedestrians_permutes_features_bitwise() {
        let cfg = tiny_cfg(4, 2, 4);
        let params = params_for(&cfg, 13);
        let t_obs = 5;
        let a = pseudo(t_obs * 2, 14);
        let b = pseudo(t_obs * 2, 15);
        let run = |first: &[f64], second: &[f64]| -> Vec<Vec<u64>> {
            let mut input = first.to_vec();
            input.extend_from_slice(second);
            let mut tape: Tape<f64> = Tape::new();
            let bound = params.bind(&mut tape);
            let disp = tape.leaf(input, &[2, t_obs, 2]).unwrap();
            let (features, _) = interaction_forward(&mut tape, &bound, &cfg, disp).unwrap();
            let data = tape.data(features);
            let per_ped = t_obs * cfg.feature_dim;
            (0..2)
                .map(|p| data[p * per_ped..(p + 1) * per_ped].iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        let ab = run(&a, &b);
        let ba = run(&b, &a);
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }

    #[test]
    fn interaction_forward_gradients_match_finite_differences() {
        let cfg = tiny_cfg(4, 2, 2);
        let mut params = params_for(&cfg, 16);
        let disp_data = pseudo(3 * 4 * 2, 17);
        let err = param_grad_check(&mut params, 4, 1e-5, &|tape, bound| {
            let disp = tape.leaf(disp_data.clone(), &[3, 4, 2]).unwrap();
            let (features, _) = interaction_forward(tape, bound, &cfg, disp).unwrap();
            let w = tape
                .leaf(pseudo(3 * 4 * 4, 18), &[3, 4, 4])
                .unwrap();
            let prod = tape.mul(features, w).unwrap();
            tape.sum_all(prod).unwrap()
        });
        assert!(err < 1e-4, "interaction_forward rel err {err}");
    }
}
