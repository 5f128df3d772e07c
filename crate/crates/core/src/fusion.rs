//! Cross-attention between graph features (queries) and scene tokens
//! (keys/values), with a residual connection back onto the graph features.

use crate::model::ModelError;
use crate::tensor::{BoundParams, ParameterSet, Scalar, Tape, TensorId};

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Graph feature width (query input and output width).
    pub graph_dim: usize,
    /// Scene token width (key/value input width).
    pub scene_dim: usize,
    pub key_dim: usize,
    pub value_dim: usize,
}

pub fn register_params<T: Scalar>(params: &mut ParameterSet<T>, cfg: &FusionConfig) {
    params.add_uniform("cross_attn.wq", &[cfg.graph_dim, cfg.key_dim], cfg.graph_dim);
    params.add_uniform("cross_attn.wk", &[cfg.scene_dim, cfg.key_dim], cfg.scene_dim);
    params.add_uniform("cross_attn.wv", &[cfg.scene_dim, cfg.value_dim], cfg.scene_dim);
    params.add_uniform("cross_attn.wo", &[cfg.value_dim, cfg.graph_dim], cfg.value_dim);
}

/// Per-(pedestrian, timestep) attention over the scene-token bank:
/// `softmax(Q K^T / sqrt(d_k)) V`, projected back to the graph width.
/// Returns `(output [N, T, D_g], attention [N*T, S])`.
pub fn cross_attention<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundParams,
    graph_features: TensorId,
    scene_tokens: TensorId,
) -> Result<(TensorId, TensorId), ModelError> {
    let gshape = tape.shape(graph_features).to_vec();
    let sshape = tape.shape(scene_tokens).to_vec();
    if gshape.len() != 3 || sshape.len() != 2 {
        return Err(ModelError::Config(format!(
            "cross attention expects [N, T, D] queries and [S, D] tokens, got {gshape:?} and {sshape:?}"
        )));
    }
    let (n, t, d) = (gshape[0], gshape[1], gshape[2]);
    let wq = bound.id("cross_attn.wq");
    let d_k = tape.shape(wq)[1];

    let queries_flat = tape.reshape(graph_features, &[n * t, d])?;
    let q = tape.matmul(queries_flat, wq)?;
    let k = tape.matmul(scene_tokens, bound.id("cross_attn.wk"))?;
    let v = tape.matmul(scene_tokens, bound.id("cross_attn.wv"))?;
    let k_t = tape.permute(k, &[1, 0])?;
    let logits = tape.matmul(q, k_t)?;
    let logits = tape.scale(logits, 1.0 / (d_k as f64).sqrt())?;
    let attention = tape.softmax(logits, 1)?;
    let pooled = tape.matmul(attention, v)?;
    let out = tape.matmul(pooled, bound.id("cross_attn.wo"))?;
    let out = tape.reshape(out, &[n, t, d])?;
    Ok((out, attention))
}

/// Residual fusion: element-wise sum of the attention output and the
/// original graph features.
pub fn residual_fuse<T: Scalar>(
    tape: &mut Tape<T>,
    attention_out: TensorId,
    graph_features: TensorId,
) -> Result<TensorId, ModelError> {
    if tape.shape(attention_out) != tape.shape(graph_features) {
        return Err(ModelError::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "residual_fuse",
            lhs: tape.shape(attention_out).to_vec(),
            rhs: tape.shape(graph_features).to_vec(),
        }));
    }
    Ok(tape.add(attention_out, graph_features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{param_grad_check, pseudo};

    fn cfg(d: usize) -> FusionConfig {
        FusionConfig { graph_dim: d, scene_dim: d, key_dim: d, value_dim: d }
    }

    fn params_for(c: &FusionConfig, seed: u64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new(seed);
        register_params(&mut p, c);
        p
    }

    #[test]
    fn single_token_output_ignores_queries() {
        let c = cfg(3);
        let params = params_for(&c, 1);
        let tokens_data = pseudo(3, 2);
        let run = |graph_data: Vec<f64>| -> Vec<f64> {
            let mut tape: Tape<f64> = Tape::new();
            let bound = params.bind(&mut tape);
            let g = tape.leaf(graph_data, &[2, 2, 3]).unwrap();
            let s = tape.leaf(tokens_data.clone(), &[1, 3]).unwrap();
            let (out, attn) = cross_attention(&mut tape, &bound, g, s).unwrap();
            assert!(tape.data(attn).iter().all(|&a| a == 1.0)); // S = 1
            tape.data(out).to_vec()
        };
        let a = run(pseudo(12, 3));
        let b = run(pseudo(12, 4));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "output depends on queries with a single token");
        }
    }

    #[test]
    fn zero_value_projection_makes_fused_equal_graph() {
        let c = cfg(3);
        let mut params = params_for(&c, 5);
        params.set_values("cross_attn.wv", &vec![0.0; 9]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let gdata = pseudo(2 * 2 * 3, 6);
        let g = tape.leaf(gdata.clone(), &[2, 2, 3]).unwrap();
        let s = tape.leaf(pseudo(4 * 3, 7), &[4, 3]).unwrap();
        let (attended, _) = cross_attention(&mut tape, &bound, g, s).unwrap();
        assert!(tape.data(attended).iter().all(|&v| v == 0.0));
        let fused = residual_fuse(&mut tape, attended, g).unwrap();
        assert_eq!(tape.data(fused), gdata.as_slice());
    }

    #[test]
    fn tiny_case_matches_direct_formula_oracle() {
        // N=1, T=1, S=2, d=2: evaluate softmax(q k^T / sqrt(2)) v w_o by hand.
        let c = cfg(2);
        let mut params = params_for(&c, 8);
        let wq = vec![1.0, 0.0, 0.0, 1.0];
        let wk = vec![0.5, -0.25, 1.0, 0.75];
        let wv = vec![-1.0, 0.5, 0.25, 2.0];
        let wo = vec![1.0, 0.5, -0.5, 0.25];
        params.set_values("cross_attn.wq", &wq).unwrap();
        params.set_values("cross_attn.wk", &wk).unwrap();
        params.set_values("cross_attn.wv", &wv).unwrap();
        params.set_values("cross_attn.wo", &wo).unwrap();
        let gdata = vec![0.3, -0.7];
        let sdata = vec![0.2, 0.9, -0.4, 0.1];
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let g = tape.leaf(gdata.clone(), &[1, 1, 2]).unwrap();
        let s = tape.leaf(sdata.clone(), &[2, 2]).unwrap();
        let (out, attn) = cross_attention(&mut tape, &bound, g, s).unwrap();

        let mat = |x: &[f64], w: &[f64], rows: usize| -> Vec<f64> {
            let mut out = vec![0.0; rows * 2];
            for r in 0..rows {
                for j in 0..2 {
                    for p in 0..2 {
                        out[r * 2 + j] += x[r * 2 + p] * w[p * 2 + j];
                    }
                }
            }
            out
        };
        let q = mat(&gdata, &wq, 1);
        let k = mat(&sdata, &wk, 2);
        let v = mat(&sdata, &wv, 2);
        let logit =
            |i: usize| (q[0] * k[i * 2] + q[1] * k[i * 2 + 1]) / 2.0f64.sqrt();
        let (l0, l1) = (logit(0), logit(1));
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        let (a0, a1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        let pooled = [a0 * v[0] + a1 * v[2], a0 * v[1] + a1 * v[3]];
        let want = mat(&pooled, &wo, 1);
        for (got, want) in tape.data(out).iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((tape.data(attn)[0] - a0).abs() < 1e-12);
        assert!((tape.data(attn)[1] - a1).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let c = cfg(4);
        let params = params_for(&c, 9);
        let mut tape: Tape<f64> = Tape::new();
        let bound = params.bind(&mut tape);
        let g = tape.leaf(pseudo(3 * 2 * 4, 10), &[3, 2, 4]).unwrap();
        let s = tape.leaf(pseudo(5 * 4, 11), &[5, 4]).unwrap();
        let (_, attn) = cross_attention(&mut tape, &bound, g, s).unwrap();
        for r in 0..6 {
            let sum: f64 = tape.data(attn)[r * 5..(r + 1) * 5].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn token_permutation_leaves_output_unchanged() {
        let c = cfg(4);
        let params = params_for(&c, 12);
        let tokens = pseudo(5 * 4, 13);
        let run = |tokens: &[f64]| -> Vec<f64> {
            let mut tape: Tape<f64> = Tape::new();
            let bound = params.bind(&mut tape);
            let g = tape.leaf(pseudo(2 * 3 * 4, 14), &[2, 3, 4]).unwrap();
            let s = tape.leaf(tokens.to_vec(), &[5, 4]).unwrap();
            let (out, _) = cross_attention(&mut tape, &bound, g, s).unwrap();
            tape.data(out).to_vec()
        };
        let base = run(&tokens);
        // rotate the token bank by two slots
        let mut rotated = tokens[2 * 4..].to_vec();
        rotated.extend_from_slice(&tokens[..2 * 4]);
        let permuted = run(&rotated);
        for (a, b) in base.iter().zip(&permuted) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn residual_fuse_is_elementwise_sum() {
        let mut tape: Tape<f64> = Tape::new();
        let a_data = pseudo(12, 15);
        let g_data = pseudo(12, 16);
        let a = tape.leaf(a_data.clone(), &[2, 2, 3]).unwrap();
        let g = tape.leaf(g_data.clone(), &[2, 2, 3]).unwrap();
        let fused = residual_fuse(&mut tape, a, g).unwrap();
        for i in 0..12 {
            assert_eq!(tape.data(fused)[i], a_data[i] + g_data[i]);
        }
        let zero = tape.leaf(vec![0.0; 12], &[2, 2, 3]).unwrap();
        let same = residual_fuse(&mut tape, zero, g).unwrap();
        assert_eq!(tape.data(same), g_data.as_slice());
        let other = residual_fuse(&mut tape, a, zero).unwrap();
        assert_eq!(tape.data(other), a_data.as_slice());
    }

    #[test]
    fn residual_fuse_rejects_shape_mismatch() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(vec![0.0; 12], &[2, 2, 3]).unwrap();
        let b = tape.leaf(vec![0.0; 8], &[2, 2, 2]).unwrap();
        assert!(residual_fuse(&mut tape, a, b).is_err());
    }

    #[test]
    fn cross_attention_gradients_match_finite_differences() {
        let c = cfg(3);
        let mut params = params_for(&c, 17);
        let gdata = pseudo(2 * 2 * 3, 18);
        let sdata = pseudo(4 * 3, 19);
        let err = param_grad_check(&mut params, 4, 1e-5, &|tape, bound| {
            let g = tape.leaf(gdata.clone(), &[2, 2, 3]).unwrap();
            let s = tape.leaf(sdata.clone(), &[4, 3]).unwrap();
            let (attended, _) = cross_attention(tape, bound, g, s).unwrap();
            let fused = residual_fuse(tape, attended, g).unwrap();
            let w = tape.leaf(pseudo(12, 20), &[2, 2, 3]).unwrap();
            let prod = tape.mul(fused, w).unwrap();
            tape.sum_all(prod).unwrap()
        });
        assert!(err < 1e-4, "cross attention rel err {err}");
    }
}
