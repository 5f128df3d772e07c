//! Displacement-error metrics and the composite training loss, computed on
//! the tape so they are differentiable end-to-end.

use crate::model::ModelError;
use crate::tensor::{Scalar, Tape, TensorError, TensorId};

fn check_pair<T: Scalar>(
    tape: &Tape<T>,
    op: &'static str,
    pred: TensorId,
    truth: TensorId,
) -> Result<(usize, usize), ModelError> {
    let (ps, ts) = (tape.shape(pred).to_vec(), tape.shape(truth).to_vec());
    if ps != ts || ps.len() != 3 || ps[2] != 2 {
        return Err(ModelError::Tensor(TensorError::ShapeMismatch { op, lhs: ps, rhs: ts }));
    }
    Ok((ps[0], ps[1]))
}

/// Average displacement error: mean Euclidean distance over all pedestrians
/// and predicted steps. Scalar tensor, meters.
pub fn ade<T: Scalar>(
    tape: &mut Tape<T>,
    pred: TensorId,
    truth: TensorId,
) -> Result<TensorId, ModelError> {
    let (n, t) = check_pair(tape, "ade", pred, truth)?;
    let diff = tape.sub(pred, truth)?;
    let dist = tape.l2norm(diff)?;
    let total = tape.sum_all(dist)?;
    Ok(tape.scale(total, 1.0 / (n * t) as f64)?)
}

/// Final displacement error: mean Euclidean distance at the last predicted
/// step only. Scalar tensor, meters.
pub fn fde<T: Scalar>(
    tape: &mut Tape<T>,
    pred: TensorId,
    truth: TensorId,
) -> Result<TensorId, ModelError> {
    let (n, t) = check_pair(tape, "fde", pred, truth)?;
    let pred_last = tape.slice(pred, 1, t - 1, 1)?;
    let truth_last = tape.slice(truth, 1, t - 1, 1)?;
    let diff = tape.sub(pred_last, truth_last)?;
    let dist = tape.l2norm(diff)?;
    let total = tape.sum_all(dist)?;
    Ok(tape.scale(total, 1.0 / n as f64)?)
}

/// Composite loss ADE + FDE. Returns `(loss, ade, fde)` sharing one forward
/// evaluation, so `loss == ade + fde` holds exactly.
pub fn composite_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pred: TensorId,
    truth: TensorId,
) -> Result<(TensorId, TensorId, TensorId), ModelError> {
    let a = ade(tape, pred, truth)?;
    let f = fde(tape, pred, truth)?;
    let loss = tape.add(a, f)?;
    Ok((loss, a, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::pseudo;
    use crate::tensor::gradcheck::{max_relative_error, numeric_gradient};

    /// Brute-force double-loop references, independent of the tape path.
    fn ade_oracle(pred: &[f64], truth: &[f64], n: usize, t: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for s in 0..t {
                let dx = pred[(i * t + s) * 2] - truth[(i * t + s) * 2];
                let dy = pred[(i * t + s) * 2 + 1] - truth[(i * t + s) * 2 + 1];
                acc += (dx * dx + dy * dy).sqrt();
            }
        }
        acc / (n * t) as f64
    }

    fn fde_oracle(pred: &[f64], truth: &[f64], n: usize, t: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let s = t - 1;
            let dx = pred[(i * t + s) * 2] - truth[(i * t + s) * 2];
            let dy = pred[(i * t + s) * 2 + 1] - truth[(i * t + s) * 2 + 1];
            acc += (dx * dx + dy * dy).sqrt();
        }
        acc / n as f64
    }

    fn eval(pred: &[f64], truth: &[f64], n: usize, t: usize) -> (f64, f64, f64) {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.leaf(pred.to_vec(), &[n, t, 2]).unwrap();
        let y = tape.leaf(truth.to_vec(), &[n, t, 2]).unwrap();
        let (loss, a, f) = composite_loss(&mut tape, p, y).unwrap();
        (tape.scalar_value(loss), tape.scalar_value(a), tape.scalar_value(f))
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let truth = pseudo(3 * 4 * 2, 1);
        let (loss, a, f) = eval(&truth, &truth, 3, 4);
        assert_eq!(a, 0.0);
        assert_eq!(f, 0.0);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn three_four_five_offset_gives_exactly_five() {
        let truth = vec![1.0, 2.0];
        let pred = vec![4.0, 6.0]; // offset (3, 4)
        let (_, a, f) = eval(&pred, &truth, 1, 1);
        assert_eq!(a, 5.0);
        assert_eq!(f, 5.0);
    }

    #[test]
    fn fde_is_mean_of_final_offsets() {
        // two pedestrians, final offsets (0, 1) and (0, 3) -> 2.0
        let t = 2;
        let truth = vec![0.0; 2 * t * 2];
        let mut pred = vec![0.0; 2 * t * 2];
        pred[(t - 1) * 2 + 1] = 1.0; // ped 0 final
        pred[(t + t - 1) * 2 + 1] = 3.0; // ped 1 final
        let (_, _, f) = eval(&pred, &truth, 2, t);
        assert_eq!(f, 2.0);
    }

    #[test]
    fn random_cases_match_double_loop_oracle() {
        for salt in 0..20 {
            let pred = pseudo(3 * 12 * 2, 100 + salt);
            let truth = pseudo(3 * 12 * 2, 200 + salt);
            let (loss, a, f) = eval(&pred, &truth, 3, 12);
            let (wa, wf) = (ade_oracle(&pred, &truth, 3, 12), fde_oracle(&pred, &truth, 3, 12));
            assert!((a - wa).abs() < 1e-9, "ade {a} vs {wa}");
            assert!((f - wf).abs() < 1e-9, "fde {f} vs {wf}");
            assert_eq!(loss, a + f, "composite loss must be the exact sum");
        }
    }

    #[test]
    fn single_step_horizon_makes_ade_equal_fde() {
        let pred = pseudo(4 * 1 * 2, 31);
        let truth = pseudo(4 * 1 * 2, 32);
        let (loss, a, f) = eval(&pred, &truth, 4, 1);
        assert_eq!(a, f);
        assert_eq!(loss, 2.0 * a);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.leaf(vec![0.0; 8], &[2, 2, 2]).unwrap();
        let y = tape.leaf(vec![0.0; 12], &[2, 3, 2]).unwrap();
        assert!(matches!(
            ade(&mut tape, p, y),
            Err(ModelError::Tensor(TensorError::ShapeMismatch { .. }))
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let truth = pseudo(2 * 3 * 2, 41);
        let pred0 = pseudo(2 * 3 * 2, 42);
        let run = |pred: &[f64], grad: bool| -> (f64, Vec<f64>) {
            let mut tape: Tape<f64> = Tape::new();
            let p = tape.leaf_grad(pred.to_vec(), &[2, 3, 2]).unwrap();
            let y = tape.leaf(truth.clone(), &[2, 3, 2]).unwrap();
            let (loss, _, _) = composite_loss(&mut tape, p, y).unwrap();
            let value = tape.scalar_value(loss);
            let g = if grad {
                tape.backward(loss).unwrap();
                tape.grad(p).unwrap().to_vec()
            } else {
                Vec::new()
            };
            (value, g)
        };
        let (_, analytic) = run(&pred0, true);
        let numeric = numeric_gradient(&mut |x: &[f64]| run(x, false).0, &pred0, 1e-5);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "loss rel err {err}");
    }
}
