//! Shared helpers for module tests: finite-difference checks through whole
//! forward passes, probing a deterministic subset of parameter coordinates.

use crate::tensor::gradcheck::{max_relative_error, probe_coords};
use crate::tensor::{BoundParams, ParameterSet, Tape, TensorId};

/// Max relative error between reverse-mode parameter gradients and central
/// finite differences of the scalar loss produced by `forward`. Probes up to
/// `probes_per_param` coordinates of every parameter.
pub fn param_grad_check(
    params: &mut ParameterSet<f64>,
    probes_per_param: usize,
    eps: f64,
    forward: &dyn Fn(&mut Tape<f64>, &BoundParams) -> TensorId,
) -> f64 {
    let eval = |params: &ParameterSet<f64>| -> f64 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = forward(&mut tape, &bound);
        tape.scalar_value(loss)
    };

    // analytic gradients
    params.zero_grads();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = forward(&mut tape, &bound);
    tape.backward(loss).expect("backward over test forward");
    params.absorb_grads(&tape, &bound);

    let names: Vec<String> = params.iter().map(|(n, _, _)| n.to_string()).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for name in &names {
        let grads = params.grad_of(name).unwrap().to_vec();
        let values = params.values(name).unwrap().to_vec();
        for &c in &probe_coords(values.len(), probes_per_param) {
            analytic.push(grads[c]);
            let mut plus = values.clone();
            plus[c] += eps;
            params.set_values(name, &plus).unwrap();
            let fp = eval(params);
            let mut minus = values.clone();
            minus[c] -= eps;
            params.set_values(name, &minus).unwrap();
            let fm = eval(params);
            params.set_values(name, &values).unwrap();
            numeric.push((fp - fm) / (2.0 * eps));
        }
    }
    params.zero_grads();
    max_relative_error(&analytic, &numeric)
}

/// Deterministic pseudo-random values in roughly [-1, 1].
pub fn pseudo(n: usize, salt: u64) -> Vec<f64> {
    let mut state = salt.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = ((state >> 11) as f64) * (1.0 / (1u64 << 53) as f64);
            2.0 * u - 1.0
        })
        .collect()
}
