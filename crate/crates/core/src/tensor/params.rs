use std::collections::HashMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numel, Scalar, Tape, TensorError, TensorId};

struct Entry<T> {
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
    grad_set: bool,
}

/// Named collection of trainable tensors. Enumeration order is the
/// construction order, so a fixed construction sequence plus a fixed seed
/// yields bit-identical parameters.
pub struct ParameterSet<T: Scalar> {
    entries: Vec<Entry<T>>,
    index: HashMap<String, usize>,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new(rng_seed: u64) -> Self {
        ParameterSet {
            entries: Vec::new(),
            index: HashMap::new(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<T>) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        assert_eq!(numel(&shape), data.len());
        let grad = vec![T::zero(); data.len()];
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry { name: name.to_string(), shape, data, grad, grad_set: false });
    }

    /// Fan-in-scaled uniform init: values drawn from U(-b, b), b = sqrt(6 / fan_in).
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = numel(shape);
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let u = next_unit(&mut self.rng);
            data.push(T::from_f64((2.0 * u - 1.0) * bound));
        }
        self.insert(name, shape.to_vec(), data);
    }

    /// Constant-initialized parameter (biases at 0, PReLU slopes at 0.25).
    pub fn add_constant(&mut self, name: &str, shape: &[usize], value: f64) {
        let data = vec![T::from_f64(value); numel(shape)];
        self.insert(name, shape.to_vec(), data);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn shape_of(&self, name: &str) -> Option<&[usize]> {
        self.index.get(name).map(|&i| self.entries[i].shape.as_slice())
    }

    pub fn values(&self, name: &str) -> Option<&[T]> {
        self.index.get(name).map(|&i| self.entries[i].data.as_slice())
    }

    pub fn grad_of(&self, name: &str) -> Option<&[T]> {
        self.index.get(name).map(|&i| self.entries[i].grad.as_slice())
    }

    /// Overwrites a parameter's values (checkpoint restore).
    pub fn set_values(&mut self, name: &str, values: &[T]) -> Result<(), TensorError> {
        let i = *self.index.get(name).ok_or_else(|| TensorError::Contract {
            op: "set_values",
            msg: format!("unknown parameter {name}"),
        })?;
        if values.len() != self.entries[i].data.len() {
            return Err(TensorError::Contract {
                op: "set_values",
                msg: format!("{name}: expected {} values, got {}", self.entries[i].data.len(), values.len()),
            });
        }
        self.entries[i].data.copy_from_slice(values);
        Ok(())
    }

    /// Iterates (name, shape, values) in construction order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[T])> {
        self.entries.iter().map(|e| (e.name.as_str(), e.shape.as_slice(), e.data.as_slice()))
    }

    /// Leases every parameter into `tape` as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let mut ids = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            let id = tape
                .leaf_grad(e.data.clone(), &e.shape)
                .expect("parameter shapes are validated at construction");
            ids.insert(e.name.clone(), id);
        }
        BoundParams { ids }
    }

    /// Pulls gradients accumulated on `tape` back into this set (additively).
    pub fn absorb_grads(&mut self, tape: &Tape<T>, bound: &BoundParams) {
        for e in &mut self.entries {
            if let Some(&id) = bound.ids.get(&e.name) {
                if let Some(g) = tape.grad(id) {
                    for (dst, &src) in e.grad.iter_mut().zip(g) {
                        *dst += src;
                    }
                    e.grad_set = true;
                }
            }
        }
    }

    /// Global L2 norm over all gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for e in &self.entries {
            for &g in &e.grad {
                let v = g.to_f64();
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = T::from_f64(max_norm / norm);
            for e in &mut self.entries {
                for g in &mut e.grad {
                    *g *= s;
                }
            }
        }
    }

    /// One gradient-descent update: p <- p - lr * grad(p), then gradients are
    /// zeroed. Fails if any parameter never received a gradient.
    pub fn sgd_step(&mut self, lr: f64) -> Result<(), TensorError> {
        for e in &self.entries {
            if !e.grad_set {
                return Err(TensorError::MissingGradient { name: e.name.clone() });
            }
        }
        let lr = T::from_f64(lr);
        for e in &mut self.entries {
            for (p, g) in e.data.iter_mut().zip(&mut e.grad) {
                *p = *p - lr * *g;
                *g = T::zero();
            }
            e.grad_set = false;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            for g in &mut e.grad {
                *g = T::zero();
            }
            e.grad_set = false;
        }
    }
}

/// Tape handles for one leased parameter set.
pub struct BoundParams {
    ids: HashMap<String, TensorId>,
}

impl BoundParams {
    /// Panics on unknown names: asking for a parameter that was never
    /// registered is a construction bug, not a runtime condition.
    pub fn id(&self, name: &str) -> TensorId {
        *self.ids.get(name).unwrap_or_else(|| panic!("parameter {name} not bound"))
    }
}

fn next_unit(rng: &mut ChaCha8Rng) -> f64 {
    // 53 uniform mantissa bits -> [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
