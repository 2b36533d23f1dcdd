use std::cell::Cell;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

/// Seeded generator used for every weight initialization.
pub type InitRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> InitRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A named trainable tensor. Clones share the underlying tensor and the
/// frozen flag, so freezing through any handle is visible to all.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
    frozen: Rc<Cell<bool>>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        tensor.set_requires_grad(true);
        Parameter {
            name: name.into(),
            tensor,
            frozen: Rc::new(Cell::new(false)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.get()
    }

    /// Frozen parameters stop requesting gradients and are skipped by every
    /// optimizer.
    pub fn set_frozen(&self, frozen: bool) {
        self.frozen.set(frozen);
        self.tensor.set_requires_grad(!frozen);
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    /// Overwrites the values in place, keeping the handle identity.
    pub fn assign(&self, values: &[f64]) {
        let mut data = self.tensor.data_mut();
        assert_eq!(data.len(), values.len(), "assign length mismatch for {}", self.name);
        data.copy_from_slice(values);
    }
}

/// He-normal initialization, `N(0, 2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut InitRng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::from_vec(data, shape).expect("non-empty shape")
}

/// Order-sensitive 64-bit FNV-1a digest over names and exact value bits.
/// Two parameter lists fingerprint equal iff they are bitwise identical
/// (up to hash collisions).
pub fn fingerprint(params: &[Parameter]) -> u64 {
    const PRIME: u64 = 0x100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for p in params {
        feed(p.name.as_bytes());
        for v in p.tensor.data().iter() {
            feed(&v.to_bits().to_le_bytes());
        }
    }
    h
}
