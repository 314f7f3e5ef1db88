//! Deterministic model generators shared by the test suites.

use nalgebra::DMatrix;

use crate::model::{CubicTensor, MechModel, QuadraticTensor};

/// Small deterministic PRNG (SplitMix64) so tests need no external seed state.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }
}

/// Random SPD mass/stiffness with Rayleigh damping plus modest quadratic and
/// cubic tensors; frequencies are kept O(1) and well separated.
pub fn random_proportional_model(ndof: usize, seed: u64) -> MechModel {
    let mut rng = SplitMix64(0xD1CE0000 + seed);
    let mut randm = |scale: f64| {
        DMatrix::from_fn(ndof, ndof, |_, _| scale * rng.next_f64())
    };
    let q = randm(0.4);
    let mass = DMatrix::identity(ndof, ndof) + &q * q.transpose();
    let r = randm(0.6);
    let mut stiffness = &r * r.transpose();
    for i in 0..ndof {
        stiffness[(i, i)] += 1.0 + 1.5 * i as f64;
    }
    let damping = 0.004 * &mass + 0.002 * &stiffness;

    let mut raw3 = Vec::new();
    let mut raw4 = Vec::new();
    for i in 0..ndof {
        for j in 0..ndof {
            for k in j..ndof {
                raw3.push((i, j, k, 0.3 * rng.next_f64()));
                for l in k..ndof {
                    raw4.push((i, j, k, l, 0.2 * rng.next_f64()));
                }
            }
        }
    }

    MechModel::new(
        mass,
        damping,
        stiffness,
        QuadraticTensor::from_raw(&raw3),
        CubicTensor::from_raw(&raw4),
        Vec::new(),
    )
    .expect("generated model is valid")
}
