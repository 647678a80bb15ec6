use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// Gate blocks are stacked in this order in `w_x`, `w_h` and `b`.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// Learnable weights of a single-layer LSTM with a linear read-out, plus the
/// temporal shift `shift` (output position t is read after consuming input t+shift).
///
/// Matrices are row-major. `w_x` is `4H x I`, `w_h` is `4H x H`, `b` is `4H`, with
/// the four gate blocks (input, forget, cell, output) stacked along the rows;
/// `w_out` is `C x H` and `b_out` is `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T = f32> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub shift: usize,
    pub w_x: Vec<T>,
    pub w_h: Vec<T>,
    pub b: Vec<T>,
    pub w_out: Vec<T>,
    pub b_out: Vec<T>,
}

/// Names of the tensors in declaration (and serialization) order.
pub const TENSOR_NAMES: [&str; 5] = ["w_x", "w_h", "b", "w_out", "b_out"];

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize, shift: usize) -> Self {
        let g = 4 * hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            shift,
            w_x: vec![T::zero(); g * input_dim],
            w_h: vec![T::zero(); g * hidden_dim],
            b: vec![T::zero(); g],
            w_out: vec![T::zero(); output_dim * hidden_dim],
            b_out: vec![T::zero(); output_dim],
        }
    }

    /// Weights uniform in [-1/sqrt(H), 1/sqrt(H)], zero biases except the forget
    /// gate bias, which starts at 1.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        shift: usize,
        seed: u64,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, output_dim, shift);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        for w in p
            .w_x
            .iter_mut()
            .chain(p.w_h.iter_mut())
            .chain(p.w_out.iter_mut())
        {
            *w = T::of(rng.random_range(-bound..bound));
        }
        for v in p.gate_mut(GATE_FORGET) {
            *v = T::one();
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.output_dim, self.shift)
    }

    fn gate_mut(&mut self, gate: usize) -> &mut [T] {
        let h = self.hidden_dim;
        &mut self.b[gate * h..(gate + 1) * h]
    }

    pub fn tensors(&self) -> [&[T]; 5] {
        [&self.w_x, &self.w_h, &self.b, &self.w_out, &self.b_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 5] {
        [
            &mut self.w_x,
            &mut self.w_h,
            &mut self.b,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn tensor_shapes(&self) -> [Vec<usize>; 5] {
        let g = 4 * self.hidden_dim;
        [
            vec![g, self.input_dim],
            vec![g, self.hidden_dim],
            vec![g],
            vec![self.output_dim, self.hidden_dim],
            vec![self.output_dim],
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// Checks internal consistency: tensor sizes and finite entries.
    pub fn validate(&self) -> Result<()> {
        let expected: Vec<usize> = self
            .tensor_shapes()
            .iter()
            .map(|s| s.iter().product())
            .collect();
        for ((name, t), n) in TENSOR_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, expected {n}",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::ModelFile(format!("{name} contains non-finite values")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> LstmParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect();
        LstmParams {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            shift: self.shift,
            w_x: conv(&self.w_x),
            w_h: conv(&self.w_h),
            b: conv(&self.b),
            w_out: conv(&self.w_out),
            b_out: conv(&self.b_out),
        }
    }

    /// Visits every scalar of `self` together with the matching entry of `other`.
    pub fn zip_mut<F: FnMut(&mut T, T)>(&mut self, other: &Self, mut f: F) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                f(d, s);
            }
        }
    }
}
