use super::params::LstmParams;
use super::Scalar;
use crate::error::{Error, Result};

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dot product with eight independent partial sums so the loop vectorises.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T = f32> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![T::zero(); hidden_dim],
            c: vec![T::zero(); hidden_dim],
        }
    }
}

/// Scratch space for [`step_in_place`]; holds the 4H gate pre-activations.
#[derive(Debug, Clone)]
pub struct StepScratch<T> {
    gates: Vec<T>,
}

impl<T: Scalar> StepScratch<T> {
    pub fn new(hidden_dim: usize) -> Self {
        Self {
            gates: vec![T::zero(); 4 * hidden_dim],
        }
    }
}

/// One LSTM step, updating `state` in place:
/// i, f, o = sigmoid, g = tanh, c' = f*c + i*g, h' = o*tanh(c').
pub fn step_in_place<T: Scalar>(
    p: &LstmParams<T>,
    x: &[T],
    state: &mut LstmState<T>,
    scratch: &mut StepScratch<T>,
) {
    let (n_in, n_h) = (p.input_dim, p.hidden_dim);
    debug_assert_eq!(x.len(), n_in);
    for (r, z) in scratch.gates.iter_mut().enumerate() {
        let wx = &p.w_x[r * n_in..(r + 1) * n_in];
        let wh = &p.w_h[r * n_h..(r + 1) * n_h];
        *z = p.b[r] + dot(wx, x) + dot(wh, &state.h);
    }
    let (zi, rest) = scratch.gates.split_at(n_h);
    let (zf, rest) = rest.split_at(n_h);
    let (zg, zo) = rest.split_at(n_h);
    for u in 0..n_h {
        let i = sigmoid(zi[u]);
        let f = sigmoid(zf[u]);
        let g = zg[u].tanh();
        let o = sigmoid(zo[u]);
        let c = f * state.c[u] + i * g;
        state.c[u] = c;
        state.h[u] = o * c.tanh();
    }
}

/// Pure form of one LSTM step with dimension checks.
pub fn lstm_step<T: Scalar>(
    p: &LstmParams<T>,
    x: &[T],
    state: &LstmState<T>,
) -> Result<LstmState<T>> {
    if x.len() != p.input_dim {
        return Err(Error::Dimension(format!(
            "input has {} entries, model expects {}",
            x.len(),
            p.input_dim
        )));
    }
    if state.h.len() != p.hidden_dim || state.c.len() != p.hidden_dim {
        return Err(Error::Dimension(format!(
            "state has h={} c={}, model hidden size is {}",
            state.h.len(),
            state.c.len(),
            p.hidden_dim
        )));
    }
    let mut next = state.clone();
    step_in_place(p, x, &mut next, &mut StepScratch::new(p.hidden_dim));
    Ok(next)
}

/// Linear read-out `w_out * h + b_out`.
pub fn output_logits<T: Scalar>(p: &LstmParams<T>, h: &[T], out: &mut [T]) {
    let n_h = p.hidden_dim;
    for (k, o) in out.iter_mut().enumerate() {
        let row = &p.w_out[k * n_h..(k + 1) * n_h];
        *o = p.b_out[k] + dot(row, h);
    }
}

/// Step-at-a-time inference with the temporal shift.
///
/// The prediction for position t is read after input t + shift has been consumed,
/// so nothing is emitted for the first `shift` inputs. `finish` feeds the last input
/// again until every consumed position has a prediction.
#[derive(Debug, Clone)]
pub struct ShiftedPredictor<T = f32> {
    state: LstmState<T>,
    scratch: StepScratch<T>,
    last_input: Option<Vec<T>>,
    consumed: usize,
    steps_taken: usize,
    emitted: usize,
}

impl<T: Scalar> ShiftedPredictor<T> {
    pub fn new(p: &LstmParams<T>) -> Self {
        Self {
            state: LstmState::zeros(p.hidden_dim),
            scratch: StepScratch::new(p.hidden_dim),
            last_input: None,
            consumed: 0,
            steps_taken: 0,
            emitted: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn state(&self) -> &LstmState<T> {
        &self.state
    }

    fn advance(&mut self, p: &LstmParams<T>, x: &[T]) -> Option<Vec<T>> {
        step_in_place(p, x, &mut self.state, &mut self.scratch);
        self.steps_taken += 1;
        if self.steps_taken > p.shift {
            let mut logits = vec![T::zero(); p.output_dim];
            output_logits(p, &self.state.h, &mut logits);
            self.emitted += 1;
            Some(logits)
        } else {
            None
        }
    }

    /// Consumes one input; returns the logits for position `consumed - 1 - shift`
    /// once that position has enough lookahead.
    pub fn push(&mut self, p: &LstmParams<T>, x: &[T]) -> Option<Vec<T>> {
        assert_eq!(x.len(), p.input_dim, "input dimension");
        self.consumed += 1;
        self.last_input = Some(x.to_vec());
        self.advance(p, x)
    }

    /// Emits the remaining predictions at end of stream.
    pub fn finish(&mut self, p: &LstmParams<T>) -> Vec<Vec<T>> {
        let mut out = Vec::new();
        let Some(last) = self.last_input.clone() else {
            return out;
        };
        while self.emitted < self.consumed {
            if let Some(logits) = self.advance(p, &last) {
                out.push(logits);
            }
        }
        out
    }
}

/// Whole-sequence inference: one logit vector per input, same arithmetic as
/// feeding [`ShiftedPredictor`] one input at a time.
pub fn forward_logits<T: Scalar>(p: &LstmParams<T>, inputs: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut predictor = ShiftedPredictor::new(p);
    let mut out: Vec<Vec<T>> = inputs.iter().filter_map(|x| predictor.push(p, x)).collect();
    out.extend(predictor.finish(p));
    out
}
