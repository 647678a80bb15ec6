use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::cell::sigmoid;
use super::params::LstmParams;
use super::Scalar;

/// One training sequence: `inputs` holds `labels.len()` rows of `input_dim` values.
#[derive(Debug, Clone, Copy)]
pub struct SequenceRef<'a, T> {
    pub inputs: &'a [T],
    pub labels: &'a [u8],
}

impl<T> SequenceRef<'_, T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Inverted dropout on the hidden state before the read-out.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// Buffers reused across batches. Rows are laid out step-major: row `s * B + b`
/// holds sequence `b` at step `s`.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    x: Vec<T>,
    gates: Vec<T>,
    c: Vec<T>,
    tc: Vec<T>,
    h: Vec<T>,
    mask: Vec<T>,
    hd: Vec<T>,
    logits: Vec<T>,
    dh_out: Vec<T>,
    dh: Vec<T>,
    dc: Vec<T>,
    valid: Vec<bool>,
}

fn resize<T: Scalar>(v: &mut Vec<T>, n: usize) {
    v.clear();
    v.resize(n, T::zero());
}

struct Shape {
    batch: usize,
    steps: usize,
    out_rows: usize,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            x: Vec::new(),
            gates: Vec::new(),
            c: Vec::new(),
            tc: Vec::new(),
            h: Vec::new(),
            mask: Vec::new(),
            hd: Vec::new(),
            logits: Vec::new(),
            dh_out: Vec::new(),
            dh: Vec::new(),
            dc: Vec::new(),
            valid: Vec::new(),
        }
    }

    /// Runs the batch forward, leaving the activations and logits in place.
    /// Sequences are padded by repeating their last input; the loss is later
    /// masked to each sequence's own length.
    fn forward(
        &mut self,
        p: &LstmParams<T>,
        batch: &[SequenceRef<'_, T>],
        dropout: Option<Dropout<'_>>,
    ) -> Shape {
        let (n_in, n_h, n_c, d) = (p.input_dim, p.hidden_dim, p.output_dim, p.shift);
        let g4 = 4 * n_h;
        let nb = batch.len();
        let max_len = batch.iter().map(|s| s.len()).max().unwrap_or(0);
        let steps = max_len + d;
        let rows = steps * nb;
        let out_rows = max_len * nb;

        resize(&mut self.x, rows * n_in);
        for s in 0..steps {
            for (b, seq) in batch.iter().enumerate() {
                let src = s.min(seq.len() - 1);
                let dst = (s * nb + b) * n_in;
                self.x[dst..dst + n_in].copy_from_slice(&seq.inputs[src * n_in..(src + 1) * n_in]);
            }
        }

        resize(&mut self.gates, rows * g4);
        T::gemm(rows, n_in, g4, &self.x, false, &p.w_x, true, T::zero(), &mut self.gates);
        for row in self.gates.chunks_exact_mut(g4) {
            for (z, bias) in row.iter_mut().zip(&p.b) {
                *z = *z + *bias;
            }
        }

        resize(&mut self.c, rows * n_h);
        resize(&mut self.tc, rows * n_h);
        resize(&mut self.h, rows * n_h);
        let blk = nb * n_h;
        for s in 0..steps {
            let gs = &mut self.gates[s * nb * g4..(s + 1) * nb * g4];
            if s > 0 {
                let h_prev = &self.h[(s - 1) * blk..s * blk];
                T::gemm(nb, n_h, g4, h_prev, false, &p.w_h, true, T::one(), gs);
            }
            for b in 0..nb {
                let z = &mut gs[b * g4..(b + 1) * g4];
                let base = s * blk + b * n_h;
                for u in 0..n_h {
                    let i = sigmoid(z[u]);
                    let f = sigmoid(z[n_h + u]);
                    let g = z[2 * n_h + u].tanh();
                    let o = sigmoid(z[3 * n_h + u]);
                    z[u] = i;
                    z[n_h + u] = f;
                    z[2 * n_h + u] = g;
                    z[3 * n_h + u] = o;
                    let c_prev = if s > 0 { self.c[base - blk + u] } else { T::zero() };
                    let c = f * c_prev + i * g;
                    let tc = c.tanh();
                    self.c[base + u] = c;
                    self.tc[base + u] = tc;
                    self.h[base + u] = o * tc;
                }
            }
        }

        // Output position t reads the hidden state after step t + d.
        let h_read = &self.h[d * blk..];
        resize(&mut self.hd, out_rows * n_h);
        resize(&mut self.mask, 0);
        match dropout {
            Some(Dropout { rate, rng }) if rate > 0.0 => {
                let keep = T::of(1.0 / (1.0 - rate));
                self.mask.extend((0..out_rows * n_h).map(|_| {
                    if rng.random_bool(rate) {
                        T::zero()
                    } else {
                        keep
                    }
                }));
                for ((o, h), m) in self.hd.iter_mut().zip(h_read).zip(&self.mask) {
                    *o = *h * *m;
                }
            }
            _ => self.hd.copy_from_slice(&h_read[..out_rows * n_h]),
        }

        resize(&mut self.logits, out_rows * n_c);
        T::gemm(out_rows, n_h, n_c, &self.hd, false, &p.w_out, true, T::zero(), &mut self.logits);
        for row in self.logits.chunks_exact_mut(n_c) {
            for (z, bias) in row.iter_mut().zip(&p.b_out) {
                *z = *z + *bias;
            }
        }

        self.valid.clear();
        for t in 0..max_len {
            self.valid.extend(batch.iter().map(|seq| t < seq.len()));
        }

        Shape {
            batch: nb,
            steps,
            out_rows,
        }
    }

    /// Mean cross-entropy over valid rows; replaces the logits by dL/dlogits.
    fn loss_and_dlogits(&mut self, batch: &[SequenceRef<'_, T>], n_c: usize, shape: &Shape) -> f64 {
        let n_valid = self.valid.iter().filter(|v| **v).count().max(1) as f64;
        let mut total = 0.0;
        let mut probs = vec![0.0f64; n_c];
        for (q, row) in self.logits.chunks_exact_mut(n_c).enumerate() {
            if !self.valid[q] {
                row.fill(T::zero());
                continue;
            }
            let (t, b) = (q / shape.batch, q % shape.batch);
            let y = batch[b].labels[t] as usize;
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (pk, z) in probs.iter_mut().zip(row.iter()) {
                *pk = (z.as_f64() - max).exp();
                sum += *pk;
            }
            total += sum.ln() + max - row[y].as_f64();
            for (k, z) in row.iter_mut().enumerate() {
                let target = if k == y { 1.0 } else { 0.0 };
                *z = T::of((probs[k] / sum - target) / n_valid);
            }
        }
        total / n_valid
    }

    fn backward(&mut self, p: &LstmParams<T>, shape: &Shape, grads: &mut LstmParams<T>) {
        let (n_in, n_h, n_c, d) = (p.input_dim, p.hidden_dim, p.output_dim, p.shift);
        let g4 = 4 * n_h;
        let Shape {
            batch: nb,
            steps,
            out_rows,
        } = *shape;
        let rows = steps * nb;
        let blk = nb * n_h;
        let dlogits = &self.logits;

        T::gemm(n_c, out_rows, n_h, dlogits, true, &self.hd, false, T::zero(), &mut grads.w_out);
        grads.b_out.fill(T::zero());
        for row in dlogits.chunks_exact(n_c) {
            for (g, v) in grads.b_out.iter_mut().zip(row) {
                *g = *g + *v;
            }
        }

        resize(&mut self.dh_out, out_rows * n_h);
        T::gemm(out_rows, n_c, n_h, dlogits, false, &p.w_out, false, T::zero(), &mut self.dh_out);
        if !self.mask.is_empty() {
            for (g, m) in self.dh_out.iter_mut().zip(&self.mask) {
                *g = *g * *m;
            }
        }

        resize(&mut self.dh, blk);
        resize(&mut self.dc, blk);
        let one = T::one();
        for s in (0..steps).rev() {
            if s >= d {
                let src = &self.dh_out[(s - d) * blk..(s - d + 1) * blk];
                for (a, b) in self.dh.iter_mut().zip(src) {
                    *a = *a + *b;
                }
            }
            let gs = &mut self.gates[s * nb * g4..(s + 1) * nb * g4];
            for b in 0..nb {
                let z = &mut gs[b * g4..(b + 1) * g4];
                let base = s * blk + b * n_h;
                for u in 0..n_h {
                    let (i, f, g, o) = (z[u], z[n_h + u], z[2 * n_h + u], z[3 * n_h + u]);
                    let tc = self.tc[base + u];
                    let c_prev = if s > 0 { self.c[base - blk + u] } else { T::zero() };
                    let dh = self.dh[b * n_h + u];
                    let dc = self.dc[b * n_h + u] + dh * o * (one - tc * tc);
                    z[u] = dc * g * i * (one - i);
                    z[n_h + u] = dc * c_prev * f * (one - f);
                    z[2 * n_h + u] = dc * i * (one - g * g);
                    z[3 * n_h + u] = dh * tc * o * (one - o);
                    self.dc[b * n_h + u] = dc * f;
                }
            }
            if s > 0 {
                T::gemm(nb, g4, n_h, gs, false, &p.w_h, false, T::zero(), &mut self.dh);
            }
        }

        // `gates` now holds dL/dz for every step.
        if steps > 1 {
            let k = (steps - 1) * nb;
            T::gemm(g4, k, n_h, &self.gates[nb * g4..], true, &self.h[..k * n_h], false, T::zero(), &mut grads.w_h);
        } else {
            grads.w_h.fill(T::zero());
        }
        T::gemm(g4, rows, n_in, &self.gates, true, &self.x, false, T::zero(), &mut grads.w_x);
        grads.b.fill(T::zero());
        for row in self.gates.chunks_exact(g4) {
            for (g, v) in grads.b.iter_mut().zip(row) {
                *g = *g + *v;
            }
        }
    }
}

fn check_batch<T: Scalar>(p: &LstmParams<T>, batch: &[SequenceRef<'_, T>]) {
    assert!(!batch.is_empty(), "empty batch");
    for seq in batch {
        assert!(!seq.is_empty(), "empty sequence in batch");
        assert_eq!(seq.inputs.len(), seq.len() * p.input_dim, "input rows vs labels");
        assert!(
            seq.labels.iter().all(|&y| (y as usize) < p.output_dim),
            "label out of range"
        );
    }
}

/// Mean per-step cross-entropy of a batch and its gradient, written into `grads`.
pub fn loss_and_gradients<T: Scalar>(
    p: &LstmParams<T>,
    batch: &[SequenceRef<'_, T>],
    dropout: Option<Dropout<'_>>,
    grads: &mut LstmParams<T>,
    ws: &mut Workspace<T>,
) -> f64 {
    check_batch(p, batch);
    let shape = ws.forward(p, batch, dropout);
    let loss = ws.loss_and_dlogits(batch, p.output_dim, &shape);
    ws.backward(p, &shape, grads);
    loss
}

/// Mean per-step cross-entropy of a batch without dropout.
pub fn batch_loss<T: Scalar>(
    p: &LstmParams<T>,
    batch: &[SequenceRef<'_, T>],
    ws: &mut Workspace<T>,
) -> f64 {
    check_batch(p, batch);
    let shape = ws.forward(p, batch, None);
    ws.loss_and_dlogits(batch, p.output_dim, &shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cell::forward_logits;
    use crate::model::loss::log_softmax;
    use rand::SeedableRng;

    struct Case {
        inputs: Vec<Vec<f64>>,
        labels: Vec<Vec<u8>>,
    }

    impl Case {
        fn random(lens: &[usize], n_in: usize, n_c: usize, seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = lens
                .iter()
                .map(|&l| (0..l * n_in).map(|_| rng.random_range(-1.5..1.5)).collect())
                .collect();
            let labels = lens
                .iter()
                .map(|&l| (0..l).map(|_| rng.random_range(0..n_c as u8)).collect())
                .collect();
            Self { inputs, labels }
        }

        fn refs(&self) -> Vec<SequenceRef<'_, f64>> {
            self.inputs
                .iter()
                .zip(&self.labels)
                .map(|(x, y)| SequenceRef { inputs: x, labels: y })
                .collect()
        }
    }

    fn random_params(n_in: usize, n_h: usize, n_c: usize, shift: usize, seed: u64) -> LstmParams<f64> {
        let mut p = LstmParams::<f64>::init(n_in, n_h, n_c, shift, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for v in p.b.iter_mut().chain(p.b_out.iter_mut()) {
            *v += rng.random_range(-0.3..0.3);
        }
        p
    }

    /// Loss recomputed through the per-sequence streaming predictor.
    fn streaming_loss(p: &LstmParams<f64>, case: &Case) -> f64 {
        let mut total = 0.0;
        let mut n = 0;
        for (x, y) in case.inputs.iter().zip(&case.labels) {
            let rows: Vec<Vec<f64>> = x.chunks(p.input_dim).map(|r| r.to_vec()).collect();
            for (logits, &label) in forward_logits(p, &rows).iter().zip(y) {
                total -= log_softmax(logits)[label as usize];
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn batched_loss_matches_streaming_inference() {
        for shift in [0, 1, 4] {
            let p = random_params(5, 7, 12, shift, 3);
            let case = Case::random(&[9, 3, 14, 1], 5, 12, 8);
            let mut ws = Workspace::new();
            let got = batch_loss(&p, &case.refs(), &mut ws);
            assert!((got - streaming_loss(&p, &case)).abs() < 1e-12, "shift {shift}");
        }
    }

    fn max_relative_error(p: &LstmParams<f64>, case: &Case) -> f64 {
        let mut ws = Workspace::new();
        let mut grads = p.zeros_like();
        loss_and_gradients(p, &case.refs(), None, &mut grads, &mut ws);
        let eps = 1e-5;
        let mut probe = p.clone();
        let mut worst = 0.0f64;
        for k in 0..5 {
            for j in 0..probe.tensors()[k].len() {
                let orig = probe.tensors()[k][j];
                probe.tensors_mut()[k][j] = orig + eps;
                let up = batch_loss(&probe, &case.refs(), &mut ws);
                probe.tensors_mut()[k][j] = orig - eps;
                let down = batch_loss(&probe, &case.refs(), &mut ws);
                probe.tensors_mut()[k][j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.tensors()[k][j];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, shift) in [(1, 0), (2, 3)] {
            let p = random_params(5, 8, 12, shift, seed);
            let case = Case::random(&[20, 13], 5, 12, seed + 100);
            let err = max_relative_error(&p, &case);
            assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
        }
    }

    #[test]
    fn duplicated_batch_leaves_gradients_unchanged() {
        let p = random_params(5, 6, 12, 2, 4);
        let case = Case::random(&[11, 6, 8], 5, 12, 5);
        let mut ws = Workspace::new();
        let mut g1 = p.zeros_like();
        let l1 = loss_and_gradients(&p, &case.refs(), None, &mut g1, &mut ws);
        let mut doubled = case.refs();
        doubled.extend(case.refs());
        let mut g2 = p.zeros_like();
        let l2 = loss_and_gradients(&p, &doubled, None, &mut g2, &mut ws);
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_bias_gradient_sums_to_zero() {
        let p = random_params(5, 6, 12, 1, 6);
        let case = Case::random(&[10, 4], 5, 12, 7);
        let mut grads = p.zeros_like();
        loss_and_gradients(&p, &case.refs(), None, &mut grads, &mut Workspace::new());
        assert!(grads.b_out.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn dropout_is_seeded_and_rescales() {
        let p = random_params(5, 6, 12, 0, 6);
        let case = Case::random(&[10, 4], 5, 12, 7);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut grads = p.zeros_like();
            let loss = loss_and_gradients(
                &p,
                &case.refs(),
                Some(Dropout { rate: 0.5, rng: &mut rng }),
                &mut grads,
                &mut Workspace::new(),
            );
            (loss, grads)
        };
        let (a, ga) = run(1);
        let (b, gb) = run(1);
        let (c, _) = run(2);
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        assert_ne!(a, c);
        let mut grads = p.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero_rate = loss_and_gradients(
            &p,
            &case.refs(),
            Some(Dropout { rate: 0.0, rng: &mut rng }),
            &mut grads,
            &mut Workspace::new(),
        );
        assert_eq!(zero_rate, batch_loss(&p, &case.refs(), &mut Workspace::new()));
    }
}
