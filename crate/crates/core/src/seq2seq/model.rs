//! Forward pass and exact backpropagation for the GRU encoder, additive
//! attention and GRU decoder.
//!
//! Per decode step `t`, with previous decoder state `s` and encoder states `h_j`:
//!
//! ```text
//! u_j   = tanh(Wq s + bq + Wk h_j)      e_j = v . u_j      a = softmax(e)
//! c     = sum_j a_j h_j
//! s'    = GRU([emb(y_{t-1}); c], s)
//! p     = softmax(Wo [s'; c] + bo)
//! ```
//!
//! The GRU cell uses `r = sig(Wir x + bir + Whr h + bhr)`, `z` likewise,
//! `n = tanh(Win x + bin + r * (Whn h + bhn))`, `h' = (1 - z) n + z h`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{GruWeights, ModelParams, Scalar, Tensor};
use super::vocab::{PAD, SOS};
use super::Seq2SeqError;

/// One training/evaluation example as token ids. `target` is `SOS .. EOS`,
/// possibly followed by PAD positions that are excluded from the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| *x * *y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out += W x`
fn matvec<T: Scalar>(w: &Tensor<T>, x: &[T], out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(r), x);
    }
}

/// `out += W^T g`
fn matvec_t<T: Scalar>(w: &Tensor<T>, g: &[T], out: &mut [T]) {
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, w.row(r), out);
        }
    }
}

/// `dw += g x^T`
fn outer<T: Scalar>(dw: &mut Tensor<T>, g: &[T], x: &[T]) {
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, x, dw.row_mut(r));
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Softmax in place; returns log of the normalizer (including the max shift).
pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
    max + sum.ln()
}

#[derive(Debug, Clone)]
pub(crate) struct GruStep<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    /// `Whn h + bhn`, needed for the reset-gate gradient.
    hn: Vec<T>,
    h: Vec<T>,
}

fn gru_forward<T: Scalar>(w: &GruWeights<T>, x: Vec<T>, h_prev: Vec<T>) -> GruStep<T> {
    let hd = w.hidden_dim();
    let mut gi = w.b_ih.data.clone();
    matvec(&w.w_ih, &x, &mut gi);
    let mut gh = w.b_hh.data.clone();
    matvec(&w.w_hh, &h_prev, &mut gh);
    let mut r = vec![T::zero(); hd];
    let mut z = vec![T::zero(); hd];
    let mut n = vec![T::zero(); hd];
    let mut h = vec![T::zero(); hd];
    let hn = gh[2 * hd..].to_vec();
    for k in 0..hd {
        r[k] = sigmoid(gi[k] + gh[k]);
        z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
        n[k] = (gi[2 * hd + k] + r[k] * hn[k]).tanh();
        h[k] = (T::one() - z[k]) * n[k] + z[k] * h_prev[k];
    }
    GruStep { x, h_prev, r, z, n, hn, h }
}

/// Accumulates parameter gradients and adds input/previous-state gradients
/// into `dx` and `dh_prev`.
fn gru_backward<T: Scalar>(
    w: &GruWeights<T>,
    g: &mut GruWeights<T>,
    step: &GruStep<T>,
    dh: &[T],
    dx: &mut [T],
    dh_prev: &mut [T],
) {
    let hd = w.hidden_dim();
    let one = T::one();
    let mut da_in = vec![T::zero(); 3 * hd];
    let mut da_hid = vec![T::zero(); 3 * hd];
    for k in 0..hd {
        let (r, z, n) = (step.r[k], step.z[k], step.n[k]);
        dh_prev[k] += dh[k] * z;
        let dn = dh[k] * (one - z);
        let dz = dh[k] * (step.h_prev[k] - n);
        let dan = dn * (one - n * n);
        let dr = dan * step.hn[k];
        let dar = dr * r * (one - r);
        let daz = dz * z * (one - z);
        da_in[k] = dar;
        da_in[hd + k] = daz;
        da_in[2 * hd + k] = dan;
        da_hid[k] = dar;
        da_hid[hd + k] = daz;
        da_hid[2 * hd + k] = dan * r;
    }
    outer(&mut g.w_ih, &da_in, &step.x);
    add_into(&mut g.b_ih.data, &da_in);
    outer(&mut g.w_hh, &da_hid, &step.h_prev);
    add_into(&mut g.b_hh.data, &da_hid);
    matvec_t(&w.w_ih, &da_in, dx);
    matvec_t(&w.w_hh, &da_hid, dh_prev);
}

/// Encoder output for one source sequence.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    layers: Vec<Vec<GruStep<T>>>,
    /// `Wk h_j` for every top-layer state.
    keys: Vec<Vec<T>>,
    /// Initial decoder state.
    s0: Vec<T>,
}

impl<T: Scalar> Encoded<T> {
    fn states(&self) -> impl ExactSizeIterator<Item = &Vec<T>> {
        self.layers.last().expect("at least one layer").iter().map(|s| &s.h)
    }

    pub fn source_len(&self) -> usize {
        self.keys.len()
    }

    pub fn initial_state(&self) -> &[T] {
        &self.s0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderStep<T> {
    input: usize,
    /// `tanh` attention features, one row per source position.
    u: Vec<Vec<T>>,
    pub(crate) alpha: Vec<T>,
    ctx: Vec<T>,
    gru: GruStep<T>,
    pub(crate) probs: Vec<T>,
    /// `log sum exp` of the output logits.
    lse: T,
    logits: Vec<T>,
}

impl<T: Scalar> DecoderStep<T> {
    pub(crate) fn state(&self) -> &[T] {
        &self.gru.h
    }

    pub(crate) fn log_probs(&self) -> impl Iterator<Item = T> + '_ {
        self.logits.iter().map(move |&l| l - self.lse)
    }
}

/// How decoder inputs are chosen after the first (SOS) step.
pub(crate) enum Feed<'a> {
    Teacher,
    /// Gold token with probability `ratio`, otherwise the previous argmax.
    Mixed { ratio: f64, rng: &'a mut ChaCha8Rng },
}

pub(crate) struct Trace<T> {
    enc: Encoded<T>,
    steps: Vec<DecoderStep<T>>,
}

pub(crate) fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss over non-PAD target positions plus per-example attention maps
/// (`[example][step][source position]`).
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub loss: T,
    pub tokens: usize,
    pub attention: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ModelParams<T> {
    pub(crate) fn validate_pair(&self, pair: &Pair) -> Result<usize, Seq2SeqError> {
        let (vs, vt) = (self.config.source_vocab, self.config.target_vocab);
        if pair.source.is_empty() {
            return Err(Seq2SeqError::Input("empty source sequence".into()));
        }
        if let Some(&t) = pair.source.iter().find(|&&t| t >= vs) {
            return Err(Seq2SeqError::Input(format!("source token {t} out of range (vocab {vs})")));
        }
        if pair.target.len() < 2 || pair.target[0] != SOS {
            return Err(Seq2SeqError::Input("target must start with SOS and have at least one output".into()));
        }
        if let Some(&t) = pair.target.iter().find(|&&t| t >= vt) {
            return Err(Seq2SeqError::Input(format!("target token {t} out of range (vocab {vt})")));
        }
        Ok(pair.target[1..].iter().filter(|&&t| t != PAD).count())
    }

    /// Runs the encoder over `source` (token ids assumed in range).
    pub fn encode(&self, source: &[usize]) -> Encoded<T> {
        let hd = self.config.hidden_dim;
        let mut layers: Vec<Vec<GruStep<T>>> = Vec::with_capacity(self.encoder.len());
        for (l, w) in self.encoder.iter().enumerate() {
            let mut h = vec![T::zero(); hd];
            let mut steps = Vec::with_capacity(source.len());
            for t in 0..source.len() {
                let x = match l {
                    0 => self.src_embed.row(source[t]).to_vec(),
                    _ => layers[l - 1][t].h.clone(),
                };
                let step = gru_forward(w, x, h);
                h = step.h.clone();
                steps.push(step);
            }
            layers.push(steps);
        }
        let top = layers.last().expect("at least one layer");
        let keys = top
            .iter()
            .map(|s| {
                let mut k = vec![T::zero(); self.config.attention_dim];
                matvec(&self.att_key, &s.h, &mut k);
                k
            })
            .collect();
        let mut s0 = self.bridge_b.data.clone();
        matvec(&self.bridge_w, &top.last().expect("non-empty source").h, &mut s0);
        s0.iter_mut().for_each(|v| *v = v.tanh());
        Encoded { layers, keys, s0 }
    }

    pub(crate) fn decoder_step(&self, enc: &Encoded<T>, s_prev: &[T], input: usize) -> DecoderStep<T> {
        let (e, hd, a) = (self.config.embed_dim, self.config.hidden_dim, self.config.attention_dim);
        let mut q = self.att_bias.data.clone();
        matvec(&self.att_query, s_prev, &mut q);
        let v = &self.att_score.data;
        let mut u = Vec::with_capacity(enc.keys.len());
        let mut alpha = Vec::with_capacity(enc.keys.len());
        for key in &enc.keys {
            let uj: Vec<T> = (0..a).map(|i| (q[i] + key[i]).tanh()).collect();
            alpha.push(dot(v, &uj));
            u.push(uj);
        }
        softmax_in_place(&mut alpha);
        let mut ctx = vec![T::zero(); hd];
        for (aj, hj) in alpha.iter().zip(enc.states()) {
            axpy(*aj, hj, &mut ctx);
        }
        let mut x = Vec::with_capacity(e + hd);
        x.extend_from_slice(self.tgt_embed.row(input));
        x.extend_from_slice(&ctx);
        let gru = gru_forward(&self.decoder, x, s_prev.to_vec());
        let mut logits = self.out_b.data.clone();
        for (r, l) in logits.iter_mut().enumerate() {
            let row = self.out_w.row(r);
            *l += dot(&row[..hd], &gru.h) + dot(&row[hd..], &ctx);
        }
        let mut probs = logits.clone();
        let lse = softmax_in_place(&mut probs);
        DecoderStep { input, u, alpha, ctx, gru, probs, lse, logits }
    }

    /// Forward pass over one example, keeping everything backprop needs.
    /// Returns the summed loss over non-PAD outputs.
    pub(crate) fn trace(&self, pair: &Pair, feed: &mut Feed<'_>) -> (Trace<T>, T) {
        let enc = self.encode(&pair.source);
        let outputs = &pair.target[1..];
        let mut steps: Vec<DecoderStep<T>> = Vec::with_capacity(outputs.len());
        let mut loss = T::zero();
        for (t, &gold) in outputs.iter().enumerate() {
            let input = match (t, &mut *feed) {
                (0, _) | (_, Feed::Teacher) => pair.target[t],
                (_, Feed::Mixed { ratio, rng }) => {
                    if rng.gen::<f64>() < *ratio {
                        pair.target[t]
                    } else {
                        argmax(&steps[t - 1].probs)
                    }
                }
            };
            let s_prev = steps.last().map_or(enc.s0.as_slice(), |s| s.state());
            let step = self.decoder_step(&enc, s_prev, input);
            if gold != PAD {
                loss += step.lse - step.logits[gold];
            }
            steps.push(step);
        }
        (Trace { enc, steps }, loss)
    }

    /// Adds `scale * d(loss)/d(params)` for one traced example into `grads`.
    pub(crate) fn backward(&self, pair: &Pair, trace: &Trace<T>, scale: T, grads: &mut ModelParams<T>) {
        let (e, hd, a) = (self.config.embed_dim, self.config.hidden_dim, self.config.attention_dim);
        let src_len = pair.source.len();
        let states: Vec<&Vec<T>> = trace.enc.states().collect();
        let mut d_states = vec![vec![T::zero(); hd]; src_len];
        let mut d_keys = vec![vec![T::zero(); a]; src_len];
        let mut ds = vec![T::zero(); hd];
        let mut dlogits = vec![T::zero(); self.config.target_vocab];

        for (t, step) in trace.steps.iter().enumerate().rev() {
            let gold = pair.target[t + 1];
            let mut dctx = vec![T::zero(); hd];
            if gold != PAD {
                for (d, p) in dlogits.iter_mut().zip(&step.probs) {
                    *d = *p * scale;
                }
                dlogits[gold] -= scale;
                for (r, &g) in dlogits.iter().enumerate() {
                    let grow = grads.out_w.row_mut(r);
                    axpy(g, &step.gru.h, &mut grow[..hd]);
                    axpy(g, &step.ctx, &mut grow[hd..]);
                    let row = self.out_w.row(r);
                    axpy(g, &row[..hd], &mut ds);
                    axpy(g, &row[hd..], &mut dctx);
                }
                add_into(&mut grads.out_b.data, &dlogits);
            }

            let mut dx = vec![T::zero(); e + hd];
            let mut ds_prev = vec![T::zero(); hd];
            gru_backward(&self.decoder, &mut grads.decoder, &step.gru, &ds, &mut dx, &mut ds_prev);
            add_into(grads.tgt_embed.row_mut(step.input), &dx[..e]);
            add_into(&mut dctx, &dx[e..]);

            let dalpha: Vec<T> = states.iter().map(|h| dot(&dctx, h)).collect();
            let mean: T = step.alpha.iter().zip(&dalpha).map(|(a, d)| *a * *d).sum();
            let mut dq = vec![T::zero(); a];
            for j in 0..src_len {
                axpy(step.alpha[j], &dctx, &mut d_states[j]);
                let de = step.alpha[j] * (dalpha[j] - mean);
                if de == T::zero() {
                    continue;
                }
                axpy(de, &step.u[j], &mut grads.att_score.data);
                for i in 0..a {
                    let uji = step.u[j][i];
                    let dpre = de * self.att_score.data[i] * (T::one() - uji * uji);
                    dq[i] += dpre;
                    d_keys[j][i] += dpre;
                }
            }
            outer(&mut grads.att_query, &dq, &step.gru.h_prev);
            add_into(&mut grads.att_bias.data, &dq);
            matvec_t(&self.att_query, &dq, &mut ds_prev);
            ds = ds_prev;
        }

        let s0 = &trace.enc.s0;
        let da0: Vec<T> = ds.iter().zip(s0).map(|(d, s)| *d * (T::one() - *s * *s)).collect();
        let last = states[src_len - 1];
        outer(&mut grads.bridge_w, &da0, last);
        add_into(&mut grads.bridge_b.data, &da0);
        matvec_t(&self.bridge_w, &da0, &mut d_states[src_len - 1]);
        for j in 0..src_len {
            outer(&mut grads.att_key, &d_keys[j], states[j]);
            matvec_t(&self.att_key, &d_keys[j], &mut d_states[j]);
        }

        let mut d_out = d_states;
        for (l, w) in self.encoder.iter().enumerate().rev() {
            let in_dim = w.input_dim();
            let mut d_in = vec![vec![T::zero(); in_dim]; src_len];
            let mut carry = vec![T::zero(); hd];
            for t in (0..src_len).rev() {
                add_into(&mut carry, &d_out[t]);
                let mut next = vec![T::zero(); hd];
                gru_backward(w, &mut grads.encoder[l], &trace.enc.layers[l][t], &carry, &mut d_in[t], &mut next);
                carry = next;
            }
            if l == 0 {
                for (t, d) in d_in.iter().enumerate() {
                    add_into(grads.src_embed.row_mut(pair.source[t]), d);
                }
            }
            d_out = d_in;
        }
    }

    /// Summed-then-averaged loss and its gradient for a batch. Gradients are
    /// added into `grads`.
    pub(crate) fn accumulate(
        &self,
        batch: &[Pair],
        feed: &mut Feed<'_>,
        grads: Option<&mut ModelParams<T>>,
    ) -> Result<(T, usize), Seq2SeqError> {
        if batch.is_empty() {
            return Err(Seq2SeqError::Degenerate("empty batch".into()));
        }
        let mut tokens = 0;
        for pair in batch {
            tokens += self.validate_pair(pair)?;
        }
        if tokens == 0 {
            return Err(Seq2SeqError::Degenerate("no non-PAD target positions in batch".into()));
        }
        let scale = T::one() / T::of(tokens as f64);
        let mut total = T::zero();
        let mut grads = grads;
        for pair in batch {
            let (trace, loss) = self.trace(pair, feed);
            total += loss;
            if let Some(g) = grads.as_deref_mut() {
                self.backward(pair, &trace, scale, g);
            }
        }
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(Seq2SeqError::Numeric(format!("loss is {mean}")));
        }
        Ok((mean, tokens))
    }

    /// Mean per-token cross-entropy under teacher forcing, with attention maps.
    pub fn forward_loss(&self, batch: &[Pair]) -> Result<ForwardOutput<T>, Seq2SeqError> {
        if batch.is_empty() {
            return Err(Seq2SeqError::Degenerate("empty batch".into()));
        }
        let mut tokens = 0;
        for pair in batch {
            tokens += self.validate_pair(pair)?;
        }
        if tokens == 0 {
            return Err(Seq2SeqError::Degenerate("no non-PAD target positions in batch".into()));
        }
        let mut total = T::zero();
        let mut attention = Vec::with_capacity(batch.len());
        for pair in batch {
            let (trace, loss) = self.trace(pair, &mut Feed::Teacher);
            total += loss;
            attention.push(trace.steps.into_iter().map(|s| s.alpha).collect());
        }
        let loss = total / T::of(tokens as f64);
        if !loss.is_finite() {
            return Err(Seq2SeqError::Numeric(format!("loss is {loss}")));
        }
        Ok(ForwardOutput { loss, tokens, attention })
    }

    /// Exact gradient of [`forward_loss`](Self::forward_loss) under full
    /// teacher forcing. Returns the loss and a gradient with the shapes of
    /// `self`.
    pub fn compute_gradients(&self, batch: &[Pair]) -> Result<(T, ModelParams<T>), Seq2SeqError> {
        let mut grads = ModelParams::zeros(&self.config);
        let (loss, _) = self.accumulate(batch, &mut Feed::Teacher, Some(&mut grads))?;
        Ok((loss, grads))
    }
}
