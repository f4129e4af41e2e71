use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AttentionMap, ModelConfig, ModelError, ModelParams};
use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::vocab::{EOS, PAD, SOS};

/// Padded, batch-major id matrices with masks marking real tokens.
///
/// Target rows include the `SOS … EOS` markers; step `i` of decoding feeds
/// `tgt_ids[b][i]` (or a prediction) and scores `tgt_ids[b][i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub src_ids: Vec<Vec<usize>>,
    pub src_mask: Vec<Vec<bool>>,
    pub tgt_ids: Vec<Vec<usize>>,
    pub tgt_mask: Vec<Vec<bool>>,
}

fn pad(seqs: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let ids = seqs
        .iter()
        .map(|s| {
            let mut row = s.to_vec();
            row.resize(width, PAD);
            row
        })
        .collect();
    let mask = seqs
        .iter()
        .map(|s| (0..width).map(|i| i < s.len()).collect())
        .collect();
    (ids, mask)
}

impl Batch {
    /// Pads `(source, target)` id sequences to the longest of each side.
    pub fn from_pairs<S: AsRef<[usize]>, T: AsRef<[usize]>>(pairs: &[(S, T)]) -> Self {
        let src: Vec<&[usize]> = pairs.iter().map(|(s, _)| s.as_ref()).collect();
        let tgt: Vec<&[usize]> = pairs.iter().map(|(_, t)| t.as_ref()).collect();
        let (src_ids, src_mask) = pad(&src);
        let (tgt_ids, tgt_mask) = pad(&tgt);
        Batch {
            src_ids,
            src_mask,
            tgt_ids,
            tgt_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.src_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src_ids.is_empty()
    }

    pub fn src_len(&self) -> usize {
        self.src_ids.first().map_or(0, Vec::len)
    }

    pub fn tgt_len(&self) -> usize {
        self.tgt_ids.first().map_or(0, Vec::len)
    }

    pub fn src_lengths(&self) -> Vec<usize> {
        self.src_mask
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn tgt_lengths(&self) -> Vec<usize> {
        self.tgt_mask
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Number of scored target tokens.
    pub fn num_target_tokens(&self) -> usize {
        self.tgt_mask
            .iter()
            .map(|m| m.iter().skip(1).filter(|&&b| b).count())
            .sum()
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let (s, t) = (self.src_len(), self.tgt_len());
        let rect = |ids: &[Vec<usize>], mask: &[Vec<bool>], w: usize| {
            ids.len() == self.len()
                && mask.len() == self.len()
                && ids.iter().all(|r| r.len() == w)
                && mask.iter().all(|r| r.len() == w)
        };
        if !rect(&self.src_ids, &self.src_mask, s) || !rect(&self.tgt_ids, &self.tgt_mask, t) {
            return Err(ModelError::Batch(
                "rows must share one length per side".into(),
            ));
        }
        if s == 0 || t < 2 {
            return Err(ModelError::Batch(
                "source needs a token and target needs sos plus one token".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub teacher_forcing_p: f64,
    pub seed: u64,
    /// Enables embedding dropout.
    pub train: bool,
}

impl ForwardOptions {
    /// Fully teacher-forced, no dropout. Used for validation loss.
    pub fn eval() -> Self {
        ForwardOptions {
            teacher_forcing_p: 1.0,
            seed: 0,
            train: false,
        }
    }
}

/// One gradient vector per parameter block, in [`ModelParams::named`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|g| g.is_finite())
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_to_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let s = max_norm / norm;
            self.blocks.iter_mut().flatten().for_each(|g| *g *= s);
        }
        norm
    }
}

/// Encoder states for a single source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `T × 2·hidden`, row `t` is `[forward_t; backward_t]`.
    pub states: Tensor,
    /// Decoder initial state, `1 × hidden`.
    pub initial: Tensor,
}

struct BoundGru {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

struct Bound {
    vars: Vec<Var>,
    src_embed: Var,
    tgt_embed: Var,
    enc_fwd: BoundGru,
    enc_bwd: BoundGru,
    bridge_w: Var,
    bridge_b: Var,
    dec: BoundGru,
    attn_query: Var,
    attn_key: Var,
    attn_v: Var,
    out_w: Var,
    out_b: Var,
}

fn bind<'a>(tape: &mut Tape<'a>, p: &'a ModelParams) -> Bound {
    let vars: Vec<Var> = p.named().into_iter().map(|(_, t)| tape.leaf(t)).collect();
    // Order mirrors ModelParams::named.
    let mut it = vars.clone().into_iter();
    let mut n = move || it.next().expect("parameter count is fixed");
    let src_embed = n();
    let tgt_embed = n();
    let g = |n: &mut dyn FnMut() -> Var| BoundGru {
        w: [n(), n(), n()],
        u: [n(), n(), n()],
        b: [n(), n(), n()],
    };
    let enc_fwd = g(&mut n);
    let enc_bwd = g(&mut n);
    let bridge_w = n();
    let bridge_b = n();
    let dec = g(&mut n);
    Bound {
        src_embed,
        tgt_embed,
        enc_fwd,
        enc_bwd,
        bridge_w,
        bridge_b,
        dec,
        attn_query: n(),
        attn_key: n(),
        attn_v: n(),
        out_w: n(),
        out_b: n(),
        vars,
    }
}

fn gru_step(tape: &mut Tape<'_>, p: &BoundGru, x: Var, h: Var) -> Result<Var, NumericsError> {
    let gate = |tape: &mut Tape<'_>, k: usize, hh: Var| -> Result<Var, NumericsError> {
        let xw = tape.matmul(x, p.w[k])?;
        let hu = tape.matmul(hh, p.u[k])?;
        let s = tape.add(xw, hu)?;
        tape.add(s, p.b[k])
    };
    let z_pre = gate(tape, 0, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, 1, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let n_pre = gate(tape, 2, rh)?;
    let n = tape.tanh(n_pre);
    // (1 − z) ⊙ n + z ⊙ h = n + z ⊙ (h − n)
    let diff = tape.sub(h, n)?;
    let zd = tape.mul(z, diff)?;
    tape.add(n, zd)
}

struct Encoded {
    /// `(B·T) × 2h`, batch-major.
    states: Var,
    /// `(B·T) × attn`, `states · W_H`, computed once.
    keys: Var,
    initial: Var,
    mask: Vec<bool>,
    steps: usize,
}

struct Runner<'a> {
    tape: Tape<'a>,
    p: Bound,
    cfg: &'a ModelConfig,
    dropout: Option<ChaCha8Rng>,
}

impl<'a> Runner<'a> {
    fn new(model: &'a Seq2Seq, dropout_seed: Option<u64>) -> Self {
        let mut tape = Tape::new();
        let p = bind(&mut tape, &model.params);
        let dropout = dropout_seed
            .filter(|_| model.config.embed_dropout > 0.0)
            .map(ChaCha8Rng::seed_from_u64);
        Runner {
            tape,
            p,
            cfg: &model.config,
            dropout,
        }
    }

    fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var, ModelError> {
        let e = self.tape.gather(table, ids).map_err(|err| match err {
            NumericsError::Range { index, len } => ModelError::Range {
                id: index,
                size: len,
            },
            other => other.into(),
        })?;
        match self.dropout.as_mut() {
            Some(rng) => Ok(self.tape.dropout(e, self.cfg.embed_dropout, rng)?),
            None => Ok(e),
        }
    }

    fn encode(&mut self, src: &[Vec<usize>], mask: &[Vec<bool>]) -> Result<Encoded, ModelError> {
        let b = src.len();
        let t_len = src[0].len();
        let h = self.cfg.hidden_dim;
        let column = |rows: &[Vec<usize>], t: usize| rows.iter().map(|r| r[t]).collect::<Vec<_>>();
        let mask_col = |t: usize| mask.iter().map(|r| r[t]).collect::<Vec<_>>();

        let mut inputs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            inputs.push(self.embed(self.p.src_embed, &column(src, t))?);
        }
        let zero = self.tape.constant(b, h, vec![0.0; b * h])?;

        let mut fwd = Vec::with_capacity(t_len);
        let mut state = zero;
        for (t, &x) in inputs.iter().enumerate() {
            let cand = gru_step(&mut self.tape, &self.p.enc_fwd, x, state)?;
            state = self.tape.select_rows(&mask_col(t), cand, state)?;
            fwd.push(state);
        }
        let mut bwd = vec![zero; t_len];
        let mut state = zero;
        for t in (0..t_len).rev() {
            let cand = gru_step(&mut self.tape, &self.p.enc_bwd, inputs[t], state)?;
            state = self.tape.select_rows(&mask_col(t), cand, state)?;
            bwd[t] = state;
        }

        let mut rows = Vec::with_capacity(t_len);
        for t in 0..t_len {
            rows.push(self.tape.concat_cols(&[fwd[t], bwd[t]])?);
        }
        // Time-major stack, then permute to batch-major: row b·T + t.
        let stacked = self.tape.concat_rows(&rows)?;
        let perm: Vec<usize> = (0..b)
            .flat_map(|bi| (0..t_len).map(move |t| t * b + bi))
            .collect();
        let states = self.tape.gather(stacked, &perm)?;
        let keys = self.tape.matmul(states, self.p.attn_key)?;

        let last = self.tape.concat_cols(&[fwd[t_len - 1], bwd[0]])?;
        let proj = self.tape.matmul(last, self.p.bridge_w)?;
        let proj = self.tape.add(proj, self.p.bridge_b)?;
        let initial = self.tape.tanh(proj);

        Ok(Encoded {
            states,
            keys,
            initial,
            mask: mask.iter().flatten().copied().collect(),
            steps: t_len,
        })
    }

    /// Returns `(context B×2h, α B×T)`.
    fn attend(&mut self, h_prev: Var, enc: &Encoded) -> Result<(Var, Var), ModelError> {
        let (b, _) = self.tape.shape(h_prev);
        let q = self.tape.matmul(h_prev, self.p.attn_query)?;
        let q = self.tape.repeat_rows(q, enc.steps);
        let s = self.tape.add(enc.keys, q)?;
        let s = self.tape.tanh(s);
        let e = self.tape.matmul(s, self.p.attn_v)?;
        let e = self.tape.reshape(e, b, enc.steps)?;
        let alpha = self.tape.softmax(e, Some(&enc.mask))?;
        let c = self.tape.group_weighted_sum(alpha, enc.states)?;
        Ok((c, alpha))
    }

    /// Returns `(h', logits)`.
    fn decode_step(
        &mut self,
        y_prev: &[usize],
        h_prev: Var,
        c: Var,
    ) -> Result<(Var, Var), ModelError> {
        let emb = self.embed(self.p.tgt_embed, y_prev)?;
        let x = self.tape.concat_cols(&[emb, c])?;
        let h = gru_step(&mut self.tape, &self.p.dec, x, h_prev)?;
        let feat = self.tape.concat_cols(&[h, emb, c])?;
        let logits = self.tape.matmul(feat, self.p.out_w)?;
        let logits = self.tape.add(logits, self.p.out_b)?;
        Ok((h, logits))
    }

    fn loss(&mut self, batch: &Batch, opts: &ForwardOptions) -> Result<Var, ModelError> {
        let enc = self.encode(&batch.src_ids, &batch.src_mask)?;
        let b = batch.len();
        let mut tf_rng = ChaCha8Rng::seed_from_u64(opts.seed);
        tf_rng.set_stream(1);
        let mut y_prev: Vec<usize> = batch.tgt_ids.iter().map(|r| r[0]).collect();
        let mut h = enc.initial;
        let mut all_logits = Vec::new();
        let mut targets = Vec::new();
        let mut mask = Vec::new();
        for i in 1..batch.tgt_len() {
            let (c, _) = self.attend(h, &enc)?;
            let (h_new, logits) = self.decode_step(&y_prev, h, c)?;
            h = h_new;
            all_logits.push(logits);
            let gold: Vec<usize> = batch.tgt_ids.iter().map(|r| r[i]).collect();
            targets.extend_from_slice(&gold);
            mask.extend(batch.tgt_mask.iter().map(|r| r[i]));
            let forced = tf_rng.gen::<f64>() < opts.teacher_forcing_p;
            y_prev = if forced {
                gold
            } else {
                let v = self.tape.value(logits);
                let width = v.len() / b;
                v.chunks(width).map(argmax).collect()
            };
        }
        let logits = self.tape.concat_rows(&all_logits)?;
        Ok(self.tape.cross_entropy(logits, &targets, &mask)?)
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Configuration plus parameters of the encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Seq2Seq {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Seq2Seq { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init_random(&config, seed);
        Ok(Seq2Seq { config, params })
    }

    fn check_src(&self, ids: &[usize], mask: &[bool]) -> Result<(), ModelError> {
        if ids.len() != mask.len() {
            return Err(ModelError::Batch(format!(
                "{} ids with {} mask entries",
                ids.len(),
                mask.len()
            )));
        }
        if ids.is_empty() {
            return Err(ModelError::Batch("empty source".into()));
        }
        Ok(())
    }

    pub fn encode(
        &self,
        src_ids: &[usize],
        src_mask: &[bool],
    ) -> Result<EncoderOutput, ModelError> {
        self.check_src(src_ids, src_mask)?;
        let mut run = Runner::new(self, None);
        let enc = run.encode(&[src_ids.to_vec()], &[src_mask.to_vec()])?;
        Ok(EncoderOutput {
            states: run.tape.tensor(enc.states),
            initial: run.tape.tensor(enc.initial),
        })
    }

    /// Attention read of `states` (`T × 2·hidden`) given the previous
    /// decoder state. Returns `(context, α)`.
    pub fn attend(
        &self,
        h_prev: &[f64],
        states: &Tensor,
        mask: &[bool],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (t_len, width) = states.dims2();
        let h = self.config.hidden_dim;
        if h_prev.len() != h || width != 2 * h || mask.len() != t_len {
            return Err(ModelError::Batch(
                "attend inputs do not match the model dimensions".into(),
            ));
        }
        let mut run = Runner::new(self, None);
        let st = run.tape.constant(t_len, width, states.data().to_vec())?;
        let keys = run.tape.matmul(st, run.p.attn_key)?;
        let enc = Encoded {
            states: st,
            keys,
            initial: st,
            mask: mask.to_vec(),
            steps: t_len,
        };
        let hp = run.tape.constant(1, h, h_prev.to_vec())?;
        let (c, alpha) = run.attend(hp, &enc)?;
        Ok((run.tape.value(c).to_vec(), run.tape.value(alpha).to_vec()))
    }

    /// One decoder step. Returns `(h', output distribution)`.
    pub fn decode_step(
        &self,
        y_prev: usize,
        h_prev: &[f64],
        context: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let h = self.config.hidden_dim;
        if h_prev.len() != h || context.len() != 2 * h {
            return Err(ModelError::Batch(
                "decode_step inputs do not match the model dimensions".into(),
            ));
        }
        let mut run = Runner::new(self, None);
        let hp = run.tape.constant(1, h, h_prev.to_vec())?;
        let c = run.tape.constant(1, 2 * h, context.to_vec())?;
        let (h_new, logits) = run.decode_step(&[y_prev], hp, c)?;
        let dist = run.tape.softmax(logits, None)?;
        Ok((
            run.tape.value(h_new).to_vec(),
            run.tape.value(dist).to_vec(),
        ))
    }

    fn dropout_seed(&self, opts: &ForwardOptions) -> Option<u64> {
        opts.train.then_some(opts.seed)
    }

    /// Mean cross-entropy over the unmasked target positions of `batch`.
    pub fn forward_loss(&self, batch: &Batch, opts: &ForwardOptions) -> Result<f64, ModelError> {
        batch.validate()?;
        let mut run = Runner::new(self, self.dropout_seed(opts));
        let loss = run.loss(batch, opts)?;
        Ok(run.tape.scalar(loss))
    }

    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        opts: &ForwardOptions,
    ) -> Result<(f64, Gradients), ModelError> {
        batch.validate()?;
        let mut run = Runner::new(self, self.dropout_seed(opts));
        let loss = run.loss(batch, opts)?;
        run.tape.backward(loss)?;
        let blocks = run
            .p
            .vars
            .clone()
            .into_iter()
            .zip(self.params.named())
            .map(|(v, (_, t))| {
                run.tape
                    .take_grad(v)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect();
        Ok((run.tape.scalar(loss), Gradients { blocks }))
    }

    /// Greedy decoding from `SOS` until `EOS` or `max_len` tokens. The
    /// returned ids exclude `EOS`; attention rows align with them.
    pub fn greedy_decode(
        &self,
        src_ids: &[usize],
        src_mask: &[bool],
        max_len: usize,
    ) -> Result<(Vec<usize>, AttentionMap), ModelError> {
        self.check_src(src_ids, src_mask)?;
        let mut out = Vec::new();
        let mut rows = Vec::new();
        if max_len == 0 {
            return Ok((out, AttentionMap::new(rows, src_mask.to_vec())));
        }
        let mut run = Runner::new(self, None);
        let enc = run.encode(&[src_ids.to_vec()], &[src_mask.to_vec()])?;
        let mut h = enc.initial;
        let mut y = SOS;
        while out.len() < max_len {
            let (c, alpha) = run.attend(h, &enc)?;
            let (h_new, logits) = run.decode_step(&[y], h, c)?;
            h = h_new;
            y = argmax(run.tape.value(logits));
            if y == EOS {
                break;
            }
            out.push(y);
            rows.push(run.tape.value(alpha).to_vec());
        }
        Ok((out, AttentionMap::new(rows, src_mask.to_vec())))
    }
}
