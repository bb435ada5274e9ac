use std::collections::BTreeSet;

use super::config::{Condition, ModelConfig, PREFIX_TOKENS};
use super::patch::{patchify, patchify_var, unpatchify, unpatchify_var};
use super::weights::{Bound, Weights};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Attention map and output of one block for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionCapture<T: Scalar = f32> {
    pub block: usize,
    /// `[heads, L, L]`, rows are queries and columns keys.
    pub maps: Tensor<T>,
    /// `[L, d_model]`, heads concatenated on the channel axis.
    pub output: Tensor<T>,
}

impl<T: Scalar> AttentionCapture<T> {
    pub fn seq_len(&self) -> usize {
        self.maps.shape()[1]
    }

    pub fn heads(&self) -> usize {
        self.maps.shape()[0]
    }

    /// Head-averaged `L × L` map.
    pub fn mean_map(&self) -> Tensor<T> {
        let (heads, l) = (self.heads(), self.seq_len());
        let inv = T::one() / T::from_usize(heads).expect("heads");
        Tensor::from_fn(&[l, l], |i| {
            (0..heads).map(|h| self.maps.data()[h * l * l + i]).sum::<T>() * inv
        })
    }

    /// Largest deviation of a row sum from one, over all heads.
    pub fn max_row_sum_error(&self) -> f64 {
        let l = self.seq_len();
        self.maps
            .data()
            .chunks_exact(l)
            .map(|row| (row.iter().copied().sum::<T>().to_f64_lossy() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Video-token rows of the output arranged as `h × w × τ × d`.
    pub fn video_output(&self, cfg: &ModelConfig) -> Result<Tensor<T>> {
        let (h, w, tau) = cfg.grid();
        self.output
            .slice_axis(0, PREFIX_TOKENS..PREFIX_TOKENS + cfg.video_tokens())?
            .into_reshape(&[tau, h, w, cfg.d_model])?
            .permute(&[1, 2, 0, 3])
    }
}

/// Variables produced by one batched pass.
struct Pass {
    /// `[B·L, p·p·ch]` token predictions; absent for truncated passes.
    tokens: Option<Var>,
    /// Per block run: attention output `[B·L, d]`.
    attn: Vec<Var>,
    /// Per block run: attention maps indexed `sample · heads + head`.
    maps: Vec<Vec<Var>>,
    /// Value slices matching `maps`.
    values: Vec<Vec<Var>>,
}

/// Denoiser ε_θ over flattened spatiotemporal tokens plus condition tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    cfg: ModelConfig,
    weights: Weights<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: ModelConfig, weights: Weights<T>) -> Result<Self> {
        cfg.validate()?;
        weights.validate(&cfg)?;
        Ok(Self { cfg, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &Weights<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<T> {
        &mut self.weights
    }

    pub fn into_weights(self) -> Weights<T> {
        self.weights
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            weights: self.weights.cast(),
        }
    }

    fn check_inputs(&self, shape: &[usize], t: usize, y: Condition) -> Result<()> {
        if shape != self.cfg.video_shape() {
            return Err(Error::Dimension(format!(
                "latent {shape:?} does not match model video shape {:?}",
                self.cfg.video_shape()
            )));
        }
        if t > self.cfg.timesteps {
            return Err(Error::Config(format!(
                "timestep {t} outside [0, {}]",
                self.cfg.timesteps
            )));
        }
        y.validate(&self.cfg)
    }

    /// Builds the batched graph through `depth` blocks. When `depth` is
    /// below the block count, the pass stops after the last block's
    /// attention and no prediction head is run.
    fn run(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        videos: &[Var],
        steps: &[usize],
        conds: &[Condition],
        depth: usize,
        keep_maps: &BTreeSet<usize>,
    ) -> Result<Pass> {
        let cfg = &self.cfg;
        let batch = videos.len();
        let (heads, hd) = (cfg.heads, cfg.head_dim());
        let (v_tok, l, hw) = (cfg.video_tokens(), cfg.seq_len(), cfg.tokens_per_frame());
        let full = depth == cfg.blocks;

        let mut patches = Vec::with_capacity(batch);
        for &v in videos {
            patches.push(patchify_var(tape, v, cfg.patch)?);
        }
        let patches = if batch == 1 { patches[0] } else { tape.concat(&patches, 0)? };
        let x = tape.matmul(patches, bound.patch_w, false, false)?;
        let x = tape.add_bias(x, bound.patch_b)?;
        let spatial: Vec<usize> = (0..batch * v_tok).map(|i| i % hw).collect();
        let temporal: Vec<usize> = (0..batch * v_tok).map(|i| (i % v_tok) / hw).collect();
        let ps = tape.embedding(bound.pos_spatial, &spatial)?;
        let pt = tape.embedding(bound.pos_temporal, &temporal)?;
        let x = tape.add(x, ps)?;
        let video = tape.add(x, pt)?;

        let classes: Vec<usize> = conds.iter().map(|c| c.class).collect();
        let fps: Vec<usize> = conds.iter().map(|c| c.fps).collect();
        let ce = tape.embedding(bound.cond_table, &classes)?;
        let fe = tape.embedding(bound.fps_table, &fps)?;
        let mut rows = Vec::with_capacity(3 * batch);
        for s in 0..batch {
            if batch == 1 {
                rows.extend([ce, fe, video]);
            } else {
                rows.push(tape.slice(ce, 0, s..s + 1)?);
                rows.push(tape.slice(fe, 0, s..s + 1)?);
                rows.push(tape.slice(video, 0, s * v_tok..(s + 1) * v_tok)?);
            }
        }
        let x = tape.concat(&rows, 0)?;
        let time_ids: Vec<usize> = steps.iter().flat_map(|&t| std::iter::repeat_n(t, l)).collect();
        let te = tape.embedding(bound.time_table, &time_ids)?;
        let mut x = tape.add(x, te)?;

        let scale = T::from_f64_lossy(1.0 / (hd as f64).sqrt());
        let mut attn = Vec::with_capacity(depth);
        let mut maps = Vec::with_capacity(depth);
        let mut values = Vec::with_capacity(depth);
        for (bi, b) in bound.blocks.iter().enumerate().take(depth) {
            let h = tape.layer_norm(x, b.ln1_g, b.ln1_b)?;
            let q = tape.matmul(h, b.wq, false, false)?;
            let q = tape.add_bias(q, b.bq)?;
            let q = tape.scale(q, scale)?;
            let k = tape.matmul(h, b.wk, false, false)?;
            let k = tape.add_bias(k, b.bk)?;
            let v = tape.matmul(h, b.wv, false, false)?;
            let v = tape.add_bias(v, b.bv)?;
            let mut per_sample = Vec::with_capacity(batch);
            let mut block_maps = Vec::new();
            let mut block_values = Vec::new();
            for s in 0..batch {
                let r = s * l..(s + 1) * l;
                let mut per_head = Vec::with_capacity(heads);
                for j in 0..heads {
                    let c = j * hd..(j + 1) * hd;
                    let qs = tape.slice_rect(q, r.clone(), c.clone())?;
                    let ks = tape.slice_rect(k, r.clone(), c.clone())?;
                    let vs = tape.slice_rect(v, r.clone(), c)?;
                    let scores = tape.matmul(qs, ks, false, true)?;
                    let m = tape.softmax(scores)?;
                    if keep_maps.contains(&bi) {
                        block_maps.push(m);
                        block_values.push(vs);
                    }
                    per_head.push(tape.matmul(m, vs, false, false)?);
                }
                per_sample.push(if heads == 1 { per_head[0] } else { tape.concat(&per_head, 1)? });
            }
            let f = if batch == 1 { per_sample[0] } else { tape.concat(&per_sample, 0)? };
            attn.push(f);
            maps.push(block_maps);
            values.push(block_values);
            if !full && bi + 1 == depth {
                break;
            }
            let o = tape.matmul(f, b.wo, false, false)?;
            let o = tape.add_bias(o, b.bo)?;
            x = tape.add(x, o)?;
            let h2 = tape.layer_norm(x, b.ln2_g, b.ln2_b)?;
            let u = tape.matmul(h2, b.w1, false, false)?;
            let u = tape.add_bias(u, b.b1)?;
            let u = tape.gelu(u)?;
            let u = tape.matmul(u, b.w2, false, false)?;
            let u = tape.add_bias(u, b.b2)?;
            x = tape.add(x, u)?;
        }
        if !full {
            return Ok(Pass {
                tokens: None,
                attn,
                maps,
                values,
            });
        }
        let x = tape.layer_norm(x, bound.lnf_g, bound.lnf_b)?;
        let out = tape.matmul(x, bound.out_w, false, false)?;
        let out = tape.add_bias(out, bound.out_b)?;
        Ok(Pass {
            tokens: Some(out),
            attn,
            maps,
            values,
        })
    }

    fn video_rows(&self, tape: &mut Tape<T>, tokens: Var, sample: usize) -> Result<Var> {
        let l = self.cfg.seq_len();
        let start = sample * l + PREFIX_TOKENS;
        tape.slice(tokens, 0, start..start + self.cfg.video_tokens())
    }

    /// Predicts ε̂ for one latent and returns captures for the requested blocks.
    pub fn forward(
        &self,
        z_t: &Tensor<T>,
        t: usize,
        y: Condition,
        capture: &[usize],
    ) -> Result<(Tensor<T>, Vec<AttentionCapture<T>>)> {
        self.check_inputs(z_t.shape(), t, y)?;
        let keep: BTreeSet<usize> = capture.iter().copied().collect();
        if let Some(&b) = keep.iter().find(|&&b| b >= self.cfg.blocks) {
            return Err(Error::Config(format!(
                "capture block {b} outside [0, {})",
                self.cfg.blocks
            )));
        }
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &self.weights, false);
        let z = tape.constant(z_t.clone());
        let pass = self.run(&mut tape, &bound, &[z], &[t], &[y], self.cfg.blocks, &keep)?;
        let tokens = pass.tokens.expect("full pass has a head");
        let rows = self.video_rows(&mut tape, tokens, 0)?;
        let eps = unpatchify(tape.value(rows), self.cfg.patch, z_t.shape())?;
        let mut captures = Vec::with_capacity(keep.len());
        for &b in &keep {
            let maps: Vec<&Tensor<T>> = pass.maps[b].iter().map(|&m| tape.value(m)).collect();
            let l = self.cfg.seq_len();
            let stacked = Tensor::concat(&maps, 0)?.into_reshape(&[self.cfg.heads, l, l])?;
            let output = tape.value(pass.attn[b]).clone();
            debug_assert!(self.output_is_map_times_values(&tape, &pass, b, &output));
            captures.push(AttentionCapture {
                block: b,
                maps: stacked,
                output,
            });
        }
        Ok((eps, captures))
    }

    /// Recomputes `M·V` per head from captured values.
    fn output_is_map_times_values(&self, tape: &Tape<T>, pass: &Pass, block: usize, output: &Tensor<T>) -> bool {
        let hd = self.cfg.head_dim();
        pass.maps[block].iter().zip(&pass.values[block]).enumerate().all(|(j, (&m, &v))| {
            let out_h = output.slice_axis(1, j * hd..(j + 1) * hd).expect("head slice");
            Tensor::matmul(tape.value(m), tape.value(v), false, false).is_ok_and(|r| r == out_h)
        })
    }

    /// Predicts ε̂ for a batch of latents in one graph.
    pub fn forward_batch(&self, z_t: &[Tensor<T>], t: &[usize], y: &[Condition]) -> Result<Vec<Tensor<T>>> {
        self.check_batch(z_t, t, y)?;
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &self.weights, false);
        let zs: Vec<Var> = z_t.iter().map(|z| tape.constant(z.clone())).collect();
        let pass = self.run(&mut tape, &bound, &zs, t, y, self.cfg.blocks, &BTreeSet::new())?;
        let tokens = pass.tokens.expect("full pass has a head");
        (0..z_t.len())
            .map(|s| {
                let rows = self.video_rows(&mut tape, tokens, s)?;
                unpatchify(tape.value(rows), self.cfg.patch, &self.cfg.video_shape())
            })
            .collect()
    }

    fn check_batch(&self, z_t: &[Tensor<T>], t: &[usize], y: &[Condition]) -> Result<()> {
        if z_t.is_empty() || z_t.len() != t.len() || z_t.len() != y.len() {
            return Err(Error::Length {
                expected: z_t.len(),
                found: t.len().min(y.len()),
            });
        }
        for ((z, &ti), &yi) in z_t.iter().zip(t).zip(y) {
            self.check_inputs(z.shape(), ti, yi)?;
        }
        Ok(())
    }

    /// Mean over the batch of `‖ε − ε̂‖²` and its gradient for every weight,
    /// in [`Weights::named`] order.
    pub fn loss_and_grads(
        &self,
        z_t: &[Tensor<T>],
        t: &[usize],
        y: &[Condition],
        eps: &[Tensor<T>],
    ) -> Result<(f64, Weights<T>)> {
        self.check_batch(z_t, t, y)?;
        if eps.len() != z_t.len() {
            return Err(Error::Length {
                expected: z_t.len(),
                found: eps.len(),
            });
        }
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &self.weights, true);
        let zs: Vec<Var> = z_t.iter().map(|z| tape.constant(z.clone())).collect();
        let pass = self.run(&mut tape, &bound, &zs, t, y, self.cfg.blocks, &BTreeSet::new())?;
        let tokens = pass.tokens.expect("full pass has a head");
        let mut pred = Vec::with_capacity(z_t.len());
        let mut target = Vec::with_capacity(z_t.len());
        for (s, e) in eps.iter().enumerate() {
            pred.push(self.video_rows(&mut tape, tokens, s)?);
            target.push(patchify(e, self.cfg.patch)?);
        }
        let pred = if pred.len() == 1 { pred[0] } else { tape.concat(&pred, 0)? };
        let refs: Vec<&Tensor<T>> = target.iter().collect();
        let target = tape.constant(Tensor::concat(&refs, 0)?);
        let diff = tape.sub(pred, target)?;
        let sq = tape.squared_norm(diff)?;
        let inv_b = T::from_f64_lossy(1.0 / z_t.len() as f64);
        let loss = tape.scale(sq, inv_b)?;
        let value = tape.value(loss).item()?.to_f64_lossy();
        let mut grads = tape.gradients(loss)?;
        let mut out = Weights::zeros(&self.cfg)?;
        for ((_, slot), var) in out.named_mut().into_iter().zip(bound.vars()) {
            if let Some(g) = grads.take(var) {
                *slot = g;
            }
        }
        Ok((value, out))
    }

    /// Records attention outputs of `blocks` (video rows only) on `tape`
    /// with `z_t` as input, stacked on the channel axis as `h × w × τ × (d·|blocks|)`.
    /// Weights enter as constants.
    pub fn attention_outputs_var(
        &self,
        tape: &mut Tape<T>,
        z_t: Var,
        t: usize,
        y: Condition,
        blocks: &[usize],
    ) -> Result<Var> {
        self.check_inputs(tape.shape(z_t), t, y)?;
        let depth = match blocks.iter().max() {
            Some(&b) if b < self.cfg.blocks => b + 1,
            Some(&b) => {
                return Err(Error::Config(format!(
                    "block {b} outside [0, {})",
                    self.cfg.blocks
                )))
            }
            None => return Err(Error::Config("no blocks requested".into())),
        };
        let bound = Bound::new(tape, &self.weights, false);
        let pass = self.run(tape, &bound, &[z_t], &[t], &[y], depth, &BTreeSet::new())?;
        let (h, w, tau) = self.cfg.grid();
        let d = self.cfg.d_model;
        let mut parts = Vec::with_capacity(blocks.len());
        for &b in blocks {
            let rows = tape.slice(pass.attn[b], 0, PREFIX_TOKENS..PREFIX_TOKENS + self.cfg.video_tokens())?;
            let grid = tape.reshape(rows, &[tau, h, w, d])?;
            parts.push(tape.permute(grid, &[1, 2, 0, 3])?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat(&parts, 3)
        }
    }

    /// Attention outputs of the first `k` blocks, recorded on `tape`.
    pub fn forward_prefix_var(&self, tape: &mut Tape<T>, z_t: Var, t: usize, y: Condition, k: usize) -> Result<Var> {
        if k == 0 || k > self.cfg.blocks {
            return Err(Error::Config(format!(
                "sketching count {k} outside [1, {}]",
                self.cfg.blocks
            )));
        }
        let blocks: Vec<usize> = (0..k).collect();
        self.attention_outputs_var(tape, z_t, t, y, &blocks)
    }

    /// Value-only form of [`Model::forward_prefix_var`].
    pub fn forward_prefix(&self, z_t: &Tensor<T>, t: usize, y: Condition, k: usize) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let z = tape.constant(z_t.clone());
        let f = self.forward_prefix_var(&mut tape, z, t, y, k)?;
        Ok(tape.value(f).clone())
    }

    /// ε̂ recorded on a tape with `z_t` as input; used where the prediction
    /// itself must be differentiated.
    pub fn forward_var(&self, tape: &mut Tape<T>, z_t: Var, t: usize, y: Condition) -> Result<Var> {
        self.check_inputs(tape.shape(z_t), t, y)?;
        let bound = Bound::new(tape, &self.weights, false);
        let pass = self.run(tape, &bound, &[z_t], &[t], &[y], self.cfg.blocks, &BTreeSet::new())?;
        let rows = self.video_rows(tape, pass.tokens.expect("full pass has a head"), 0)?;
        unpatchify_var(tape, rows, self.cfg.patch, &self.cfg.video_shape())
    }
}
