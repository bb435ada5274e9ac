use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ModelConfig;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights<T: Scalar = f32> {
    pub ln1_g: Tensor<T>,
    pub ln1_b: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln2_g: Tensor<T>,
    pub ln2_b: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

/// All parameters of the denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T: Scalar = f32> {
    pub patch_w: Tensor<T>,
    pub patch_b: Tensor<T>,
    pub pos_spatial: Tensor<T>,
    pub pos_temporal: Tensor<T>,
    pub time_table: Tensor<T>,
    pub cond_table: Tensor<T>,
    pub fps_table: Tensor<T>,
    pub blocks: Vec<BlockWeights<T>>,
    pub lnf_g: Tensor<T>,
    pub lnf_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

fn normal<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::from_f64_lossy(z * std)
    })
}

/// Sinusoidal rows, used as the starting point of the timestep table.
fn sinusoidal<T: Scalar>(rows: usize, d: usize, scale: f64) -> Tensor<T> {
    Tensor::from_fn(&[rows, d], |i| {
        let (t, j) = ((i / d) as f64, i % d);
        let freq = 1.0 / 1000f64.powf((2 * (j / 2)) as f64 / d as f64);
        let v = if j % 2 == 0 { (t * freq).sin() } else { (t * freq).cos() };
        T::from_f64_lossy(v * scale)
    })
}

impl<T: Scalar> Weights<T> {
    /// Builds every tensor from its name and shape.
    fn build(cfg: &ModelConfig, mut f: impl FnMut(&str, &[usize]) -> Tensor<T>) -> Self {
        let d = cfg.d_model;
        let dp = cfg.patch_dim();
        let ff = d * cfg.ffn_mult;
        let blocks = (0..cfg.blocks)
            .map(|_| BlockWeights {
                ln1_g: f("ln_g", &[d]),
                ln1_b: f("ln_b", &[d]),
                wq: f("wq", &[d, d]),
                bq: f("bias", &[d]),
                wk: f("wk", &[d, d]),
                bk: f("bias", &[d]),
                wv: f("wv", &[d, d]),
                bv: f("bias", &[d]),
                wo: f("wo", &[d, d]),
                bo: f("bias", &[d]),
                ln2_g: f("ln_g", &[d]),
                ln2_b: f("ln_b", &[d]),
                w1: f("w1", &[d, ff]),
                b1: f("bias", &[ff]),
                w2: f("w2", &[ff, d]),
                b2: f("bias", &[d]),
            })
            .collect();
        Self {
            patch_w: f("patch_w", &[dp, d]),
            patch_b: f("bias", &[d]),
            pos_spatial: f("pos", &[cfg.tokens_per_frame(), d]),
            pos_temporal: f("pos", &[cfg.frames, d]),
            time_table: f("time_table", &[cfg.timesteps + 1, d]),
            cond_table: f("cond_table", &[cfg.num_classes + 1, d]),
            fps_table: f("fps_table", &[cfg.fps_vocab, d]),
            blocks,
            lnf_g: f("ln_g", &[d]),
            lnf_b: f("ln_b", &[d]),
            out_w: f("out_w", &[d, dp]),
            out_b: f("bias", &[dp]),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::build(cfg, |_, s| Tensor::zeros(s)))
    }

    /// Random initialization; the output projection starts at zero so the
    /// untrained model predicts ε̂ = 0.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model as f64;
        let ff = (cfg.d_model * cfg.ffn_mult) as f64;
        let dp = cfg.patch_dim() as f64;
        Ok(Self::build(cfg, |name, s| match name {
            "ln_g" => Tensor::ones(s),
            "bias" | "ln_b" | "out_w" => Tensor::zeros(s),
            "patch_w" => normal(rng, s, 1.0 / dp.sqrt()),
            "wq" | "wk" | "wv" | "w1" => normal(rng, s, 1.0 / d.sqrt()),
            "wo" => normal(rng, s, 0.5 / d.sqrt()),
            "w2" => normal(rng, s, 0.5 / ff.sqrt()),
            "pos" => normal(rng, s, 0.2),
            "time_table" => sinusoidal(s[0], s[1], 0.5),
            _ => normal(rng, s, 0.5),
        }))
    }

    /// Fully random weights, including the output projection and affine
    /// parameters, for tests that need a non-degenerate network.
    pub fn random<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model as f64;
        let ff = (cfg.d_model * cfg.ffn_mult) as f64;
        let dp = cfg.patch_dim() as f64;
        Ok(Self::build(cfg, |name, s| match name {
            "ln_g" => normal::<T, R>(rng, s, 0.2).map(|v| v + T::one()),
            "bias" | "ln_b" => normal(rng, s, 0.1),
            "patch_w" => normal(rng, s, 1.0 / dp.sqrt()),
            "w2" => normal(rng, s, 1.0 / ff.sqrt()),
            "pos" => normal(rng, s, 0.2),
            _ => normal(rng, s, 1.0 / d.sqrt()),
        }))
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("patch_w".into(), &self.patch_w),
            ("patch_b".into(), &self.patch_b),
            ("pos_spatial".into(), &self.pos_spatial),
            ("pos_temporal".into(), &self.pos_temporal),
            ("time_table".into(), &self.time_table),
            ("cond_table".into(), &self.cond_table),
            ("fps_table".into(), &self.fps_table),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in [
                ("ln1_g", &b.ln1_g),
                ("ln1_b", &b.ln1_b),
                ("wq", &b.wq),
                ("bq", &b.bq),
                ("wk", &b.wk),
                ("bk", &b.bk),
                ("wv", &b.wv),
                ("bv", &b.bv),
                ("wo", &b.wo),
                ("bo", &b.bo),
                ("ln2_g", &b.ln2_g),
                ("ln2_b", &b.ln2_b),
                ("w1", &b.w1),
                ("b1", &b.b1),
                ("w2", &b.w2),
                ("b2", &b.b2),
            ] {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out.push(("out_w".into(), &self.out_w));
        out.push(("out_b".into(), &self.out_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = vec![
            ("patch_w".into(), &mut self.patch_w),
            ("patch_b".into(), &mut self.patch_b),
            ("pos_spatial".into(), &mut self.pos_spatial),
            ("pos_temporal".into(), &mut self.pos_temporal),
            ("time_table".into(), &mut self.time_table),
            ("cond_table".into(), &mut self.cond_table),
            ("fps_table".into(), &mut self.fps_table),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in [
                ("ln1_g", &mut b.ln1_g),
                ("ln1_b", &mut b.ln1_b),
                ("wq", &mut b.wq),
                ("bq", &mut b.bq),
                ("wk", &mut b.wk),
                ("bk", &mut b.bk),
                ("wv", &mut b.wv),
                ("bv", &mut b.bv),
                ("wo", &mut b.wo),
                ("bo", &mut b.bo),
                ("ln2_g", &mut b.ln2_g),
                ("ln2_b", &mut b.ln2_b),
                ("w1", &mut b.w1),
                ("b1", &mut b.b1),
                ("w2", &mut b.w2),
                ("b2", &mut b.b2),
            ] {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &mut self.lnf_g));
        out.push(("lnf_b".into(), &mut self.lnf_b));
        out.push(("out_w".into(), &mut self.out_w));
        out.push(("out_b".into(), &mut self.out_b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        let mut out = Weights::<U>::placeholder();
        out.blocks = self.blocks.iter().map(|_| BlockWeights::placeholder()).collect();
        for ((_, dst), (_, src)) in out.named_mut().into_iter().zip(self.named()) {
            *dst = src.cast();
        }
        out
    }

    fn placeholder() -> Self {
        let z = || Tensor::zeros(&[1]);
        Self {
            patch_w: z(),
            patch_b: z(),
            pos_spatial: z(),
            pos_temporal: z(),
            time_table: z(),
            cond_table: z(),
            fps_table: z(),
            blocks: Vec::new(),
            lnf_g: z(),
            lnf_b: z(),
            out_w: z(),
            out_b: z(),
        }
    }

    /// Checks every tensor's shape against `cfg` and that all values are finite.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let template = Self::zeros(cfg)?;
        if template.blocks.len() != self.blocks.len() {
            return Err(Error::Dimension(format!(
                "weights hold {} blocks, config expects {}",
                self.blocks.len(),
                template.blocks.len()
            )));
        }
        for ((name, t), (_, want)) in self.named().into_iter().zip(template.named()) {
            if t.shape() != want.shape() {
                return Err(Error::Dimension(format!(
                    "weight {name}: stored {:?}, model expects {:?}",
                    t.shape(),
                    want.shape()
                )));
            }
            t.ensure_finite(&name)?;
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, t) in self.named() {
            t.ensure_finite(&name)?;
        }
        Ok(())
    }

    /// Rebuilds weights from named tensors and validates them against `cfg`.
    pub fn from_named(cfg: &ModelConfig, mut lookup: impl FnMut(&str) -> Option<Tensor<T>>) -> Result<Self> {
        let mut out = Self::zeros(cfg)?;
        for (name, slot) in out.named_mut() {
            *slot = lookup(&name).ok_or_else(|| Error::Format(format!("missing weight {name}")))?;
        }
        out.validate(cfg)?;
        Ok(out)
    }
}

impl<T: Scalar> BlockWeights<T> {
    fn placeholder() -> Self {
        let z = || Tensor::zeros(&[1]);
        Self {
            ln1_g: z(),
            ln1_b: z(),
            wq: z(),
            bq: z(),
            wk: z(),
            bk: z(),
            wv: z(),
            bv: z(),
            wo: z(),
            bo: z(),
            ln2_g: z(),
            ln2_b: z(),
            w1: z(),
            b1: z(),
            w2: z(),
            b2: z(),
        }
    }
}

/// Weights bound to tape variables for one pass.
pub(crate) struct BoundBlock {
    pub ln1_g: Var,
    pub ln1_b: Var,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln2_g: Var,
    pub ln2_b: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub(crate) struct Bound {
    pub patch_w: Var,
    pub patch_b: Var,
    pub pos_spatial: Var,
    pub pos_temporal: Var,
    pub time_table: Var,
    pub cond_table: Var,
    pub fps_table: Var,
    pub blocks: Vec<BoundBlock>,
    pub lnf_g: Var,
    pub lnf_b: Var,
    pub out_w: Var,
    pub out_b: Var,
}

impl Bound {
    /// Places every weight on the tape, as trainable leaves or constants.
    pub fn new<T: Scalar>(tape: &mut Tape<T>, w: &Weights<T>, trainable: bool) -> Self {
        let mut put = |t: &Tensor<T>| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let patch_w = put(&w.patch_w);
        let patch_b = put(&w.patch_b);
        let pos_spatial = put(&w.pos_spatial);
        let pos_temporal = put(&w.pos_temporal);
        let time_table = put(&w.time_table);
        let cond_table = put(&w.cond_table);
        let fps_table = put(&w.fps_table);
        let blocks = w
            .blocks
            .iter()
            .map(|b| BoundBlock {
                ln1_g: put(&b.ln1_g),
                ln1_b: put(&b.ln1_b),
                wq: put(&b.wq),
                bq: put(&b.bq),
                wk: put(&b.wk),
                bk: put(&b.bk),
                wv: put(&b.wv),
                bv: put(&b.bv),
                wo: put(&b.wo),
                bo: put(&b.bo),
                ln2_g: put(&b.ln2_g),
                ln2_b: put(&b.ln2_b),
                w1: put(&b.w1),
                b1: put(&b.b1),
                w2: put(&b.w2),
                b2: put(&b.b2),
            })
            .collect();
        Self {
            patch_w,
            patch_b,
            pos_spatial,
            pos_temporal,
            time_table,
            cond_table,
            fps_table,
            blocks,
            lnf_g: put(&w.lnf_g),
            lnf_b: put(&w.lnf_b),
            out_w: put(&w.out_w),
            out_b: put(&w.out_b),
        }
    }

    /// Variables in the same order as [`Weights::named`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![
            self.patch_w,
            self.patch_b,
            self.pos_spatial,
            self.pos_temporal,
            self.time_table,
            self.cond_table,
            self.fps_table,
        ];
        for b in &self.blocks {
            v.extend([
                b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_g, b.ln2_b, b.w1,
                b.b1, b.w2, b.b2,
            ]);
        }
        v.extend([self.lnf_g, self.lnf_b, self.out_w, self.out_b]);
        v
    }
}
