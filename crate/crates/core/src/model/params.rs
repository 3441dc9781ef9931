use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::embedding::{AUDIO_DIM, SENTENCE_DIM, TEXT_DIM};

pub const FUSED_DIM: usize = 512;
pub const HEAD_HIDDEN: usize = 256;

/// Shape of one stacked self-attention encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MhsaConfig {
    pub num_blocks: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ffn_hidden: usize,
}

impl MhsaConfig {
    /// Six blocks of eight heads with a 4x feed-forward expansion.
    pub fn standard(model_dim: usize) -> Self {
        Self {
            num_blocks: 6,
            num_heads: 8,
            model_dim,
            ffn_hidden: 4 * model_dim,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_heads == 0 || self.model_dim == 0 || self.ffn_hidden == 0 {
            return Err(ModelError::Config(format!(
                "non-positive dimension in {self:?}"
            )));
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::Config(format!(
                "model_dim {} not divisible by {} heads",
                self.model_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Full network shape: two sequence encoders, the fused vector inputs that
/// bypass them, the fusion width and the regression head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub audio: MhsaConfig,
    pub text: MhsaConfig,
    /// Dimensions of the pre-computed text-embedding inputs, in fusion order.
    pub extra_dims: Vec<usize>,
    pub fused_dim: usize,
    pub head_hidden: usize,
}

impl ModelConfig {
    /// Audio, sentences, summary and focus embeddings.
    pub fn headline() -> Self {
        Self {
            audio: MhsaConfig::standard(AUDIO_DIM),
            text: MhsaConfig::standard(SENTENCE_DIM),
            extra_dims: vec![TEXT_DIM, TEXT_DIM],
            fused_dim: FUSED_DIM,
            head_hidden: HEAD_HIDDEN,
        }
    }

    /// Summary split into overall and chunk-summary embeddings, each with
    /// its own projection.
    pub fn ablation() -> Self {
        Self {
            extra_dims: vec![TEXT_DIM, TEXT_DIM, TEXT_DIM],
            ..Self::headline()
        }
    }

    /// Override encoder depth, heads and feed-forward width on both encoders.
    pub fn with_encoders(mut self, num_blocks: usize, num_heads: usize, ffn_hidden: usize) -> Self {
        for e in [&mut self.audio, &mut self.text] {
            e.num_blocks = num_blocks;
            e.num_heads = num_heads;
            e.ffn_hidden = ffn_hidden;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.audio.validate()?;
        self.text.validate()?;
        if self.fused_dim == 0 || self.head_hidden == 0 || self.extra_dims.contains(&0) {
            return Err(ModelError::Config("non-positive fusion dimension".into()));
        }
        Ok(())
    }
}

/// One encoder block. Per-head projections are packed column-wise: head `i`
/// owns columns `i*d_k .. (i+1)*d_k` of `wq`, `wk`, `wv` and rows
/// `i*d_v .. (i+1)*d_v` of `wo`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub blocks: Vec<BlockParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub bias: Array1<f64>,
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
    pub extras: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub audio: EncoderParams,
    pub text: EncoderParams,
    pub fusion: FusionParams,
    pub head: HeadParams,
}

/// How a tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

impl BlockParams {
    fn zeros(c: &MhsaConfig) -> Self {
        let d = c.model_dim;
        Self {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            w1: Array2::zeros((d, c.ffn_hidden)),
            b1: Array1::zeros(c.ffn_hidden),
            w2: Array2::zeros((c.ffn_hidden, d)),
            b2: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        let fields: [(&str, &'a [f64]); 12] = [
            ("wq", self.wq.as_slice().unwrap()),
            ("wk", self.wk.as_slice().unwrap()),
            ("wv", self.wv.as_slice().unwrap()),
            ("wo", self.wo.as_slice().unwrap()),
            ("ln1_gamma", self.ln1_gamma.as_slice().unwrap()),
            ("ln1_beta", self.ln1_beta.as_slice().unwrap()),
            ("w1", self.w1.as_slice().unwrap()),
            ("b1", self.b1.as_slice().unwrap()),
            ("w2", self.w2.as_slice().unwrap()),
            ("b2", self.b2.as_slice().unwrap()),
            ("ln2_gamma", self.ln2_gamma.as_slice().unwrap()),
            ("ln2_beta", self.ln2_beta.as_slice().unwrap()),
        ];
        out.extend(
            fields
                .into_iter()
                .map(|(n, s)| (format!("{prefix}.{n}"), s)),
        );
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.extend([
            self.wq.as_slice_mut().unwrap(),
            self.wk.as_slice_mut().unwrap(),
            self.wv.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.ln1_gamma.as_slice_mut().unwrap(),
            self.ln1_beta.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.ln2_gamma.as_slice_mut().unwrap(),
            self.ln2_beta.as_slice_mut().unwrap(),
        ]);
    }

    fn inits(c: &MhsaConfig) -> [Init; 12] {
        let (d, dk, f) = (c.model_dim, c.head_dim(), c.ffn_hidden);
        let proj = Init::Xavier {
            fan_in: d,
            fan_out: dk,
        };
        [
            proj,
            proj,
            proj,
            Init::Xavier {
                fan_in: d,
                fan_out: d,
            },
            Init::Ones,
            Init::Zeros,
            Init::Xavier {
                fan_in: d,
                fan_out: f,
            },
            Init::Zeros,
            Init::Xavier {
                fan_in: f,
                fan_out: d,
            },
            Init::Zeros,
            Init::Ones,
            Init::Zeros,
        ]
    }
}

impl ModelParams {
    pub fn zeros(c: &ModelConfig) -> Self {
        let enc = |m: &MhsaConfig| EncoderParams {
            blocks: (0..m.num_blocks).map(|_| BlockParams::zeros(m)).collect(),
        };
        Self {
            audio: enc(&c.audio),
            text: enc(&c.text),
            fusion: FusionParams {
                bias: Array1::zeros(c.fused_dim),
                audio: Array2::zeros((c.audio.model_dim, c.fused_dim)),
                text: Array2::zeros((c.text.model_dim, c.fused_dim)),
                extras: c
                    .extra_dims
                    .iter()
                    .map(|&d| Array2::zeros((d, c.fused_dim)))
                    .collect(),
            },
            head: HeadParams {
                fc1_w: Array2::zeros((c.fused_dim, c.head_hidden)),
                fc1_b: Array1::zeros(c.head_hidden),
                fc2_w: Array2::zeros((c.head_hidden, 1)),
                fc2_b: Array1::zeros(1),
            },
        }
    }

    fn inits(c: &ModelConfig) -> Vec<Init> {
        let mut out = Vec::new();
        for e in [&c.audio, &c.text] {
            for _ in 0..e.num_blocks {
                out.extend(BlockParams::inits(e));
            }
        }
        let fd = c.fused_dim;
        out.push(Init::Zeros);
        out.push(Init::Xavier {
            fan_in: c.audio.model_dim,
            fan_out: fd,
        });
        out.push(Init::Xavier {
            fan_in: c.text.model_dim,
            fan_out: fd,
        });
        for &d in &c.extra_dims {
            out.push(Init::Xavier {
                fan_in: d,
                fan_out: fd,
            });
        }
        out.extend([
            Init::Xavier {
                fan_in: fd,
                fan_out: c.head_hidden,
            },
            Init::Zeros,
            Init::Xavier {
                fan_in: c.head_hidden,
                fan_out: 1,
            },
            Init::Zeros,
        ]);
        out
    }

    /// Glorot-uniform matrices, zero biases and shifts, unit layer-norm
    /// scales, drawn in declaration order from one seeded stream.
    pub fn init(c: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        c.validate()?;
        let mut p = Self::zeros(c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inits = Self::inits(c);
        for (t, init) in p.tensors_mut().into_iter().zip(inits) {
            match init {
                Init::Zeros => t.fill(0.0),
                Init::Ones => t.fill(1.0),
                Init::Xavier { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    t.iter_mut().for_each(|x| *x = rng.gen_range(-a..a));
                }
            }
        }
        Ok(p)
    }

    /// Every tensor with a dotted path, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (name, enc) in [("audio", &self.audio), ("text", &self.text)] {
            for (i, b) in enc.blocks.iter().enumerate() {
                b.tensors(&format!("{name}.block{i}"), &mut out);
            }
        }
        let f = &self.fusion;
        out.push(("fusion.bias".into(), f.bias.as_slice().unwrap()));
        out.push(("fusion.audio".into(), f.audio.as_slice().unwrap()));
        out.push(("fusion.text".into(), f.text.as_slice().unwrap()));
        for (i, w) in f.extras.iter().enumerate() {
            out.push((format!("fusion.extra{i}"), w.as_slice().unwrap()));
        }
        let h = &self.head;
        out.push(("head.fc1_w".into(), h.fc1_w.as_slice().unwrap()));
        out.push(("head.fc1_b".into(), h.fc1_b.as_slice().unwrap()));
        out.push(("head.fc2_w".into(), h.fc2_w.as_slice().unwrap()));
        out.push(("head.fc2_b".into(), h.fc2_b.as_slice().unwrap()));
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for enc in [&mut self.audio, &mut self.text] {
            for b in enc.blocks.iter_mut() {
                b.tensors_mut(&mut out);
            }
        }
        let f = &mut self.fusion;
        out.push(f.bias.as_slice_mut().unwrap());
        out.push(f.audio.as_slice_mut().unwrap());
        out.push(f.text.as_slice_mut().unwrap());
        for w in f.extras.iter_mut() {
            out.push(w.as_slice_mut().unwrap());
        }
        let h = &mut self.head;
        out.push(h.fc1_w.as_slice_mut().unwrap());
        out.push(h.fc1_b.as_slice_mut().unwrap());
        out.push(h.fc2_w.as_slice_mut().unwrap());
        out.push(h.fc2_b.as_slice_mut().unwrap());
        out
    }

    pub fn zeros_like(&self) -> Self {
        fn m(a: &Array2<f64>) -> Array2<f64> {
            Array2::zeros(a.raw_dim())
        }
        fn v(a: &Array1<f64>) -> Array1<f64> {
            Array1::zeros(a.raw_dim())
        }
        let enc = |e: &EncoderParams| EncoderParams {
            blocks: e
                .blocks
                .iter()
                .map(|b| BlockParams {
                    wq: m(&b.wq),
                    wk: m(&b.wk),
                    wv: m(&b.wv),
                    wo: m(&b.wo),
                    ln1_gamma: v(&b.ln1_gamma),
                    ln1_beta: v(&b.ln1_beta),
                    w1: m(&b.w1),
                    b1: v(&b.b1),
                    w2: m(&b.w2),
                    b2: v(&b.b2),
                    ln2_gamma: v(&b.ln2_gamma),
                    ln2_beta: v(&b.ln2_beta),
                })
                .collect(),
        };
        Self {
            audio: enc(&self.audio),
            text: enc(&self.text),
            fusion: FusionParams {
                bias: v(&self.fusion.bias),
                audio: m(&self.fusion.audio),
                text: m(&self.fusion.text),
                extras: self.fusion.extras.iter().map(m).collect(),
            },
            head: HeadParams {
                fc1_w: m(&self.head.fc1_w),
                fc1_b: v(&self.head.fc1_b),
                fc2_w: m(&self.head.fc2_w),
                fc2_b: v(&self.head.fc2_b),
            },
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// First non-finite entry, by tensor path.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    /// Element-wise `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &Self, alpha: f64) {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, x)| *d += alpha * x);
        }
    }
}
