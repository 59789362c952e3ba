use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::scalar::Scalar;
use crate::error::Result;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    TokenEmbedding,
    PositionEmbedding,
    NormWeight,
    NormBias,
    AttnInWeight,
    AttnInBias,
    AttnOutWeight,
    AttnOutBias,
    MlpInWeight,
    MlpInBias,
    MlpOutWeight,
    MlpOutBias,
}

impl TensorKind {
    fn init(self) -> Init {
        match self {
            TensorKind::NormWeight => Init::Ones,
            TensorKind::NormBias
            | TensorKind::AttnInBias
            | TensorKind::AttnOutBias
            | TensorKind::MlpInBias
            | TensorKind::MlpOutBias => Init::Zeros,
            _ => Init::Normal,
        }
    }
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub ln1_w: usize,
    pub ln1_b: usize,
    /// `[3d, d]` qkv projection, or `[d, d]` value-only projection in the
    /// uniform-attention modes.
    pub attn_w: usize,
    pub attn_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_w: usize,
    pub ln2_b: usize,
    pub fc_w: usize,
    pub fc_b: usize,
    pub fcp_w: usize,
    pub fcp_b: usize,
}

/// Names, shapes and offsets of every tensor in the flat parameter buffer.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    pub(crate) wte: usize,
    pub(crate) wpe: Option<usize>,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) lnf_w: usize,
    pub(crate) lnf_b: usize,
}

impl ParamLayout {
    pub fn new(c: &ModelConfig) -> Self {
        let d = c.width;
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>, kind: TensorKind| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec {
                name,
                shape,
                offset,
                kind,
            });
            offset
        };
        use TensorKind::*;
        let wte = add("wte".into(), vec![c.vocab_size, d], TokenEmbedding);
        let wpe = c
            .attention
            .has_positions()
            .then(|| add("wpe".into(), vec![c.seq_len, d], PositionEmbedding));
        let attn_rows = if c.attention.has_positions() { 3 * d } else { d };
        let attn_name = if c.attention.has_positions() { "qkv" } else { "v" };
        let layers = (0..c.layers)
            .map(|l| {
                let p = format!("h{l}");
                LayerOffsets {
                    ln1_w: add(format!("{p}.ln1.weight"), vec![d], NormWeight),
                    ln1_b: add(format!("{p}.ln1.bias"), vec![d], NormBias),
                    attn_w: add(format!("{p}.attn.{attn_name}.weight"), vec![attn_rows, d], AttnInWeight),
                    attn_b: add(format!("{p}.attn.{attn_name}.bias"), vec![attn_rows], AttnInBias),
                    proj_w: add(format!("{p}.attn.proj.weight"), vec![d, d], AttnOutWeight),
                    proj_b: add(format!("{p}.attn.proj.bias"), vec![d], AttnOutBias),
                    ln2_w: add(format!("{p}.ln2.weight"), vec![d], NormWeight),
                    ln2_b: add(format!("{p}.ln2.bias"), vec![d], NormBias),
                    fc_w: add(format!("{p}.mlp.fc.weight"), vec![4 * d, d], MlpInWeight),
                    fc_b: add(format!("{p}.mlp.fc.bias"), vec![4 * d], MlpInBias),
                    fcp_w: add(format!("{p}.mlp.proj.weight"), vec![d, 4 * d], MlpOutWeight),
                    fcp_b: add(format!("{p}.mlp.proj.bias"), vec![d], MlpOutBias),
                }
            })
            .collect();
        let lnf_w = add("lnf.weight".into(), vec![d], NormWeight);
        let lnf_b = add("lnf.bias".into(), vec![d], NormBias);
        ParamLayout {
            tensors,
            total,
            wte,
            wpe,
            layers,
            lnf_w,
            lnf_b,
        }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Decoder-only transformer with tied input/output embeddings. Parameters
/// live in one flat buffer described by [`ParamLayout`].
#[derive(Debug, Clone)]
pub struct Model<F: Scalar = f32> {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<F>,
}

pub fn build_model<F: Scalar>(config: &ModelConfig) -> Result<Model<F>> {
    Model::new(config)
}

impl<F: Scalar> Model<F> {
    /// Gaussian(0, 0.02) weights, zero biases, unit norm gains, all drawn
    /// from `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let mut params = vec![F::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for t in &layout.tensors {
            let dst = &mut params[t.range()];
            match t.kind.init() {
                Init::Zeros => {}
                Init::Ones => dst.fill(F::one()),
                Init::Normal => {
                    for x in dst {
                        *x = F::of(normal.sample(&mut rng));
                    }
                }
            }
        }
        Ok(Model {
            config: config.clone(),
            layout,
            params,
        })
    }

    /// Every parameter zero: logits are uniform whatever the input.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let params = vec![F::zero(); layout.total];
        Ok(Model {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn tensor(&self, name: &str) -> Option<&[F]> {
        self.layout.get(name).map(|t| &self.params[t.range()])
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&x| G::of(x.f64())).collect(),
        }
    }
}
