use std::collections::BTreeMap;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Conv3dSpec, Scalar, Tensor};
use crate::rng::Xorshift64Star;

/// One residual block of the visual trunk.
#[derive(Debug, Clone)]
pub(crate) struct TrunkBlock {
    pub prefix: String,
    pub conv1: Conv3dSpec,
    pub conv2: Conv3dSpec,
    pub shortcut: Option<Conv3dSpec>,
}

/// Residual blocks in execution order. The first block of every stage halves
/// height and width; a projection shortcut is used whenever the block changes
/// resolution or width.
pub(crate) fn trunk_blocks(config: &ModelConfig) -> Vec<TrunkBlock> {
    let mut blocks = Vec::new();
    let mut width = config.frontend_channels;
    for (stage, &out) in config.trunk_channels.iter().enumerate() {
        for block in 0..config.trunk_blocks {
            let s = if block == 0 { 2 } else { 1 };
            let conv = |cin| {
                Conv3dSpec::new(cin, out, [1, 3, 3], [1, s, s])
                    .with_padding([0, 1, 1])
                    .without_bias()
            };
            let conv1 = conv(width);
            let conv2 = Conv3dSpec::new(out, out, [1, 3, 3], [1, 1, 1])
                .with_padding([0, 1, 1])
                .without_bias();
            let shortcut = (s != 1 || width != out).then(|| Conv3dSpec::new(width, out, [1, 1, 1], [1, s, s]));
            blocks.push(TrunkBlock {
                prefix: format!("vfn.trunk.{stage}.{block}"),
                conv1,
                conv2,
                shortcut,
            });
            width = out;
        }
    }
    blocks
}

pub(crate) const PASSES: [&str; 2] = ["intra", "inter"];
pub(crate) const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

#[derive(Debug, Clone, Copy)]
enum Init {
    Uniform(f64),
    Constant(f64),
    /// Zero except the forget-gate block, which is one.
    LstmBias(usize),
}

#[derive(Debug, Clone)]
struct ParamSpec {
    name: String,
    dims: Vec<usize>,
    init: Init,
}

#[derive(Default)]
struct Table(Vec<ParamSpec>);

impl Table {
    fn push(&mut self, name: String, dims: Vec<usize>, init: Init) {
        self.0.push(ParamSpec { name, dims, init });
    }

    /// A kernel whose fan-in is the product of every axis after the first,
    /// plus an optional bias with the same bound.
    fn kernel(&mut self, prefix: &str, dims: Vec<usize>, bias: bool) {
        let fan_in: usize = dims[1..].iter().product();
        let bound = (1.0 / fan_in as f64).sqrt();
        if bias {
            self.push(format!("{prefix}.bias"), vec![dims[0]], Init::Uniform(bound));
        }
        self.push(format!("{prefix}.weight"), dims, Init::Uniform(bound));
    }

    fn norm(&mut self, prefix: &str, channels: usize) {
        self.push(format!("{prefix}.gamma"), vec![channels], Init::Constant(1.0));
        self.push(format!("{prefix}.beta"), vec![channels], Init::Constant(0.0));
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) {
        for dir in DIRECTIONS {
            let bound = (1.0 / (input + hidden) as f64).sqrt();
            self.push(format!("{prefix}.{dir}.weight"), vec![4 * hidden, input + hidden], Init::Uniform(bound));
            self.push(format!("{prefix}.{dir}.bias"), vec![4 * hidden], Init::LstmBias(hidden));
        }
    }
}

/// Every parameter tensor of `config`, sorted by name.
fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut t = Table::default();
    let c = config.fusion_channels;
    t.kernel("encoder", config.encoder_spec().weight_dims(), true);

    let front = config.frontend_spec();
    t.kernel("vfn.frontend", front.weight_dims(), true);
    for block in trunk_blocks(config) {
        let p = &block.prefix;
        t.kernel(&format!("{p}.conv1"), block.conv1.weight_dims(), false);
        t.norm(&format!("{p}.norm1"), block.conv1.out_channels);
        t.kernel(&format!("{p}.conv2"), block.conv2.weight_dims(), false);
        t.norm(&format!("{p}.norm2"), block.conv2.out_channels);
        if let Some(sc) = block.shortcut {
            t.kernel(&format!("{p}.shortcut"), sc.weight_dims(), true);
        }
    }
    t.kernel("vfn.proj", vec![config.visual_embed, config.trunk_output_channels()], true);
    t.kernel("fusion", config.fusion_spec().weight_dims(), true);

    for unit in 0..config.sep_units {
        for pass in PASSES {
            let p = format!("separator.{unit}.{pass}");
            t.lstm(&format!("{p}.lstm"), c, config.sep_hidden);
            t.kernel(&format!("{p}.proj"), vec![c, 2 * config.sep_hidden], true);
            t.norm(&format!("{p}.norm"), c);
        }
    }
    t.kernel("mask", config.mask_spec().weight_dims(), true);
    // Transposed kernel [N, 1, K]: the bias belongs to the single output
    // channel (axis 1), not to axis 0.
    let dec = config.decoder_spec();
    t.kernel("decoder", dec.transpose_weight_dims(), false);
    let bound = (1.0 / (dec.out_channels * dec.kernel[0]) as f64).sqrt();
    t.push("decoder.bias".into(), vec![dec.out_channels], Init::Uniform(bound));

    let mut specs = t.0;
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    specs
}

/// Name and shape of every parameter tensor, sorted by name.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    param_specs(config).into_iter().map(|s| (s.name, s.dims)).collect()
}

/// Exact number of scalar parameters of a model built from `config`.
pub fn count_parameters(config: &ModelConfig) -> usize {
    param_specs(config).iter().map(|s| s.dims.iter().product::<usize>()).sum()
}

/// Draws a fresh parameter set. Tensors are filled in name order from one
/// generator, so the result depends only on `config` and `seed`.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = Xorshift64Star::new(seed);
    let mut tensors = BTreeMap::new();
    for spec in param_specs(config) {
        let len: usize = spec.dims.iter().product();
        let data: Vec<f32> = match spec.init {
            Init::Uniform(bound) => (0..len).map(|_| rng.uniform(-bound, bound) as f32).collect(),
            Init::Constant(v) => vec![v as f32; len],
            Init::LstmBias(h) => (0..len).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect(),
        };
        tensors.insert(spec.name, Tensor::new(spec.dims, data)?);
    }
    Ok(ModelParams { tensors })
}

/// Named parameter tensors of the network (or gradients shaped like them).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero tensors with the shapes of `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = param_specs(config)
            .into_iter()
            .map(|s| (s.name, Tensor::zeros(s.dims)))
            .collect();
        Self { tensors }
    }

    pub fn from_tensors(tensors: impl IntoIterator<Item = (String, Tensor<T>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, t) in tensors {
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::config(format!("duplicate parameter `{name}`")));
            }
        }
        Ok(Self { tensors: map })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    /// Replaces an existing tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self.get_mut(name)?;
        slot.expect_dims(value.dims())?;
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of scalar entries over all tensors.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Sum of squares of every entry, accumulated in f64.
    pub fn sum_squares(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }

    /// Fails unless the names and shapes are exactly those of `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = parameter_shapes(config);
        if expected.len() != self.tensors.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for (name, dims) in expected {
            self.get(&name)?.expect_dims(&dims)?;
        }
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        self.get_mut(name)?.add_assign(grad)
    }
}
