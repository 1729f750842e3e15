//! Forward pass of the enhancement network and its reverse-mode gradient.
//!
//! Stages are the encoder, the visual branch, fusion, the chunked
//! bidirectional-LSTM separator producing a mask, and the decoder. [`forward`]
//! records what [`backward`] needs; the stage functions exported next to it
//! run the same code with recording switched off.

use super::params::{trunk_blocks, TrunkBlock, DIRECTIONS, PASSES};
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{
    activation, activation_vjp_from_output, bilstm_forward, bilstm_vjp, conv1d, conv1d_vjp, conv3d, conv3d_vjp,
    conv_transpose1d, conv_transpose1d_vjp, group_norm, group_norm_batched, group_norm_batched_vjp, group_norm_vjp,
    linear, linear_vjp, resize_linear_time, resize_linear_time_vjp, Activation, GroupNormParams, LstmCache,
    LstmDirection, LstmParams, Scalar, Tensor,
};

/// Everything recorded by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct Trace<T: Scalar> {
    /// Right-padded input waveform `[1, T_pad]`.
    padded: Tensor<T>,
    output_len: usize,
    audio: Tensor<T>,
    visual: VisualTrace<T>,
    fusion: FusionTrace<T>,
    separator: SeparatorTrace<T>,
    masked: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn mask(&self) -> &Tensor<T> {
        &self.separator.mask
    }
}

#[derive(Debug, Clone)]
struct VisualTrace<T: Scalar> {
    /// Frames viewed as a one-channel volume `[1, F, H, W]`.
    volume: Tensor<T>,
    frontend: Tensor<T>,
    blocks: Vec<BlockTrace<T>>,
    /// Spatial means `[F, C]`.
    pooled: Tensor<T>,
    /// Dims of the trunk output `[C, F, h, w]`.
    trunk_dims: Vec<usize>,
}

#[derive(Debug, Clone)]
struct BlockTrace<T: Scalar> {
    input: Tensor<T>,
    conv1: Tensor<T>,
    hidden: Tensor<T>,
    conv2: Tensor<T>,
    output: Tensor<T>,
}

#[derive(Debug, Clone)]
struct FusionTrace<T: Scalar> {
    frames: usize,
    stacked: Tensor<T>,
    output: Tensor<T>,
}

#[derive(Debug, Clone)]
struct SeparatorTrace<T: Scalar> {
    chunks: usize,
    units: Vec<[PassTrace<T>; 2]>,
    merged: Tensor<T>,
    mask: Tensor<T>,
}

#[derive(Debug, Clone)]
struct PassTrace<T: Scalar> {
    lstm_in: Tensor<T>,
    lstm_out: Tensor<T>,
    lstm: LstmCache<T>,
    /// Projection output in `[C, B*T]` layout, the norm's input.
    norm_in: Tensor<T>,
}

fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    activation(Activation::Relu, x)
}

fn relu_back<T: Scalar>(y: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    activation_vjp_from_output(Activation::Relu, y.data(), dy.data_mut());
    dy
}

fn norm_params<T: Scalar>(params: &ModelParams<T>, prefix: &str, groups: usize, eps: f64) -> Result<GroupNormParams<T>> {
    Ok(GroupNormParams {
        groups,
        gamma: params.get(&format!("{prefix}.gamma"))?.clone(),
        beta: params.get(&format!("{prefix}.beta"))?.clone(),
        eps,
    })
}

fn lstm_params<T: Scalar>(params: &ModelParams<T>, prefix: &str, config: &ModelConfig) -> Result<LstmParams<T>> {
    let dir = |d: &str| -> Result<LstmDirection<T>> {
        Ok(LstmDirection {
            weight: params.get(&format!("{prefix}.{d}.weight"))?.clone(),
            bias: params.get(&format!("{prefix}.{d}.bias"))?.clone(),
        })
    };
    Ok(LstmParams {
        input_size: config.fusion_channels,
        hidden_size: config.sep_hidden,
        forward: dir(DIRECTIONS[0])?,
        backward: dir(DIRECTIONS[1])?,
    })
}

/// Swaps the first two axes of a rank-3 tensor.
fn swap01<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (a, b, c) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let mut out = Vec::with_capacity(x.len());
    for j in 0..b {
        for i in 0..a {
            let start = (i * b + j) * c;
            out.extend_from_slice(&x.data()[start..start + c]);
        }
    }
    Tensor::new([b, a, c], out).expect("swap01 preserves length")
}

fn wave_row<T: Scalar>(wave: &Tensor<T>) -> Result<Tensor<T>> {
    if wave.rank() != 1 {
        return Err(Error::shape(format!("waveform must be one-dimensional, got dims {:?}", wave.dims())));
    }
    wave.clone().reshape([1, wave.len()])
}

// ---------------------------------------------------------------- encoder

/// Learned analysis filterbank: `[T] -> [N, T_a]`, non-negative.
pub fn encode_audio<T: Scalar>(wave: &Tensor<T>, params: &ModelParams<T>, config: &ModelConfig) -> Result<Tensor<T>> {
    encode_row(&wave_row(wave)?, params, config)
}

fn encode_row<T: Scalar>(row: &Tensor<T>, params: &ModelParams<T>, config: &ModelConfig) -> Result<Tensor<T>> {
    let y = conv1d(
        row,
        &config.encoder_spec(),
        params.get("encoder.weight")?,
        Some(params.get("encoder.bias")?),
    )?;
    Ok(relu(&y))
}

// ----------------------------------------------------------------- visual

/// One embedding per video frame: `[F, 1, H, W] -> [F, D_v]`.
pub fn visual_forward<T: Scalar>(frames: &Tensor<T>, params: &ModelParams<T>, config: &ModelConfig) -> Result<Tensor<T>> {
    Ok(visual_traced(frames, params, config)?.0)
}

fn visual_traced<T: Scalar>(
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<(Tensor<T>, VisualTrace<T>)> {
    let (f, h, w) = match *frames.dims() {
        [f, 1, h, w] => (f, h, w),
        _ => return Err(Error::shape(format!("frames must be [F, 1, H, W], got {:?}", frames.dims()))),
    };
    if f == 0 {
        return Err(Error::EmptySequence);
    }
    let volume = frames.clone().reshape([1, f, h, w])?;
    let frontend = relu(&conv3d(
        &volume,
        &config.frontend_spec(),
        params.get("vfn.frontend.weight")?,
        Some(params.get("vfn.frontend.bias")?),
    )?);

    let mut x = frontend.clone();
    let mut blocks = Vec::new();
    for block in trunk_blocks(config) {
        let trace = block_forward(&x, &block, params, config)?;
        x = trace.output.clone();
        blocks.push(trace);
    }

    let (c, area) = (x.dims()[0], x.dims()[2] * x.dims()[3]);
    let scale = T::of(1.0 / area as f64);
    let mut pooled = vec![T::zero(); f * c];
    for ch in 0..c {
        for fr in 0..f {
            let start = (ch * f + fr) * area;
            let s: T = x.data()[start..start + area].iter().copied().sum();
            pooled[fr * c + ch] = s * scale;
        }
    }
    let pooled = Tensor::new([f, c], pooled)?;
    let embed = linear(&pooled, params.get("vfn.proj.weight")?, params.get("vfn.proj.bias")?)?;
    let trace = VisualTrace {
        volume,
        frontend,
        blocks,
        pooled,
        trunk_dims: x.dims().to_vec(),
    };
    Ok((embed, trace))
}

fn block_forward<T: Scalar>(
    x: &Tensor<T>,
    block: &TrunkBlock,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<BlockTrace<T>> {
    let p = &block.prefix;
    let frames = x.dims()[1];
    let (groups, eps) = (config.trunk_norm_groups, config.norm_eps);
    let conv1 = conv3d(x, &block.conv1, params.get(&format!("{p}.conv1.weight"))?, None)?;
    let norm1 = norm_params(params, &format!("{p}.norm1"), groups, eps)?;
    let hidden = relu(&group_norm_batched(&conv1, frames, &norm1)?);
    let conv2 = conv3d(&hidden, &block.conv2, params.get(&format!("{p}.conv2.weight"))?, None)?;
    let norm2 = norm_params(params, &format!("{p}.norm2"), groups, eps)?;
    let mut sum = group_norm_batched(&conv2, frames, &norm2)?;
    match &block.shortcut {
        Some(spec) => sum.add_assign(&conv3d(
            x,
            spec,
            params.get(&format!("{p}.shortcut.weight"))?,
            Some(params.get(&format!("{p}.shortcut.bias"))?),
        )?)?,
        None => sum.add_assign(x)?,
    }
    Ok(BlockTrace {
        input: x.clone(),
        conv1,
        hidden,
        conv2,
        output: relu(&sum),
    })
}

fn block_backward<T: Scalar>(
    trace: &BlockTrace<T>,
    block: &TrunkBlock,
    params: &ModelParams<T>,
    config: &ModelConfig,
    d_out: Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor<T>> {
    let p = &block.prefix;
    let frames = trace.input.dims()[1];
    let (groups, eps) = (config.trunk_norm_groups, config.norm_eps);
    let d_sum = relu_back(&trace.output, d_out);

    let mut d_in = match &block.shortcut {
        Some(spec) => {
            let g = conv3d_vjp(&trace.input, spec, params.get(&format!("{p}.shortcut.weight"))?, &d_sum)?;
            grads.accumulate(&format!("{p}.shortcut.weight"), &g.weight)?;
            grads.accumulate(&format!("{p}.shortcut.bias"), g.bias.as_ref().expect("shortcut has a bias"))?;
            g.input
        }
        None => d_sum.clone(),
    };

    let norm2 = norm_params(params, &format!("{p}.norm2"), groups, eps)?;
    let g2 = group_norm_batched_vjp(&trace.conv2, frames, &norm2, &d_sum)?;
    grads.accumulate(&format!("{p}.norm2.gamma"), &g2.gamma)?;
    grads.accumulate(&format!("{p}.norm2.beta"), &g2.beta)?;
    let c2 = conv3d_vjp(&trace.hidden, &block.conv2, params.get(&format!("{p}.conv2.weight"))?, &g2.input)?;
    grads.accumulate(&format!("{p}.conv2.weight"), &c2.weight)?;

    let d_norm1 = relu_back(&trace.hidden, c2.input);
    let norm1 = norm_params(params, &format!("{p}.norm1"), groups, eps)?;
    let g1 = group_norm_batched_vjp(&trace.conv1, frames, &norm1, &d_norm1)?;
    grads.accumulate(&format!("{p}.norm1.gamma"), &g1.gamma)?;
    grads.accumulate(&format!("{p}.norm1.beta"), &g1.beta)?;
    let c1 = conv3d_vjp(&trace.input, &block.conv1, params.get(&format!("{p}.conv1.weight"))?, &g1.input)?;
    grads.accumulate(&format!("{p}.conv1.weight"), &c1.weight)?;

    d_in.add_assign(&c1.input)?;
    Ok(d_in)
}

fn visual_backward<T: Scalar>(
    trace: &VisualTrace<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    d_embed: &Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<()> {
    let g = linear_vjp(&trace.pooled, params.get("vfn.proj.weight")?, d_embed)?;
    grads.accumulate("vfn.proj.weight", &g.weight)?;
    grads.accumulate("vfn.proj.bias", &g.bias)?;

    let (c, f) = (trace.trunk_dims[0], trace.trunk_dims[1]);
    let area = trace.trunk_dims[2] * trace.trunk_dims[3];
    let scale = T::of(1.0 / area as f64);
    let mut d = Tensor::from_fn(trace.trunk_dims.clone(), |i| {
        let (ch, fr) = (i / (f * area), (i / area) % f);
        g.input.data()[fr * c + ch] * scale
    });
    for (block, bt) in trunk_blocks(config).iter().zip(&trace.blocks).rev() {
        d = block_backward(bt, block, params, config, d, grads)?;
    }

    let d = relu_back(&trace.frontend, d);
    let g = conv3d_vjp(&trace.volume, &config.frontend_spec(), params.get("vfn.frontend.weight")?, &d)?;
    grads.accumulate("vfn.frontend.weight", &g.weight)?;
    grads.accumulate("vfn.frontend.bias", g.bias.as_ref().expect("frontend has a bias"))?;
    Ok(())
}

// ----------------------------------------------------------------- fusion

/// Aligns the visual embeddings to the audio frame rate, stacks them under
/// the audio features, and mixes them with a pointwise convolution:
/// `[N, T_a] x [F, D_v] -> [C, T_a]`.
pub fn fuse<T: Scalar>(
    audio: &Tensor<T>,
    visual: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    Ok(fuse_traced(audio, visual, params, config)?.0)
}

fn fuse_traced<T: Scalar>(
    audio: &Tensor<T>,
    visual: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<(Tensor<T>, FusionTrace<T>)> {
    let (n, t_a) = audio.dims2()?;
    if n != config.enc_channels {
        return Err(Error::shape(format!("audio features have {n} channels, expected {}", config.enc_channels)));
    }
    if t_a == 0 {
        return Err(Error::shape("cannot fuse an empty audio feature map"));
    }
    let (frames, d_v) = visual.dims2()?;
    if d_v != config.visual_embed {
        return Err(Error::shape(format!("visual embeddings have width {d_v}, expected {}", config.visual_embed)));
    }
    let aligned = resize_linear_time(visual, t_a)?.transpose2()?;
    let mut stacked = audio.data().to_vec();
    stacked.extend_from_slice(aligned.data());
    let stacked = Tensor::new([n + d_v, t_a], stacked)?;
    let output = relu(&conv1d(
        &stacked,
        &config.fusion_spec(),
        params.get("fusion.weight")?,
        Some(params.get("fusion.bias")?),
    )?);
    let trace = FusionTrace {
        frames,
        stacked,
        output: output.clone(),
    };
    Ok((output, trace))
}

/// Returns the cotangents of the audio features and the visual embeddings.
fn fuse_backward<T: Scalar>(
    trace: &FusionTrace<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    d_out: Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = relu_back(&trace.output, d_out);
    let g = conv1d_vjp(&trace.stacked, &config.fusion_spec(), params.get("fusion.weight")?, &d)?;
    grads.accumulate("fusion.weight", &g.weight)?;
    grads.accumulate("fusion.bias", g.bias.as_ref().expect("fusion has a bias"))?;
    let (n, t_a) = (config.enc_channels, trace.stacked.dims()[1]);
    let split = n * t_a;
    let d_audio = Tensor::new([n, t_a], g.input.data()[..split].to_vec())?;
    let d_aligned = Tensor::new([config.visual_embed, t_a], g.input.data()[split..].to_vec())?;
    let d_visual = resize_linear_time_vjp(trace.frames, &d_aligned.transpose2()?)?;
    Ok((d_audio, d_visual))
}

// -------------------------------------------------------------- separator

/// Number of half-overlapping chunks of `len` frames covering `frames`.
pub fn chunk_count(frames: usize, len: usize, hop: usize) -> usize {
    if frames <= len {
        1
    } else {
        (frames - len).div_ceil(hop) + 1
    }
}

fn overlap_counts(frames: usize, chunks: usize, len: usize, hop: usize) -> Vec<usize> {
    let mut counts = vec![0; frames];
    for q in 0..chunks {
        for t in q * hop..(q * hop + len).min(frames) {
            counts[t] += 1;
        }
    }
    counts
}

/// Gathers `x: [C, T]` into `[Q, P, C]`, optionally weighting each frame.
fn gather<T: Scalar>(x: &Tensor<T>, chunks: usize, len: usize, hop: usize, weight: Option<&[T]>) -> Tensor<T> {
    let (c, frames) = (x.dims()[0], x.dims()[1]);
    let mut out = vec![T::zero(); chunks * len * c];
    for q in 0..chunks {
        for i in 0..len {
            let t = q * hop + i;
            if t >= frames {
                break;
            }
            let w = weight.map_or(T::one(), |w| w[t]);
            let row = &mut out[(q * len + i) * c..(q * len + i + 1) * c];
            for (ch, slot) in row.iter_mut().enumerate() {
                *slot = x.data()[ch * frames + t] * w;
            }
        }
    }
    Tensor::new([chunks, len, c], out).expect("gather length")
}

/// Sums `[Q, P, C]` chunks back onto `[C, frames]`, optionally weighting each frame.
fn scatter<T: Scalar>(chunks: &Tensor<T>, frames: usize, hop: usize, weight: Option<&[T]>) -> Tensor<T> {
    let (q_count, len, c) = (chunks.dims()[0], chunks.dims()[1], chunks.dims()[2]);
    let mut out = vec![T::zero(); c * frames];
    for q in 0..q_count {
        for i in 0..len {
            let t = q * hop + i;
            if t >= frames {
                break;
            }
            let row = &chunks.data()[(q * len + i) * c..(q * len + i + 1) * c];
            for (ch, &v) in row.iter().enumerate() {
                out[ch * frames + t] = out[ch * frames + t] + v;
            }
        }
    }
    if let Some(w) = weight {
        for ch in 0..c {
            for t in 0..frames {
                out[ch * frames + t] = out[ch * frames + t] * w[t];
            }
        }
    }
    Tensor::new([c, frames], out).expect("scatter length")
}

fn inverse_counts<T: Scalar>(frames: usize, chunks: usize, len: usize, hop: usize) -> Vec<T> {
    overlap_counts(frames, chunks, len, hop)
        .into_iter()
        .map(|n| T::of(1.0 / n as f64))
        .collect()
}

/// Splits `x: [C, T]` into half-overlapping chunks `[Q, P, C]`, zero-padding
/// the tail of the last chunk.
pub fn segment<T: Scalar>(x: &Tensor<T>, len: usize, hop: usize) -> Result<Tensor<T>> {
    let (_, frames) = x.dims2()?;
    if frames == 0 {
        return Err(Error::shape("cannot segment an empty feature map"));
    }
    if len == 0 || hop == 0 || hop > len {
        return Err(Error::config("chunk hop must be in 1..=chunk length"));
    }
    Ok(gather(x, chunk_count(frames, len, hop), len, hop, None))
}

/// Inverse of [`segment`]: overlap-adds chunks `[Q, P, C]` onto `[C, frames]`
/// and divides each frame by the number of chunks covering it.
pub fn overlap_add<T: Scalar>(chunks: &Tensor<T>, frames: usize, hop: usize) -> Result<Tensor<T>> {
    let (q, len) = match *chunks.dims() {
        [q, len, _] => (q, len),
        _ => return Err(Error::shape(format!("chunks must be [Q, P, C], got {:?}", chunks.dims()))),
    };
    if frames == 0 || q != chunk_count(frames, len, hop) {
        return Err(Error::shape(format!("{q} chunks of {len} do not tile {frames} frames")));
    }
    let w = inverse_counts::<T>(frames, q, len, hop);
    Ok(scatter(chunks, frames, hop, Some(&w)))
}

/// Mask `[N, T_a]` in `[0, 1]` from the fused features `[C, T_a]`.
pub fn separator_forward<T: Scalar>(fused: &Tensor<T>, params: &ModelParams<T>, config: &ModelConfig) -> Result<Tensor<T>> {
    Ok(separator_traced(fused, params, config, false)?.mask)
}

fn separator_traced<T: Scalar>(
    fused: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    record: bool,
) -> Result<SeparatorTrace<T>> {
    let (c, frames) = fused.dims2()?;
    if c != config.fusion_channels {
        return Err(Error::shape(format!("fused features have {c} channels, expected {}", config.fusion_channels)));
    }
    let (len, hop) = (config.chunk_len, config.chunk_hop);
    let mut z = segment(fused, len, hop)?;
    let chunks = z.dims()[0];
    let mut units = Vec::new();
    for unit in 0..config.sep_units {
        let (intra_out, intra) = dual_pass(&z, params, config, &format!("separator.{unit}.{}", PASSES[0]))?;
        let (inter_out, inter) = dual_pass(&swap01(&intra_out), params, config, &format!("separator.{unit}.{}", PASSES[1]))?;
        z = swap01(&inter_out);
        if record {
            units.push([intra, inter]);
        }
    }
    let merged = overlap_add(&z, frames, hop)?;
    let mask = activation(
        Activation::Sigmoid,
        &conv1d(&merged, &config.mask_spec(), params.get("mask.weight")?, Some(params.get("mask.bias")?))?,
    );
    Ok(SeparatorTrace {
        chunks,
        units,
        merged,
        mask,
    })
}

/// BiLSTM along the second axis of `z: [B, L, C]`, projection back to `C`,
/// group norm over all positions, residual add.
fn dual_pass<T: Scalar>(
    z: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    prefix: &str,
) -> Result<(Tensor<T>, PassTrace<T>)> {
    let lstm = lstm_params(params, &format!("{prefix}.lstm"), config)?;
    let (lstm_out, cache) = bilstm_forward(z, &lstm)?;
    let proj = linear(&lstm_out, params.get(&format!("{prefix}.proj.weight"))?, params.get(&format!("{prefix}.proj.bias"))?)?;
    let c = config.fusion_channels;
    let norm_in = proj.reshape([z.len() / c, c])?.transpose2()?;
    let norm = norm_params(params, &format!("{prefix}.norm"), config.sep_norm_groups, config.norm_eps)?;
    let normed = group_norm(&norm_in, &norm)?.transpose2()?;
    let mut out = z.clone();
    out.add_assign(&normed.reshape(z.dims())?)?;
    let trace = PassTrace {
        lstm_in: z.clone(),
        lstm_out,
        lstm: cache,
        norm_in,
    };
    Ok((out, trace))
}

fn dual_pass_backward<T: Scalar>(
    trace: &PassTrace<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    prefix: &str,
    d_out: Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor<T>> {
    let c = config.fusion_channels;
    let dims = d_out.dims().to_vec();
    let d_norm = d_out.clone().reshape([d_out.len() / c, c])?.transpose2()?;
    let norm = norm_params(params, &format!("{prefix}.norm"), config.sep_norm_groups, config.norm_eps)?;
    let gn = group_norm_vjp(&trace.norm_in, &norm, &d_norm)?;
    grads.accumulate(&format!("{prefix}.norm.gamma"), &gn.gamma)?;
    grads.accumulate(&format!("{prefix}.norm.beta"), &gn.beta)?;

    let d_proj = gn.input.transpose2()?.reshape(dims)?;
    let lin = linear_vjp(&trace.lstm_out, params.get(&format!("{prefix}.proj.weight"))?, &d_proj)?;
    grads.accumulate(&format!("{prefix}.proj.weight"), &lin.weight)?;
    grads.accumulate(&format!("{prefix}.proj.bias"), &lin.bias)?;

    let lstm = lstm_params(params, &format!("{prefix}.lstm"), config)?;
    let g = bilstm_vjp(&trace.lstm_in, &lstm, &trace.lstm_out, &trace.lstm, &lin.input)?;
    for (dir, grad) in DIRECTIONS.iter().zip([&g.forward, &g.backward]) {
        grads.accumulate(&format!("{prefix}.lstm.{dir}.weight"), &grad.weight)?;
        grads.accumulate(&format!("{prefix}.lstm.{dir}.bias"), &grad.bias)?;
    }
    let mut d_in = d_out;
    d_in.add_assign(&g.input)?;
    Ok(d_in)
}

fn separator_backward<T: Scalar>(
    trace: &SeparatorTrace<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    d_mask: Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor<T>> {
    let mut d = d_mask;
    activation_vjp_from_output(Activation::Sigmoid, trace.mask.data(), d.data_mut());
    let g = conv1d_vjp(&trace.merged, &config.mask_spec(), params.get("mask.weight")?, &d)?;
    grads.accumulate("mask.weight", &g.weight)?;
    grads.accumulate("mask.bias", g.bias.as_ref().expect("mask head has a bias"))?;

    let (len, hop) = (config.chunk_len, config.chunk_hop);
    let frames = trace.merged.dims()[1];
    let w = inverse_counts::<T>(frames, trace.chunks, len, hop);
    let mut dz = gather(&g.input, trace.chunks, len, hop, Some(&w));
    for (unit, [intra, inter]) in trace.units.iter().enumerate().rev() {
        let d_inter = dual_pass_backward(inter, params, config, &format!("separator.{unit}.{}", PASSES[1]), swap01(&dz), grads)?;
        dz = dual_pass_backward(intra, params, config, &format!("separator.{unit}.{}", PASSES[0]), swap01(&d_inter), grads)?;
    }
    Ok(scatter(&dz, frames, hop, None))
}

// ------------------------------------------------------ mask and decoder

/// Elementwise product of features and mask.
pub fn apply_mask<T: Scalar>(audio: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    mask.expect_dims(audio.dims())?;
    Tensor::new(
        audio.dims(),
        audio.data().iter().zip(mask.data()).map(|(&a, &m)| a * m).collect(),
    )
}

/// Learned synthesis filterbank: `[N, T_a] -> [(T_a - 1) S + K]`.
pub fn decode_audio<T: Scalar>(masked: &Tensor<T>, params: &ModelParams<T>, config: &ModelConfig) -> Result<Tensor<T>> {
    let y = conv_transpose1d(
        masked,
        &config.decoder_spec(),
        params.get("decoder.weight")?,
        Some(params.get("decoder.bias")?),
    )?;
    let n = y.len();
    y.reshape([n])
}

// --------------------------------------------------------------- pipeline

/// Enhanced waveform with the same length as `wave`.
pub fn enhance<T: Scalar>(
    wave: &Tensor<T>,
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    Ok(run(wave, frames, params, config, false)?.0)
}

/// [`enhance`] that also records the intermediates needed by [`backward`].
pub fn forward<T: Scalar>(
    wave: &Tensor<T>,
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<(Tensor<T>, Trace<T>)> {
    run(wave, frames, params, config, true)
}

fn run<T: Scalar>(
    wave: &Tensor<T>,
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    record: bool,
) -> Result<(Tensor<T>, Trace<T>)> {
    let row = wave_row(wave)?;
    let t = row.len();
    let t_a = config
        .encoded_frames(t)
        .map(|_| (t - config.enc_kernel).div_ceil(config.enc_stride) + 1)
        .ok_or(Error::InputTooShort {
            needed: config.enc_kernel,
            got: t,
        })?;
    let t_pad = config.decoded_samples(t_a);
    let mut padded = row.into_data();
    padded.resize(t_pad, T::zero());
    let padded = Tensor::new([1, t_pad], padded)?;

    let audio = encode_row(&padded, params, config)?;
    let (embed, visual) = visual_traced(frames, params, config)?;
    let (fused, fusion) = fuse_traced(&audio, &embed, params, config)?;
    let separator = separator_traced(&fused, params, config, record)?;
    let masked = apply_mask(&audio, &separator.mask)?;
    let mut out = decode_audio(&masked, params, config)?.into_data();
    out.truncate(t);
    let trace = Trace {
        padded,
        output_len: t,
        audio,
        visual,
        fusion,
        separator,
        masked,
    };
    Ok((Tensor::vector(out), trace))
}

/// Gradient of `<d_output, enhance(..)>` with respect to every parameter.
pub fn backward<T: Scalar>(
    trace: &Trace<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    d_output: &Tensor<T>,
) -> Result<ModelParams<T>> {
    d_output.expect_dims(&[trace.output_len])?;
    if trace.separator.units.len() != config.sep_units {
        return Err(Error::config("trace was recorded without separator intermediates"));
    }
    let mut grads = ModelParams::zeros(config);

    let mut d_wave = d_output.data().to_vec();
    d_wave.resize(trace.padded.len(), T::zero());
    let d_wave = Tensor::new([1, trace.padded.len()], d_wave)?;
    let g = conv_transpose1d_vjp(&trace.masked, &config.decoder_spec(), params.get("decoder.weight")?, &d_wave)?;
    grads.accumulate("decoder.weight", &g.weight)?;
    grads.accumulate("decoder.bias", g.bias.as_ref().expect("decoder has a bias"))?;

    let mask = &trace.separator.mask;
    let mut d_audio = apply_mask(&g.input, mask)?;
    let d_mask = apply_mask(&g.input, &trace.audio)?;
    let d_fused = separator_backward(&trace.separator, params, config, d_mask, &mut grads)?;
    let (d_audio_fusion, d_embed) = fuse_backward(&trace.fusion, params, config, d_fused, &mut grads)?;
    d_audio.add_assign(&d_audio_fusion)?;
    visual_backward(&trace.visual, params, config, &d_embed, &mut grads)?;

    let d_audio = relu_back(&trace.audio, d_audio);
    let g = conv1d_vjp(&trace.padded, &config.encoder_spec(), params.get("encoder.weight")?, &d_audio)?;
    grads.accumulate("encoder.weight", &g.weight)?;
    grads.accumulate("encoder.bias", g.bias.as_ref().expect("encoder has a bias"))?;
    Ok(grads)
}
