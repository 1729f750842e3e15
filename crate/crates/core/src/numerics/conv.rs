//! Strided cross-correlation in one and three dimensions, the transposed 1-D
//! convolution, and their vector-Jacobian products.
//!
//! All variants lower to an im2col matrix and a single [`gemm`]; the
//! transposed convolution is the col2im adjoint of the same lowering.

use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Convolution hyperparameters over `D` spatial/temporal axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec<const D: usize> {
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(with = "serde_arrays")]
    pub kernel: [usize; D],
    #[serde(with = "serde_arrays")]
    pub stride: [usize; D],
    #[serde(with = "serde_arrays")]
    pub padding: [usize; D],
    pub bias: bool,
}

pub type Conv1dSpec = ConvSpec<1>;
pub type Conv3dSpec = ConvSpec<3>;

impl<const D: usize> ConvSpec<D> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: [usize; D], stride: [usize; D]) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: [0; D],
            bias: true,
        }
    }

    pub fn with_padding(mut self, padding: [usize; D]) -> Self {
        self.padding = padding;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("convolution channel counts must be positive"));
        }
        if self.kernel.iter().chain(&self.stride).any(|&e| e == 0) {
            return Err(Error::config("convolution kernel and stride extents must be positive"));
        }
        Ok(())
    }

    /// Output extent along one axis for an input extent `n`.
    pub fn output_len(&self, axis: usize, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding[axis];
        (padded >= self.kernel[axis]).then(|| (padded - self.kernel[axis]) / self.stride[axis] + 1)
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.out_channels, self.in_channels];
        dims.extend_from_slice(&self.kernel);
        dims
    }

    /// Weight layout of the transposed convolution: `[C_in, C_out, K..]`.
    pub fn transpose_weight_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_channels, self.out_channels];
        dims.extend_from_slice(&self.kernel);
        dims
    }

    pub fn parameter_count(&self) -> usize {
        let taps: usize = self.kernel.iter().product();
        self.in_channels * self.out_channels * taps + if self.bias { self.out_channels } else { 0 }
    }
}

mod serde_arrays {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[usize; D], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<[usize; D], De::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<usize>| serde::de::Error::invalid_length(v.len(), &"a fixed-length extent list"))
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

/// Lowering of a 3-D convolution over a `[C, F, H, W]` input.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn new(spec: &Conv3dSpec, channels: usize, input: [usize; 3]) -> Result<Self> {
        let mut output = [0; 3];
        for axis in 0..3 {
            output[axis] = spec.output_len(axis, input[axis]).ok_or(Error::InputTooShort {
                needed: spec.kernel[axis].saturating_sub(2 * spec.padding[axis]).max(1),
                got: input[axis],
            })?;
        }
        Ok(Self {
            channels,
            input,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
            output,
        })
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    fn positions(&self) -> usize {
        self.output.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1; 3] && self.stride == [1; 3] && self.padding == [0; 3]
    }

    /// Visits every (column-matrix index, input index) pair that reads a real
    /// (non-padding) input element.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let [fi, hi, wi] = self.input;
        let [kf, kh, kw] = self.kernel;
        let [sf, sh, sw] = self.stride;
        let [pf, ph, pw] = self.padding;
        let [of, oh, ow] = self.output;
        let positions = self.positions();
        let mut row = 0;
        for c in 0..self.channels {
            for a in 0..kf {
                for b in 0..kh {
                    for d in 0..kw {
                        let base_col = row * positions;
                        for z in 0..of {
                            let zi = (z * sf + a) as isize - pf as isize;
                            if zi < 0 || zi >= fi as isize {
                                continue;
                            }
                            for y in 0..oh {
                                let yi = (y * sh + b) as isize - ph as isize;
                                if yi < 0 || yi >= hi as isize {
                                    continue;
                                }
                                let in_row = ((c * fi + zi as usize) * hi + yi as usize) * wi;
                                let col_row = base_col + (z * oh + y) * ow;
                                for x in 0..ow {
                                    let xi = (x * sw + d) as isize - pw as isize;
                                    if xi < 0 || xi >= wi as isize {
                                        continue;
                                    }
                                    f(col_row + x, in_row + xi as usize);
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut cols = vec![T::zero(); self.rows() * self.positions()];
        self.for_each_tap(|ci, xi| cols[ci] = x[xi]);
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.channels * self.input.iter().product::<usize>()];
        self.for_each_tap(|ci, xi| x[xi] = x[xi] + cols[ci]);
        x
    }
}

fn check_bias<T: Scalar, const D: usize>(spec: &ConvSpec<D>, b: Option<&Tensor<T>>) -> Result<()> {
    match (spec.bias, b) {
        (true, Some(b)) => b.expect_dims(&[spec.out_channels]),
        (false, None) => Ok(()),
        (true, None) => Err(Error::shape("convolution spec requires a bias tensor")),
        (false, Some(_)) => Err(Error::shape("convolution spec has no bias but one was given")),
    }
}

fn input_dims3<T: Scalar>(x: &Tensor<T>, spec: &Conv3dSpec) -> Result<[usize; 3]> {
    match *x.dims() {
        [c, f, h, w] if c == spec.in_channels => Ok([f, h, w]),
        _ => Err(Error::shape(format!(
            "conv3d expects input [{}, F, H, W], got {:?}",
            spec.in_channels,
            x.dims()
        ))),
    }
}

/// Valid cross-correlation of `x: [C_in, F, H, W]` with `w: [C_out, C_in, kf, kh, kw]`.
pub fn conv3d<T: Scalar>(x: &Tensor<T>, spec: &Conv3dSpec, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    spec.validate()?;
    let input = input_dims3(x, spec)?;
    w.expect_dims(&spec.weight_dims())?;
    check_bias(spec, b)?;
    let geo = Geometry::new(spec, spec.in_channels, input)?;
    let (rows, positions) = (geo.rows(), geo.positions());

    let mut out = vec![T::zero(); spec.out_channels * positions];
    let lowered;
    let cols: &[T] = if geo.is_pointwise() {
        x.data()
    } else {
        lowered = geo.im2col(x.data());
        &lowered
    };
    gemm(
        T::one(),
        MatRef::new(w.data(), spec.out_channels, rows),
        MatRef::new(cols, rows, positions),
        T::zero(),
        MatMut::new(&mut out, spec.out_channels, positions),
    );
    if let Some(b) = b {
        for (row, &bias) in out.chunks_mut(positions).zip(b.data()) {
            row.iter_mut().for_each(|v| *v = *v + bias);
        }
    }
    let [of, oh, ow] = geo.output;
    Tensor::new([spec.out_channels, of, oh, ow], out)
}

/// Vector-Jacobian product of [`conv3d`] for upstream cotangent `dy`.
pub fn conv3d_vjp<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv3dSpec,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let input = input_dims3(x, spec)?;
    w.expect_dims(&spec.weight_dims())?;
    let geo = Geometry::new(spec, spec.in_channels, input)?;
    let [of, oh, ow] = geo.output;
    dy.expect_dims(&[spec.out_channels, of, oh, ow])?;
    let (rows, positions, cout) = (geo.rows(), geo.positions(), spec.out_channels);

    let lowered;
    let cols: &[T] = if geo.is_pointwise() {
        x.data()
    } else {
        lowered = geo.im2col(x.data());
        &lowered
    };
    let mut dw = vec![T::zero(); cout * rows];
    gemm(
        T::one(),
        MatRef::new(dy.data(), cout, positions),
        MatRef::new(cols, rows, positions).t(),
        T::zero(),
        MatMut::new(&mut dw, cout, rows),
    );
    let mut dcols = vec![T::zero(); rows * positions];
    gemm(
        T::one(),
        MatRef::new(w.data(), cout, rows).t(),
        MatRef::new(dy.data(), cout, positions),
        T::zero(),
        MatMut::new(&mut dcols, rows, positions),
    );
    let dx = if geo.is_pointwise() { dcols } else { geo.col2im(&dcols) };
    let bias = spec
        .bias
        .then(|| Tensor::vector(dy.data().chunks(positions).map(|r| r.iter().copied().sum()).collect()));
    Ok(ConvGrads {
        input: Tensor::new(x.dims(), dx)?,
        weight: Tensor::new(spec.weight_dims(), dw)?,
        bias,
    })
}

fn lift1(spec: &Conv1dSpec) -> Conv3dSpec {
    Conv3dSpec {
        in_channels: spec.in_channels,
        out_channels: spec.out_channels,
        kernel: [1, 1, spec.kernel[0]],
        stride: [1, 1, spec.stride[0]],
        padding: [0, 0, spec.padding[0]],
        bias: spec.bias,
    }
}

fn view3<T: Scalar>(t: &Tensor<T>, dims: &[usize]) -> Result<Tensor<T>> {
    Tensor::new(dims, t.data().to_vec())
}

fn input_len1<T: Scalar>(x: &Tensor<T>, channels: usize, op: &str) -> Result<usize> {
    match *x.dims() {
        [c, t] if c == channels => Ok(t),
        _ => Err(Error::shape(format!("{op} expects input [{channels}, T], got {:?}", x.dims()))),
    }
}

/// `out[o, t] = b[o] + sum_{i,k} w[o, i, k] * x[i, t*S + k]` over `x: [C_in, T]`.
pub fn conv1d<T: Scalar>(x: &Tensor<T>, spec: &Conv1dSpec, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let t = input_len1(x, spec.in_channels, "conv1d")?;
    w.expect_dims(&spec.weight_dims())?;
    let s3 = lift1(spec);
    let y = conv3d(
        &view3(x, &[spec.in_channels, 1, 1, t])?,
        &s3,
        &view3(w, &s3.weight_dims())?,
        b,
    )?;
    let out_len = y.dims()[3];
    y.reshape([spec.out_channels, out_len])
}

pub fn conv1d_vjp<T: Scalar>(x: &Tensor<T>, spec: &Conv1dSpec, w: &Tensor<T>, dy: &Tensor<T>) -> Result<ConvGrads<T>> {
    let t = input_len1(x, spec.in_channels, "conv1d")?;
    w.expect_dims(&spec.weight_dims())?;
    let (cout, tout) = dy.dims2()?;
    let s3 = lift1(spec);
    let g = conv3d_vjp(
        &view3(x, &[spec.in_channels, 1, 1, t])?,
        &s3,
        &view3(w, &s3.weight_dims())?,
        &view3(dy, &[cout, 1, 1, tout])?,
    )?;
    Ok(ConvGrads {
        input: g.input.reshape(x.dims())?,
        weight: g.weight.reshape(w.dims())?,
        bias: g.bias,
    })
}

/// Output length of the transposed convolution for `t` input frames.
pub fn conv_transpose1d_len(spec: &Conv1dSpec, t: usize) -> Option<usize> {
    (t.checked_sub(1)? * spec.stride[0] + spec.kernel[0]).checked_sub(2 * spec.padding[0])
}

/// Geometry of the forward convolution whose adjoint this transposed
/// convolution is: it reads `[C_out, L]` and yields `t` positions.
fn transpose_geometry(spec: &Conv1dSpec, t: usize) -> Result<Geometry> {
    if t == 0 {
        return Err(Error::shape("conv_transpose1d needs at least one input frame"));
    }
    let len = conv_transpose1d_len(spec, t)
        .filter(|&l| l > 0)
        .ok_or_else(|| Error::shape("conv_transpose1d padding exceeds output length"))?;
    let adjoint = lift1(&ConvSpec {
        in_channels: spec.out_channels,
        out_channels: spec.in_channels,
        ..*spec
    });
    let geo = Geometry::new(&adjoint, spec.out_channels, [1, 1, len])?;
    debug_assert_eq!(geo.positions(), t);
    Ok(geo)
}

/// Scatter-add transposed convolution of `x: [C_in, T]` with
/// `w: [C_in, C_out, K]`, giving `[C_out, (T-1)*S + K - 2P]`.
pub fn conv_transpose1d<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv1dSpec,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let t = input_len1(x, spec.in_channels, "conv_transpose1d")?;
    w.expect_dims(&spec.transpose_weight_dims())?;
    check_bias(spec, b)?;
    let geo = transpose_geometry(spec, t)?;
    let rows = geo.rows();
    let mut cols = vec![T::zero(); rows * t];
    gemm(
        T::one(),
        MatRef::new(w.data(), spec.in_channels, rows).t(),
        MatRef::new(x.data(), spec.in_channels, t),
        T::zero(),
        MatMut::new(&mut cols, rows, t),
    );
    let mut out = geo.col2im(&cols);
    let len = geo.input[2];
    if let Some(b) = b {
        for (row, &bias) in out.chunks_mut(len).zip(b.data()) {
            row.iter_mut().for_each(|v| *v = *v + bias);
        }
    }
    Tensor::new([spec.out_channels, len], out)
}

pub fn conv_transpose1d_vjp<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv1dSpec,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let t = input_len1(x, spec.in_channels, "conv_transpose1d")?;
    w.expect_dims(&spec.transpose_weight_dims())?;
    let geo = transpose_geometry(spec, t)?;
    dy.expect_dims(&[spec.out_channels, geo.input[2]])?;
    let rows = geo.rows();
    let dcols = geo.im2col(dy.data());
    let mut dx = vec![T::zero(); spec.in_channels * t];
    gemm(
        T::one(),
        MatRef::new(w.data(), spec.in_channels, rows),
        MatRef::new(&dcols, rows, t),
        T::zero(),
        MatMut::new(&mut dx, spec.in_channels, t),
    );
    let mut dw = vec![T::zero(); spec.in_channels * rows];
    gemm(
        T::one(),
        MatRef::new(x.data(), spec.in_channels, t),
        MatRef::new(&dcols, rows, t).t(),
        T::zero(),
        MatMut::new(&mut dw, spec.in_channels, rows),
    );
    let len = geo.input[2];
    let bias = spec
        .bias
        .then(|| Tensor::vector(dy.data().chunks(len).map(|r| r.iter().copied().sum()).collect()));
    Ok(ConvGrads {
        input: Tensor::new(x.dims(), dx)?,
        weight: Tensor::new(w.dims(), dw)?,
        bias,
    })
}
