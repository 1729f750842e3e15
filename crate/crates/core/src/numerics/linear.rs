use super::gemm::{gemm, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinearGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn split_batch<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (d_out, d_in) = w.dims2()?;
    match x.dims().split_last() {
        Some((&last, _)) if last == d_in => Ok((x.len() / d_in.max(1), d_in, d_out)),
        _ => Err(Error::shape(format!(
            "linear expects trailing extent {d_in}, got dims {:?}",
            x.dims()
        ))),
    }
}

/// Affine map along the trailing axis: `x: [..., D_in]`, `w: [D_out, D_in]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, d_in, d_out) = split_batch(x, w)?;
    b.expect_dims(&[d_out])?;
    let mut out = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    gemm(
        T::one(),
        MatRef::new(x.data(), rows, d_in),
        MatRef::new(w.data(), d_out, d_in).t(),
        T::one(),
        MatMut::new(&mut out, rows, d_out),
    );
    let mut dims = x.dims().to_vec();
    *dims.last_mut().unwrap() = d_out;
    Tensor::new(dims, out)
}

pub fn linear_vjp<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>) -> Result<LinearGrads<T>> {
    let (rows, d_in, d_out) = split_batch(x, w)?;
    let mut out_dims = x.dims().to_vec();
    *out_dims.last_mut().unwrap() = d_out;
    dy.expect_dims(&out_dims)?;

    let mut dx = vec![T::zero(); rows * d_in];
    gemm(
        T::one(),
        MatRef::new(dy.data(), rows, d_out),
        MatRef::new(w.data(), d_out, d_in),
        T::zero(),
        MatMut::new(&mut dx, rows, d_in),
    );
    let mut dw = vec![T::zero(); d_out * d_in];
    gemm(
        T::one(),
        MatRef::new(dy.data(), rows, d_out).t(),
        MatRef::new(x.data(), rows, d_in),
        T::zero(),
        MatMut::new(&mut dw, d_out, d_in),
    );
    let mut db = vec![T::zero(); d_out];
    for row in dy.data().chunks(d_out.max(1)) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(x.dims(), dx)?,
        weight: Tensor::new(w.dims(), dw)?,
        bias: Tensor::vector(db),
    })
}
