//! Bidirectional single-layer LSTM over batches of equal-length sequences.
//!
//! Gate layout inside each direction's weight `[4H, D + H]` and bias `[4H]`
//! is input, forget, cell, output. The first `D` weight columns act on the
//! input, the last `H` on the previous hidden state. Initial hidden and cell
//! states are zero.

use super::activation::sigmoid;
use super::gemm::{gemm, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LstmDirection<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LstmDirection<T> {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            weight: Tensor::zeros([4 * hidden_size, input_size + hidden_size]),
            bias: Tensor::zeros([4 * hidden_size]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmParams<T: Scalar> {
    pub input_size: usize,
    pub hidden_size: usize,
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            forward: LstmDirection::zeros(input_size, hidden_size),
            backward: LstmDirection::zeros(input_size, hidden_size),
        }
    }

    fn check(&self) -> Result<()> {
        let (d, h) = (self.input_size, self.hidden_size);
        if d == 0 || h == 0 {
            return Err(Error::config("LSTM input and hidden sizes must be positive"));
        }
        for dir in [&self.forward, &self.backward] {
            dir.weight.expect_dims(&[4 * h, d + h])?;
            dir.bias.expect_dims(&[4 * h])?;
        }
        Ok(())
    }

    fn direction(&self, reverse: bool) -> &LstmDirection<T> {
        if reverse {
            &self.backward
        } else {
            &self.forward
        }
    }
}

/// Activations saved by [`bilstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T: Scalar> {
    /// Post-activation gates per direction, `[B, T, 4H]`.
    gates: [Vec<T>; 2],
    /// Cell states per direction, `[B, T, H]`.
    cells: [Vec<T>; 2],
}

#[derive(Debug, Clone)]
pub struct LstmGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

fn batch_dims<T: Scalar>(x: &Tensor<T>, p: &LstmParams<T>) -> Result<(usize, usize)> {
    match *x.dims() {
        [b, t, d] if d == p.input_size => {
            if b == 0 || t == 0 {
                Err(Error::EmptySequence)
            } else {
                Ok((b, t))
            }
        }
        _ => Err(Error::shape(format!(
            "LSTM expects input [B, T, {}], got {:?}",
            p.input_size,
            x.dims()
        ))),
    }
}

#[inline]
fn time_index(step: usize, len: usize, reverse: bool) -> usize {
    if reverse {
        len - 1 - step
    } else {
        step
    }
}

/// Runs both directions over `x: [B, T, D]`, returning `[B, T, 2H]` with the
/// forward direction's hidden state in the first half of each row.
pub fn bilstm_forward<T: Scalar>(x: &Tensor<T>, p: &LstmParams<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
    p.check()?;
    let (batch, len) = batch_dims(x, p)?;
    let (d, h) = (p.input_size, p.hidden_size);
    let (g4, wcols) = (4 * h, d + h);
    let rows = batch * len;
    let mut out = vec![T::zero(); rows * 2 * h];
    let mut gates_cache = [vec![T::zero(); rows * g4], vec![T::zero(); rows * g4]];
    let mut cells_cache = [vec![T::zero(); rows * h], vec![T::zero(); rows * h]];

    for (dir_idx, reverse) in [(0, false), (1, true)] {
        let dir = p.direction(reverse);
        let w = dir.weight.data();

        // Input contribution for every (b, t) at once.
        let mut xw = Vec::with_capacity(rows * g4);
        for _ in 0..rows {
            xw.extend_from_slice(dir.bias.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), rows, d),
            MatRef::strided(w, g4, d, wcols, 1).t(),
            T::one(),
            MatMut::new(&mut xw, rows, g4),
        );

        let wh_t = MatRef::strided(&w[d..], h, g4, 1, wcols);
        let mut h_prev = vec![T::zero(); batch * h];
        let mut c_prev = vec![T::zero(); batch * h];
        let mut pre = vec![T::zero(); batch * g4];
        let gates = &mut gates_cache[dir_idx];
        let cells = &mut cells_cache[dir_idx];

        for step in 0..len {
            let t = time_index(step, len, reverse);
            for b in 0..batch {
                let r = b * len + t;
                pre[b * g4..(b + 1) * g4].copy_from_slice(&xw[r * g4..(r + 1) * g4]);
            }
            if step > 0 {
                gemm(T::one(), MatRef::new(&h_prev, batch, h), wh_t, T::one(), MatMut::new(&mut pre, batch, g4));
            }
            for b in 0..batch {
                let r = b * len + t;
                let a = &pre[b * g4..(b + 1) * g4];
                let gate_row = &mut gates[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid(a[j]);
                    let f_g = sigmoid(a[h + j]);
                    let c_g = a[2 * h + j].tanh();
                    let o_g = sigmoid(a[3 * h + j]);
                    let c = f_g * c_prev[b * h + j] + i_g * c_g;
                    let hv = o_g * c.tanh();
                    gate_row[j] = i_g;
                    gate_row[h + j] = f_g;
                    gate_row[2 * h + j] = c_g;
                    gate_row[3 * h + j] = o_g;
                    cells[r * h + j] = c;
                    c_prev[b * h + j] = c;
                    h_prev[b * h + j] = hv;
                    out[r * 2 * h + dir_idx * h + j] = hv;
                }
            }
        }
    }

    Ok((
        Tensor::new([batch, len, 2 * h], out)?,
        LstmCache {
            gates: gates_cache,
            cells: cells_cache,
        },
    ))
}

/// Reverse-mode pass of [`bilstm_forward`]. `out` is the forward output.
pub fn bilstm_vjp<T: Scalar>(
    x: &Tensor<T>,
    p: &LstmParams<T>,
    out: &Tensor<T>,
    cache: &LstmCache<T>,
    dy: &Tensor<T>,
) -> Result<LstmGrads<T>> {
    p.check()?;
    let (batch, len) = batch_dims(x, p)?;
    let (d, h) = (p.input_size, p.hidden_size);
    let (g4, wcols) = (4 * h, d + h);
    let rows = batch * len;
    dy.expect_dims(&[batch, len, 2 * h])?;
    out.expect_dims(&[batch, len, 2 * h])?;
    let mut dx = vec![T::zero(); rows * d];
    let mut grads = [LstmDirection::zeros(d, h), LstmDirection::zeros(d, h)];

    for (dir_idx, reverse) in [(0, false), (1, true)] {
        let w = p.direction(reverse).weight.data();
        let gates = &cache.gates[dir_idx];
        let cells = &cache.cells[dir_idx];
        let mut dpre_all = vec![T::zero(); rows * g4];
        let mut dh_next = vec![T::zero(); batch * h];
        let mut dc_next = vec![T::zero(); batch * h];
        let mut dpre = vec![T::zero(); batch * g4];
        let wh = MatRef::strided(&w[d..], g4, h, wcols, 1);

        for step in (0..len).rev() {
            let t = time_index(step, len, reverse);
            let t_prev = (step > 0).then(|| time_index(step - 1, len, reverse));
            for b in 0..batch {
                let r = b * len + t;
                let gate_row = &gates[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (gate_row[j], gate_row[h + j], gate_row[2 * h + j], gate_row[3 * h + j]);
                    let c = cells[r * h + j];
                    let c_before = t_prev.map_or(T::zero(), |tp| cells[(b * len + tp) * h + j]);
                    let tc = c.tanh();
                    let dh = dy.data()[r * 2 * h + dir_idx * h + j] + dh_next[b * h + j];
                    let dc = dh * o_g * (T::one() - tc * tc) + dc_next[b * h + j];
                    let a = &mut dpre[b * g4..(b + 1) * g4];
                    a[j] = dc * c_g * i_g * (T::one() - i_g);
                    a[h + j] = dc * c_before * f_g * (T::one() - f_g);
                    a[2 * h + j] = dc * i_g * (T::one() - c_g * c_g);
                    a[3 * h + j] = dh * tc * o_g * (T::one() - o_g);
                    dc_next[b * h + j] = dc * f_g;
                }
                dpre_all[r * g4..(r + 1) * g4].copy_from_slice(&dpre[b * g4..(b + 1) * g4]);
            }
            gemm(T::one(), MatRef::new(&dpre, batch, g4), wh, T::zero(), MatMut::new(&mut dh_next, batch, h));
        }

        // Hidden state entering each (b, t): the neighbour in processing order.
        let mut h_in = vec![T::zero(); rows * h];
        for b in 0..batch {
            for step in 1..len {
                let t = time_index(step, len, reverse);
                let tp = time_index(step - 1, len, reverse);
                let src = (b * len + tp) * 2 * h + dir_idx * h;
                h_in[(b * len + t) * h..(b * len + t + 1) * h].copy_from_slice(&out.data()[src..src + h]);
            }
        }

        let gw = &mut grads[dir_idx];
        let dw = gw.weight.data_mut();
        gemm(
            T::one(),
            MatRef::new(&dpre_all, rows, g4).t(),
            MatRef::new(x.data(), rows, d),
            T::zero(),
            MatMut::strided(dw, g4, d, wcols, 1),
        );
        gemm(
            T::one(),
            MatRef::new(&dpre_all, rows, g4).t(),
            MatRef::new(&h_in, rows, h),
            T::zero(),
            MatMut::strided(&mut dw[d..], g4, h, wcols, 1),
        );
        let db = gw.bias.data_mut();
        for row in dpre_all.chunks(g4) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        gemm(
            T::one(),
            MatRef::new(&dpre_all, rows, g4),
            MatRef::strided(w, g4, d, wcols, 1),
            T::one(),
            MatMut::new(&mut dx, rows, d),
        );
    }

    let [forward, backward] = grads;
    Ok(LstmGrads {
        input: Tensor::new(x.dims(), dx)?,
        forward,
        backward,
    })
}

fn as_batch<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (t, d) = x.dims2()?;
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    Tensor::new([1, t, d], x.data().to_vec())
}

/// Bidirectional LSTM over a single sequence `x: [T, D]`, giving `[T, 2H]`.
pub fn bilstm_layer<T: Scalar>(x: &Tensor<T>, p: &LstmParams<T>) -> Result<Tensor<T>> {
    let (t, _) = x.dims2()?;
    let (y, _) = bilstm_forward(&as_batch(x)?, p)?;
    y.reshape([t, 2 * p.hidden_size])
}

/// Vector-Jacobian product of [`bilstm_layer`]; recomputes the forward pass.
pub fn bilstm_layer_vjp<T: Scalar>(x: &Tensor<T>, p: &LstmParams<T>, dy: &Tensor<T>) -> Result<LstmGrads<T>> {
    let xb = as_batch(x)?;
    let (y, cache) = bilstm_forward(&xb, p)?;
    let dyb = Tensor::new([1, dy.dims()[0], dy.len() / dy.dims()[0].max(1)], dy.data().to_vec())?;
    let mut g = bilstm_vjp(&xb, p, &y, &cache, &dyb)?;
    g.input = g.input.reshape(x.dims())?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let x = Tensor::from_fn([5, 3], |i| i as f64 - 7.0);
        let y = bilstm_layer(&x, &p).unwrap();
        assert_eq!(y.dims(), &[5, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_cell_equations() {
        // D = 1, H = 1: weight row per gate is [w_x, w_h]; with T = 1 the
        // recurrent weight never contributes.
        let mut p = LstmParams::<f64>::zeros(1, 1);
        p.forward.weight = Tensor::new([4, 2], vec![0.5, 9.0, -0.3, 9.0, 0.8, 9.0, 0.2, 9.0]).unwrap();
        p.forward.bias = Tensor::vector(vec![0.1, 1.0, -0.2, 0.05]);
        p.backward.weight = Tensor::new([4, 2], vec![-0.4, 9.0, 0.6, 9.0, 0.3, 9.0, -0.7, 9.0]).unwrap();
        p.backward.bias = Tensor::vector(vec![0.0, 0.0, 0.1, 0.2]);
        let x = 2.0;
        let cell = |w: [f64; 4], b: [f64; 4]| {
            let s = |v: f64| 1.0 / (1.0 + (-v).exp());
            let i = s(w[0] * x + b[0]);
            let g = (w[2] * x + b[2]).tanh();
            let o = s(w[3] * x + b[3]);
            o * (i * g).tanh()
        };
        let expected_f = cell([0.5, -0.3, 0.8, 0.2], [0.1, 1.0, -0.2, 0.05]);
        let expected_b = cell([-0.4, 0.6, 0.3, -0.7], [0.0, 0.0, 0.1, 0.2]);
        let y = bilstm_layer(&Tensor::new([1, 1], vec![x]).unwrap(), &p).unwrap();
        assert!((y.data()[0] - expected_f).abs() < 1e-15);
        assert!((y.data()[1] - expected_b).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let p = LstmParams::<f32>::zeros(2, 2);
        assert!(matches!(bilstm_layer(&Tensor::zeros([0, 2]), &p), Err(Error::EmptySequence)));
    }
}
