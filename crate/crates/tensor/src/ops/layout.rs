//! Data movement: axis permutation, cyclic rolls, slicing and row gathers.

use crate::element::Element;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Copies `data` (laid out as `shape`) into the order given by `perm`.
pub(crate) fn permute_data<T: Copy>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let rank = out_shape.len();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    if rank == 0 {
        out.push(data[0]);
        return out;
    }
    // Innermost axis handled as a strided run; outer axes by odometer.
    let inner = out_shape[rank - 1];
    let inner_step = step[rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let mut base = 0usize;
    loop {
        if inner_step == 1 {
            out.extend_from_slice(&data[base..base + inner]);
        } else {
            out.extend((0..inner).map(|j| data[base + j * inner_step]));
        }
        let mut ax = rank - 1;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            base += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= step[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

/// `out[b, (i+dh) mod H, (j+dw) mod W, :] = x[b, i, j, :]`.
fn roll_data<T: Copy>(data: &[T], shape: [usize; 4], dh: isize, dw: isize) -> Vec<T> {
    let [b, h, w, c] = shape;
    let mut out = data.to_vec();
    let sh = dh.rem_euclid(h as isize) as usize;
    let sw = dw.rem_euclid(w as isize) as usize;
    for bi in 0..b {
        for i in 0..h {
            let oi = (i + sh) % h;
            for j in 0..w {
                let oj = (j + sw) % w;
                let src = ((bi * h + i) * w + j) * c;
                let dst = ((bi * h + oi) * w + oj) * c;
                out[dst..dst + c].copy_from_slice(&data[src..src + c]);
            }
        }
    }
    out
}

impl<T: Element> Tensor<T> {
    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return arg_err("permute", format!("{perm:?} is not a permutation of {rank} axes"));
        }
        let shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let out = permute_data(&self.data(), &shape, perm);
        let mut inverse = vec![0; rank];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(
            "permute",
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(permute_data(g, &grad_shape, &inverse))]),
        ))
    }

    /// Cyclic shift of a `[B, H, W, C]` grid by `(dh, dw)` positions.
    pub fn roll2d(&self, dh: isize, dw: isize) -> Result<Tensor<T>> {
        self.check_rank("roll2d", 4)?;
        let s = self.shape();
        let shape = [s[0], s[1], s[2], s[3]];
        if shape[1] == 0 || shape[2] == 0 {
            return shape_err("roll2d", format!("empty spatial extent {s:?}"));
        }
        let out = roll_data(&self.data(), shape, dh, dw);
        Ok(Tensor::from_op(
            "roll2d",
            out,
            s.to_vec(),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(roll_data(g, shape, -dh, -dw))]),
        ))
    }

    /// Slice `index` of the leading axis, dropping that axis.
    pub fn select0(&self, index: usize) -> Result<Tensor<T>> {
        let Some((&n, rest)) = self.shape().split_first() else {
            return shape_err("select0", "scalar has no leading axis");
        };
        if index >= n {
            return arg_err("select0", format!("index {index} out of range for extent {n}"));
        }
        let inner = self.numel() / n;
        let out = self.data()[index * inner..(index + 1) * inner].to_vec();
        let total = self.numel();
        Ok(Tensor::from_op(
            "select0",
            out,
            rest.to_vec(),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); total];
                gx[index * inner..(index + 1) * inner].copy_from_slice(g);
                vec![Some(gx)]
            }),
        ))
    }

    /// Gathers rows of a `[R, C]` table: `out[i, :] = table[indices[i], :]`.
    pub fn index_select_rows(&self, indices: &[usize]) -> Result<Tensor<T>> {
        self.check_rank("index_select_rows", 2)?;
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return arg_err("index_select_rows", format!("row {bad} out of range for {rows} rows"));
        }
        let td = self.data();
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(&td[i * cols..(i + 1) * cols]);
        }
        let indices = indices.to_vec();
        let n = indices.len();
        Ok(Tensor::from_op(
            "index_select_rows",
            out,
            vec![n, cols],
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gt = vec![T::zero(); rows * cols];
                for (k, &i) in indices.iter().enumerate() {
                    gt[i * cols..(i + 1) * cols]
                        .iter_mut()
                        .zip(&g[k * cols..(k + 1) * cols])
                        .for_each(|(a, &v)| *a += v);
                }
                vec![Some(gt)]
            }),
        ))
    }
}
