//! Reductions and index-based selection.

use crate::element::Element;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Element>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Element> Tensor<T> {
    pub fn sum_all(&self) -> Tensor<T> {
        let n = self.numel();
        let s: T = self.data().iter().copied().sum();
        Tensor::from_op(
            "sum_all",
            vec![s],
            Vec::new(),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.numel();
        let inv = T::one() / T::from_usize(n.max(1)).expect("count");
        let s: T = self.data().iter().copied().sum::<T>() * inv;
        Tensor::from_op(
            "mean_all",
            vec![s],
            Vec::new(),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0] * inv; n])]),
        )
    }

    /// Mean over one axis, removing it.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return arg_err("mean_axis", format!("axis {axis} for shape {:?}", self.shape()));
        }
        let shape = self.shape();
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        if n == 0 {
            return shape_err("mean_axis", "cannot average an empty axis");
        }
        let inv = T::one() / T::from_usize(n).expect("count");
        let xd = self.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &xd[(o * n + j) * inner..(o * n + j + 1) * inner];
                out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, &v)| *a += v);
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        Ok(Tensor::from_op(
            "mean_axis",
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        gx[(o * n + j) * inner..(o * n + j + 1) * inner]
                            .iter_mut()
                            .zip(&g[o * inner..(o + 1) * inner])
                            .for_each(|(a, &v)| *a = v * inv);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    fn last_axis(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape().last() {
            Some(&k) if k > 0 => Ok((self.numel() / k, k)),
            _ => shape_err(op, format!("needs a non-empty last axis, got {:?}", self.shape())),
        }
    }

    /// Per-row argmax over the last axis (lowest index wins ties).
    pub fn argmax_last(&self) -> Result<Vec<usize>> {
        let (_, k) = self.last_axis("argmax_last")?;
        Ok(self.data().chunks(k).map(argmax).collect())
    }

    /// Per-row maximum over the last axis; the gradient routes to the argmax.
    pub fn max_last(&self) -> Result<Tensor<T>> {
        let (rows, k) = self.last_axis("max_last")?;
        let picks = self.argmax_last()?;
        let xd = self.data();
        let out: Vec<T> = picks.iter().enumerate().map(|(r, &a)| xd[r * k + a]).collect();
        let shape = self.shape()[..self.rank() - 1].to_vec();
        Ok(Tensor::from_op(
            "max_last",
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); rows * k];
                picks.iter().enumerate().for_each(|(r, &a)| gx[r * k + a] = g[r]);
                vec![Some(gx)]
            }),
        ))
    }

    /// `out[r] = x[r, indices[r]]` for a `[R, K]` tensor.
    pub fn gather_last(&self, indices: &[usize]) -> Result<Tensor<T>> {
        self.check_rank("gather_last", 2)?;
        let (rows, k) = (self.shape()[0], self.shape()[1]);
        if indices.len() != rows {
            return shape_err("gather_last", format!("{} indices for {rows} rows", indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
            return arg_err("gather_last", format!("index {bad} out of range for {k} columns"));
        }
        let xd = self.data();
        let out: Vec<T> = indices.iter().enumerate().map(|(r, &i)| xd[r * k + i]).collect();
        let indices = indices.to_vec();
        Ok(Tensor::from_op(
            "gather_last",
            out,
            vec![rows],
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); rows * k];
                indices.iter().enumerate().for_each(|(r, &i)| gx[r * k + i] = g[r]);
                vec![Some(gx)]
            }),
        ))
    }
}
