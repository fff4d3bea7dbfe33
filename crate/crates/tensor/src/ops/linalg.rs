//! Matrix products on top of the strided GEMM kernel.

use crate::element::{gemm, Element, MatLayout};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

fn rows_and_last<T: Element>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize)> {
    match x.shape().last() {
        Some(&k) if k > 0 => Ok((x.numel() / k, k)),
        _ => shape_err(op, format!("expected at least one non-empty axis, got {:?}", x.shape())),
    }
}

impl<T: Element> Tensor<T> {
    /// `[.., K] · [K, N] -> [.., N]`; leading axes are flattened into rows.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = rows_and_last("matmul", self)?;
        if rhs.rank() != 2 || rhs.shape()[0] != k {
            return shape_err("matmul", format!("{:?} · {:?}", self.shape(), rhs.shape()));
        }
        let n = rhs.shape()[1];
        let (ad, bd) = (self.data(), rhs.data());
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            T::one(),
            &ad,
            MatLayout::row_major(0, k),
            &bd,
            MatLayout::row_major(0, n),
            T::zero(),
            &mut out,
            MatLayout::row_major(0, n),
        );
        let mut shape = self.shape().to_vec();
        *shape.last_mut().expect("rank>=1") = n;
        Ok(Tensor::from_op(
            "matmul",
            out,
            shape,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, wants| {
                let ga = wants[0].then(|| {
                    // dA = G · Bᵀ
                    let mut ga = vec![T::zero(); m * k];
                    gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        g,
                        MatLayout::row_major(0, n),
                        &bd,
                        MatLayout::transposed(0, n),
                        T::zero(),
                        &mut ga,
                        MatLayout::row_major(0, k),
                    );
                    ga
                });
                let gb = wants[1].then(|| {
                    // dB = Aᵀ · G
                    let mut gb = vec![T::zero(); k * n];
                    gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &ad,
                        MatLayout::transposed(0, k),
                        g,
                        MatLayout::row_major(0, n),
                        T::zero(),
                        &mut gb,
                        MatLayout::row_major(0, n),
                    );
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Batched product of `[B, M, K]` and `[B, K, N]`, with either operand
    /// optionally read transposed (`[B, K, M]` / `[B, N, K]` storage).
    pub fn bmm(&self, rhs: &Tensor<T>, trans_lhs: bool, trans_rhs: bool) -> Result<Tensor<T>> {
        if self.rank() != 3 || rhs.rank() != 3 || self.shape()[0] != rhs.shape()[0] {
            return shape_err("bmm", format!("{:?} · {:?}", self.shape(), rhs.shape()));
        }
        let (batch, a1, a2) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (b1, b2) = (rhs.shape()[1], rhs.shape()[2]);
        let (m, k) = if trans_lhs { (a2, a1) } else { (a1, a2) };
        let (kb, n) = if trans_rhs { (b2, b1) } else { (b1, b2) };
        if k != kb {
            return shape_err(
                "bmm",
                format!(
                    "inner extents differ: {:?}{} · {:?}{}",
                    self.shape(),
                    if trans_lhs { "ᵀ" } else { "" },
                    rhs.shape(),
                    if trans_rhs { "ᵀ" } else { "" }
                ),
            );
        }
        // Layout of operand matrix i as a logical (rows × cols) view.
        let la = move |i: usize| {
            let off = i * a1 * a2;
            if trans_lhs {
                MatLayout::transposed(off, a2)
            } else {
                MatLayout::row_major(off, a2)
            }
        };
        let lb = move |i: usize| {
            let off = i * b1 * b2;
            if trans_rhs {
                MatLayout::transposed(off, b2)
            } else {
                MatLayout::row_major(off, b2)
            }
        };
        let (ad, bd) = (self.data(), rhs.data());
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(m, k, n, T::one(), &ad, la(i), &bd, lb(i), T::zero(), &mut out, MatLayout::row_major(i * m * n, n));
        }
        Ok(Tensor::from_op(
            "bmm",
            out,
            vec![batch, m, n],
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, wants| {
                let ga = wants[0].then(|| {
                    let mut ga = vec![T::zero(); batch * a1 * a2];
                    for i in 0..batch {
                        // dA(logical m×k) = G · Bᵀ, written through A's own layout.
                        let lbt = {
                            let l = lb(i);
                            MatLayout { offset: l.offset, rs: l.cs, cs: l.rs }
                        };
                        gemm(
                            m,
                            n,
                            k,
                            T::one(),
                            g,
                            MatLayout::row_major(i * m * n, n),
                            &bd,
                            lbt,
                            T::zero(),
                            &mut ga,
                            la(i),
                        );
                    }
                    ga
                });
                let gb = wants[1].then(|| {
                    let mut gb = vec![T::zero(); batch * b1 * b2];
                    for i in 0..batch {
                        let lat = {
                            let l = la(i);
                            MatLayout { offset: l.offset, rs: l.cs, cs: l.rs }
                        };
                        gemm(
                            k,
                            m,
                            n,
                            T::one(),
                            &ad,
                            lat,
                            g,
                            MatLayout::row_major(i * m * n, n),
                            T::zero(),
                            &mut gb,
                            lb(i),
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Affine map over the last axis: `x · Wᵀ + b` with `W` stored `[out, in]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let (m, k) = rows_and_last("linear", self)?;
        if weight.rank() != 2 || weight.shape()[1] != k {
            return shape_err("linear", format!("input {:?} with weight {:?}", self.shape(), weight.shape()));
        }
        let n = weight.shape()[0];
        if let Some(b) = bias {
            if b.shape() != [n] {
                return shape_err("linear", format!("bias {:?} for {n} outputs", b.shape()));
            }
        }
        let (xd, wd) = (self.data(), weight.data());
        let mut out = vec![T::zero(); m * n];
        if let Some(b) = bias {
            let bd = b.data();
            out.chunks_mut(n).for_each(|row| row.copy_from_slice(&bd));
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        gemm(
            m,
            k,
            n,
            T::one(),
            &xd,
            MatLayout::row_major(0, k),
            &wd,
            MatLayout::transposed(0, k),
            beta,
            &mut out,
            MatLayout::row_major(0, n),
        );
        let mut shape = self.shape().to_vec();
        *shape.last_mut().expect("rank>=1") = n;
        let mut parents = vec![self.clone(), weight.clone()];
        parents.extend(bias.cloned());
        Ok(Tensor::from_op(
            "linear",
            out,
            shape,
            parents,
            Box::new(move |g, wants| {
                let gx = wants[0].then(|| {
                    let mut gx = vec![T::zero(); m * k];
                    gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        g,
                        MatLayout::row_major(0, n),
                        &wd,
                        MatLayout::row_major(0, k),
                        T::zero(),
                        &mut gx,
                        MatLayout::row_major(0, k),
                    );
                    gx
                });
                let gw = wants[1].then(|| {
                    // dW[out,in] = Gᵀ · X
                    let mut gw = vec![T::zero(); n * k];
                    gemm(
                        n,
                        m,
                        k,
                        T::one(),
                        g,
                        MatLayout::transposed(0, n),
                        &xd,
                        MatLayout::row_major(0, k),
                        T::zero(),
                        &mut gw,
                        MatLayout::row_major(0, k),
                    );
                    gw
                });
                let mut grads = vec![gx, gw];
                if wants.len() == 3 {
                    grads.push(wants[2].then(|| {
                        let mut gb = vec![T::zero(); n];
                        for row in g.chunks(n) {
                            gb.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                        }
                        gb
                    }));
                }
                grads
            }),
        ))
    }
}
