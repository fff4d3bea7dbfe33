//! Valid 2D convolution (im2col + GEMM) and grouped token mixing.

use crate::element::{gemm, Element, MatLayout};
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Column matrix `[C·kh·kw, N·OH·OW]`.
fn im2col<T: Element>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let cols = g.n * p;
    let mut col = vec![T::zero(); g.patch_len() * cols];
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst_row = &mut col[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let plane = &x[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
                    for oi in 0..g.oh {
                        let src = &plane[(oi * g.stride + ki) * g.w + kj..];
                        let dst = &mut dst_row[n * p + oi * g.ow..n * p + (oi + 1) * g.ow];
                        for (oj, d) in dst.iter_mut().enumerate() {
                            *d = src[oj * g.stride];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im<T: Element>(col: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let cols = g.n * p;
    let mut x = vec![T::zero(); g.n * g.c * g.h * g.w];
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &col[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let base = (n * g.c + c) * g.h * g.w;
                    for oi in 0..g.oh {
                        for oj in 0..g.ow {
                            x[base + (oi * g.stride + ki) * g.w + kj + oj * g.stride] +=
                                src_row[n * p + oi * g.ow + oj];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Valid (unpadded) 2D convolution.
///
/// `input [N, C, H, W]`, `weight [O, C, kh, kw]`, `bias [O]`; output
/// `[N, O, (H−kh)/stride+1, (W−kw)/stride+1]`.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    input.check_rank("conv2d", 4)?;
    weight.check_rank("conv2d", 4)?;
    if stride == 0 {
        return arg_err("conv2d", "stride must be at least 1");
    }
    let (s, ws) = (input.shape(), weight.shape());
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    if ws[1] != s[1] {
        return shape_err("conv2d", format!("input has {} channels, weight {ws:?} expects {}", s[1], ws[1]));
    }
    if kh > s[2] || kw > s[3] || kh == 0 || kw == 0 {
        return shape_err("conv2d", format!("kernel {kh}x{kw} does not fit input {}x{}", s[2], s[3]));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return shape_err("conv2d", format!("bias {:?} for {o} output channels", b.shape()));
        }
    }
    let g = ConvGeom {
        n: s[0],
        c: s[1],
        h: s[2],
        w: s[3],
        kh,
        kw,
        stride,
        oh: (s[2] - kh) / stride + 1,
        ow: (s[3] - kw) / stride + 1,
    };
    let (xd, wd) = (input.data(), weight.data());
    let col = im2col(&xd, &g);
    let (pl, p) = (g.patch_len(), g.positions());
    let cols = g.n * p;
    let mut tmp = vec![T::zero(); o * cols];
    gemm(
        o,
        pl,
        cols,
        T::one(),
        &wd,
        MatLayout::row_major(0, pl),
        &col,
        MatLayout::row_major(0, cols),
        T::zero(),
        &mut tmp,
        MatLayout::row_major(0, cols),
    );
    // [O, N·P] -> [N, O, P] (+ bias)
    let bd = bias.map(|b| b.data());
    let mut out = vec![T::zero(); g.n * o * p];
    for n in 0..g.n {
        for oc in 0..o {
            let b = bd.as_ref().map_or(T::zero(), |b| b[oc]);
            let src = &tmp[oc * cols + n * p..oc * cols + (n + 1) * p];
            out[(n * o + oc) * p..(n * o + oc + 1) * p].iter_mut().zip(src).for_each(|(d, &v)| *d = v + b);
        }
    }
    let mut parents = vec![input.clone(), weight.clone()];
    parents.extend(bias.cloned());
    // The column matrix is only kept alive when the weight needs a gradient.
    let saved_col = Tensor::tracking(&[weight]).then_some(col);
    Ok(Tensor::from_op(
        "conv2d",
        out,
        vec![g.n, o, g.oh, g.ow],
        parents,
        Box::new(move |grad, wants| {
            // [N, O, P] -> [O, N·P]
            let mut gt = vec![T::zero(); o * cols];
            for n in 0..g.n {
                for oc in 0..o {
                    gt[oc * cols + n * p..oc * cols + (n + 1) * p]
                        .copy_from_slice(&grad[(n * o + oc) * p..(n * o + oc + 1) * p]);
                }
            }
            let gx = wants[0].then(|| {
                let mut gcol = vec![T::zero(); pl * cols];
                gemm(
                    pl,
                    o,
                    cols,
                    T::one(),
                    &wd,
                    MatLayout::transposed(0, pl),
                    &gt,
                    MatLayout::row_major(0, cols),
                    T::zero(),
                    &mut gcol,
                    MatLayout::row_major(0, cols),
                );
                col2im(&gcol, &g)
            });
            let gw = wants[1].then(|| {
                let col = saved_col.as_ref().expect("column matrix saved for weight gradient");
                let mut gw = vec![T::zero(); o * pl];
                gemm(
                    o,
                    cols,
                    pl,
                    T::one(),
                    &gt,
                    MatLayout::row_major(0, cols),
                    col,
                    MatLayout::transposed(0, cols),
                    T::zero(),
                    &mut gw,
                    MatLayout::row_major(0, pl),
                );
                gw
            });
            let mut grads = vec![gx, gw];
            if wants.len() == 3 {
                grads.push(wants[2].then(|| gt.chunks(cols).map(|row| row.iter().copied().sum()).collect()));
            }
            grads
        }),
    ))
}

/// Grouped token mixing: a kernel-size-1 grouped 1D convolution over
/// `G·N` channels, stored token-major.
///
/// `tokens [B, N, C]` with `C = G·d`; channel block `g` (channels
/// `g·d..(g+1)·d`) is mixed across the `N` token positions by
/// `weight[g]` (`[G, N, N]`): `out[b, i, g·d+c] = Σ_j weight[g, i, j] ·
/// tokens[b, j, g·d+c] + bias[g, i]`.
pub fn grouped_conv1d_mix<T: Element>(
    tokens: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    tokens.check_rank("grouped_conv1d_mix", 3)?;
    weight.check_rank("grouped_conv1d_mix", 3)?;
    let (b, n, c) = (tokens.shape()[0], tokens.shape()[1], tokens.shape()[2]);
    let groups = weight.shape()[0];
    if weight.shape()[1] != n || weight.shape()[2] != n {
        return shape_err("grouped_conv1d_mix", format!("weight {:?} for {n} tokens", weight.shape()));
    }
    if groups == 0 || c % groups != 0 {
        return shape_err("grouped_conv1d_mix", format!("{groups} groups do not divide {c} channels"));
    }
    if let Some(bias) = bias {
        if bias.shape() != [groups, n] {
            return shape_err("grouped_conv1d_mix", format!("bias {:?}, expected [{groups}, {n}]", bias.shape()));
        }
    }
    let d = c / groups;
    let (xd, wd) = (tokens.data(), weight.data());
    let mut out = vec![T::zero(); b * n * c];
    if let Some(bias) = bias {
        let bd = bias.data();
        for bi in 0..b {
            for i in 0..n {
                for g in 0..groups {
                    let v = bd[g * n + i];
                    out[(bi * n + i) * c + g * d..(bi * n + i) * c + (g + 1) * d].iter_mut().for_each(|o| *o = v);
                }
            }
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    let block = move |bi: usize, g: usize| MatLayout { offset: bi * n * c + g * d, rs: c, cs: 1 };
    for bi in 0..b {
        for g in 0..groups {
            gemm(
                n,
                n,
                d,
                T::one(),
                &wd,
                MatLayout::row_major(g * n * n, n),
                &xd,
                block(bi, g),
                beta,
                &mut out,
                block(bi, g),
            );
        }
    }
    let mut parents = vec![tokens.clone(), weight.clone()];
    parents.extend(bias.cloned());
    Ok(Tensor::from_op(
        "grouped_conv1d_mix",
        out,
        vec![b, n, c],
        parents,
        Box::new(move |grad, wants| {
            let gx = wants[0].then(|| {
                let mut gx = vec![T::zero(); b * n * c];
                for bi in 0..b {
                    for g in 0..groups {
                        gemm(
                            n,
                            n,
                            d,
                            T::one(),
                            &wd,
                            MatLayout::transposed(g * n * n, n),
                            grad,
                            block(bi, g),
                            T::zero(),
                            &mut gx,
                            block(bi, g),
                        );
                    }
                }
                gx
            });
            let gw = wants[1].then(|| {
                let mut gw = vec![T::zero(); groups * n * n];
                for bi in 0..b {
                    for g in 0..groups {
                        let xt = MatLayout { offset: bi * n * c + g * d, rs: 1, cs: c };
                        gemm(
                            n,
                            d,
                            n,
                            T::one(),
                            grad,
                            block(bi, g),
                            &xd,
                            xt,
                            T::one(),
                            &mut gw,
                            MatLayout::row_major(g * n * n, n),
                        );
                    }
                }
                gw
            });
            let mut grads = vec![gx, gw];
            if wants.len() == 3 {
                grads.push(wants[2].then(|| {
                    let mut gb = vec![T::zero(); groups * n];
                    for bi in 0..b {
                        for i in 0..n {
                            let row = &grad[(bi * n + i) * c..(bi * n + i + 1) * c];
                            for g in 0..groups {
                                gb[g * n + i] += row[g * d..(g + 1) * d].iter().copied().sum();
                            }
                        }
                    }
                    gb
                }));
            }
            grads
        }),
    ))
}
