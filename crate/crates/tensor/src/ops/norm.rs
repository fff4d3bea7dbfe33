//! Normalizations over the trailing axis.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Layer normalization of every trailing-axis slice followed by an affine
/// map: `(x − mean) / sqrt(var + eps) · gain + bias`.
pub fn layer_norm<T: Element>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let c = match x.shape().last() {
        Some(&c) if c >= 1 => c,
        _ => return shape_err("layer_norm", format!("needs a non-empty last axis, got {:?}", x.shape())),
    };
    if gain.shape() != [c] || bias.shape() != [c] {
        return shape_err("layer_norm", format!("gain {:?} / bias {:?} for {c} channels", gain.shape(), bias.shape()));
    }
    let rows = x.numel() / c;
    let inv_c = T::one() / T::from_usize(c).expect("count");
    let (xd, gd, bd) = (x.data(), gain.data(), bias.data());
    let mut xhat = vec![T::zero(); rows * c];
    let mut inv_std = vec![T::zero(); rows];
    let mut out = vec![T::zero(); rows * c];
    for r in 0..rows {
        let row = &xd[r * c..(r + 1) * c];
        let mean = row.iter().copied().sum::<T>() * inv_c;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
        let is = T::one() / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..c {
            let h = (row[j] - mean) * is;
            xhat[r * c + j] = h;
            out[r * c + j] = h * gd[j] + bd[j];
        }
    }
    Ok(Tensor::from_op(
        "layer_norm",
        out,
        x.shape().to_vec(),
        vec![x.clone(), gain.clone(), bias.clone()],
        Box::new(move |g, wants| {
            let gx = wants[0].then(|| {
                let mut gx = vec![T::zero(); rows * c];
                for r in 0..rows {
                    let (gr, hr) = (&g[r * c..(r + 1) * c], &xhat[r * c..(r + 1) * c]);
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for j in 0..c {
                        let dh = gr[j] * gd[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh *= inv_c;
                    mean_dh_h *= inv_c;
                    for j in 0..c {
                        gx[r * c + j] = inv_std[r] * (gr[j] * gd[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                gx
            });
            let gg = wants[1].then(|| {
                let mut gg = vec![T::zero(); c];
                for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                    gg.iter_mut().zip(gr.iter().zip(hr)).for_each(|(a, (&gv, &h))| *a += gv * h);
                }
                gg
            });
            let gb = wants[2].then(|| {
                let mut gb = vec![T::zero(); c];
                for gr in g.chunks(c) {
                    gb.iter_mut().zip(gr).for_each(|(a, &gv)| *a += gv);
                }
                gb
            });
            vec![gx, gg, gb]
        }),
    ))
}

/// Softmax over the trailing axis, computed with max-subtraction.
pub fn softmax<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match x.shape().last() {
        Some(&k) if k >= 1 => k,
        _ => return shape_err("softmax", format!("needs a non-empty last axis, got {:?}", x.shape())),
    };
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for (src, dst) in xd.chunks(k).zip(out.chunks_mut(k)) {
        let m = src.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = (v - m).exp();
            z += *d;
        }
        let inv = T::one() / z;
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    let y = std::sync::Arc::new(out);
    let saved = y.clone();
    Ok(Tensor::from_op_shared(
        "softmax",
        y,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), dst) in g.chunks(k).zip(saved.chunks(k)).zip(gx.chunks_mut(k)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((d, &gv), &yv) in dst.iter_mut().zip(gr).zip(yr) {
                    *d = yv * (gv - dot);
                }
            }
            vec![Some(gx)]
        }),
    ))
}
