//! Pointwise arithmetic and activations.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

/// `b` broadcasts against `a` when its shape is a suffix of `a`'s.
fn broadcast_len<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<usize> {
    let (sa, sb) = (a.shape(), b.shape());
    if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
        return shape_err(op, format!("{sa:?} and {sb:?} (rhs must equal a suffix of lhs)"));
    }
    Ok(b.numel())
}

fn binary<T: Element>(op: &'static str, kind: Binary, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let nb = broadcast_len(op, a, b)?;
    let (ad, bd) = (a.data(), b.data());
    let out: Vec<T> = match kind {
        Binary::Add => ad.iter().enumerate().map(|(i, &x)| x + bd[i % nb]).collect(),
        Binary::Sub => ad.iter().enumerate().map(|(i, &x)| x - bd[i % nb]).collect(),
        Binary::Mul => ad.iter().enumerate().map(|(i, &x)| x * bd[i % nb]).collect(),
    };
    let (sa, sb) = (ad.clone(), bd.clone());
    Ok(Tensor::from_op(
        op,
        out,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g, wants| {
            let ga = wants[0].then(|| match kind {
                Binary::Add | Binary::Sub => g.to_vec(),
                Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * sb[i % nb]).collect(),
            });
            let gb = wants[1].then(|| {
                let mut acc = vec![T::zero(); nb];
                match kind {
                    Binary::Add => g.iter().enumerate().for_each(|(i, &gi)| acc[i % nb] += gi),
                    Binary::Sub => g.iter().enumerate().for_each(|(i, &gi)| acc[i % nb] -= gi),
                    Binary::Mul => g.iter().enumerate().for_each(|(i, &gi)| acc[i % nb] += gi * sa[i]),
                }
                acc
            });
            vec![ga, gb]
        }),
    ))
}

fn unary<T: Element>(
    op: &'static str,
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T) -> T + Send + Sync + 'static,
) -> Tensor<T> {
    let xd = x.data();
    let out: Vec<T> = xd.iter().map(|&v| f(v)).collect();
    Tensor::from_op(
        op,
        out,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g, _| vec![Some(g.iter().zip(xd.iter()).map(|(&gi, &v)| gi * df(v)).collect())]),
    )
}

impl<T: Element> Tensor<T> {
    /// Elementwise sum; `rhs` may be a trailing-suffix broadcast (e.g. a bias).
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("add", Binary::Add, self, rhs)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("sub", Binary::Sub, self, rhs)
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary("mul", Binary::Mul, self, rhs)
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        unary("scale", self, move |v| v * factor, move |_| factor)
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        unary("add_scalar", self, move |v| v + c, |_| T::one())
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            "relu",
            self,
            |v| if v > T::zero() { v } else { T::zero() },
            |v| if v > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor<T> {
        let half = T::from_f64_lossy(0.5);
        let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
        let inv_sqrt_2pi = T::from_f64_lossy(0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2);
        unary(
            "gelu",
            self,
            move |v| half * v * (T::one() + (v * inv_sqrt2).erf()),
            move |v| {
                let cdf = half * (T::one() + (v * inv_sqrt2).erf());
                let pdf = inv_sqrt_2pi * (-(v * v) * half).exp();
                cdf + v * pdf
            },
        )
    }

    /// Multiplies every element of leading-axis slice `i` by `factors[i]`.
    /// The factors are constants (used for per-sample drop path masks).
    pub fn scale_rows(&self, factors: &[T]) -> Result<Tensor<T>> {
        let rows = self.shape().first().copied().unwrap_or(1);
        if factors.len() != rows || self.rank() == 0 {
            return shape_err("scale_rows", format!("{} factors for shape {:?}", factors.len(), self.shape()));
        }
        let inner = self.numel() / rows.max(1);
        let xd = self.data();
        let out: Vec<T> = xd.iter().enumerate().map(|(i, &v)| v * factors[i / inner]).collect();
        let factors = factors.to_vec();
        Ok(Tensor::from_op(
            "scale_rows",
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.iter().enumerate().map(|(i, &gi)| gi * factors[i / inner]).collect())]),
        ))
    }
}
