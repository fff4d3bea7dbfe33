use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Mean Smooth L1 (Huber, δ = 1) loss. `target` is treated as a constant:
/// no gradient is ever produced for it.
pub fn smooth_l1<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return shape_err("smooth_l1", format!("pred {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let n = pred.numel();
    if n == 0 {
        return shape_err("smooth_l1", "empty batch");
    }
    let (pd, td) = (pred.data(), target.data());
    let half = T::from_f64_lossy(0.5);
    let inv_n = T::one() / T::from_usize(n).expect("count");
    let diffs: Vec<T> = pd.iter().zip(td.iter()).map(|(&p, &t)| p - t).collect();
    let total: T = diffs.iter().map(|&d| if d.abs() < T::one() { half * d * d } else { d.abs() - half }).sum();
    Ok(Tensor::from_op(
        "smooth_l1",
        vec![total * inv_n],
        Vec::new(),
        vec![pred.clone()],
        Box::new(move |g, _| {
            let scale = g[0] * inv_n;
            let gp = diffs.iter().map(|&d| scale * if d.abs() < T::one() { d } else { d.signum() }).collect();
            vec![Some(gp)]
        }),
    ))
}
