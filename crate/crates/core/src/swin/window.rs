//! Window partitioning of token grids and the relative-position index.

use swindqn_tensor::{Element, Tensor};

use crate::error::{config_err, Result};

fn check_geometry(op: &str, h: usize, w: usize, window: usize, shift: usize) -> Result<()> {
    if window == 0 || !h.is_multiple_of(window) || !w.is_multiple_of(window) {
        return config_err(format!("{op}: {h}x{w} grid is not divisible by window {window}"));
    }
    if shift >= window {
        return config_err(format!("{op}: shift {shift} must be smaller than window {window}"));
    }
    Ok(())
}

/// `[B, H, W, C]` → `[B·nW, window², C]`, rolling by `(−shift, −shift)`
/// first. Windows are ordered row-major over the window grid, tokens
/// row-major inside each window.
pub fn window_partition<T: Element>(grid: &Tensor<T>, window: usize, shift: usize) -> Result<Tensor<T>> {
    let &[b, h, w, c] = grid.shape() else {
        return config_err(format!("window_partition: expected [B, H, W, C], got {:?}", grid.shape()));
    };
    check_geometry("window_partition", h, w, window, shift)?;
    let rolled = if shift > 0 { grid.roll2d(-(shift as isize), -(shift as isize))? } else { grid.clone() };
    let (nh, nw) = (h / window, w / window);
    Ok(rolled.reshape(&[b, nh, window, nw, window, c])?.permute(&[0, 1, 3, 2, 4, 5])?.reshape(&[
        b * nh * nw,
        window * window,
        c,
    ])?)
}

/// Inverse of [`window_partition`] for an `h × w` grid.
pub fn window_merge<T: Element>(
    windows: &Tensor<T>,
    window: usize,
    shift: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let &[bw, n, c] = windows.shape() else {
        return config_err(format!("window_merge: expected [B·nW, N, C], got {:?}", windows.shape()));
    };
    check_geometry("window_merge", h, w, window, shift)?;
    let (nh, nw) = (h / window, w / window);
    if n != window * window || bw % (nh * nw) != 0 {
        return config_err(format!(
            "window_merge: {bw} windows of {n} tokens do not tile a {h}x{w} grid with window {window}"
        ));
    }
    let b = bw / (nh * nw);
    let grid =
        windows.reshape(&[b, nh, nw, window, window, c])?.permute(&[0, 1, 3, 2, 4, 5])?.reshape(&[b, h, w, c])?;
    Ok(if shift > 0 { grid.roll2d(shift as isize, shift as isize)? } else { grid })
}

/// For every token pair `(i, j)` of a `window × window` window, the row of
/// the `(2·window − 1)²`-row bias table holding their offset. Row-major
/// `[N, N]` with `N = window²`.
pub fn relative_position_index(window: usize) -> Vec<usize> {
    let n = window * window;
    let span = 2 * window - 1;
    let mut index = Vec::with_capacity(n * n);
    for i in 0..n {
        let (yi, xi) = (i / window, i % window);
        for j in 0..n {
            let (yj, xj) = (j / window, j % window);
            let dy = yi + window - 1 - yj;
            let dx = xi + window - 1 - xj;
            index.push(dy * span + dx);
        }
    }
    index
}
