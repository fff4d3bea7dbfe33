//! Per-stage activation heatmaps.

use std::path::Path;

use swindqn_tensor::{no_grad, Tensor};

use crate::env::{FrameStack, FRAME_SIZE, STACK};
use crate::error::{Error, Result};
use crate::persist::write_atomic;
use crate::qnet::{Mode, QNetwork};

/// An 84×84 map in `[0, 1]` derived from one stage's feature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub stage: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub pixels: Vec<f32>,
}

impl Heatmap {
    /// Channelwise mean of absolute activations of sample 0 of a
    /// `[B, H, W, C]` grid, min-max normalized and upsampled (nearest) to
    /// 84×84. A constant grid maps to all zeros.
    pub fn from_grid(stage: usize, grid: &Tensor<f32>) -> Result<Self> {
        let &[_, h, w, c] = grid.shape() else {
            return Err(Error::Metric(format!("activation grid must be [B, H, W, C], got {:?}", grid.shape())));
        };
        let data = grid.data();
        let cells: Vec<f32> =
            data[..h * w * c].chunks_exact(c).map(|ch| ch.iter().map(|v| v.abs()).sum::<f32>() / c as f32).collect();
        let lo = cells.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = cells.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let range = hi - lo;
        let norm: Vec<f32> = cells.iter().map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 }).collect();
        let mut pixels = vec![0.0; FRAME_SIZE * FRAME_SIZE];
        for y in 0..FRAME_SIZE {
            let gy = y * h / FRAME_SIZE;
            for x in 0..FRAME_SIZE {
                pixels[y * FRAME_SIZE + x] = norm[gy * w + x * w / FRAME_SIZE];
            }
        }
        Ok(Heatmap { stage, grid_height: h, grid_width: w, pixels })
    }

    /// Binary PGM (P5) bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{FRAME_SIZE} {FRAME_SIZE}\n255\n").into_bytes();
        out.extend(self.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }
}

/// Q-values and one heatmap per backbone stage for a single state.
pub fn activation_maps<N: QNetwork<f32>>(net: &N, state: &FrameStack) -> Result<(Vec<f32>, Vec<Heatmap>)> {
    no_grad(|| {
        let x = Tensor::from_vec(state.to_normalized(), &[1, STACK, FRAME_SIZE, FRAME_SIZE])?;
        let out = net.forward_staged(&x, Mode::Eval)?;
        let maps = out.stages.iter().enumerate().map(|(i, g)| Heatmap::from_grid(i, g)).collect::<Result<_>>()?;
        Ok((out.q.to_vec(), maps))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grid_gives_zero_map() {
        let m = Heatmap::from_grid(0, &Tensor::zeros(&[1, 7, 7, 4])).unwrap();
        assert_eq!(m.pixels.len(), 84 * 84);
        assert!(m.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upsampling_blocks() {
        // 2x2 grid with one hot cell: the top-left 42x42 block lights up.
        let g = Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0], &[1, 2, 2, 1]).unwrap();
        let m = Heatmap::from_grid(0, &g).unwrap();
        assert_eq!(m.pixels[0], 1.0);
        assert_eq!(m.pixels[41 * 84 + 41], 1.0);
        assert_eq!(m.pixels[42], 0.0);
        assert_eq!(m.pixels[42 * 84], 0.0);
        let pgm = m.to_pgm();
        assert!(pgm.starts_with(b"P5\n84 84\n255\n"));
        assert_eq!(pgm.len(), 13 + 84 * 84);
    }
}
