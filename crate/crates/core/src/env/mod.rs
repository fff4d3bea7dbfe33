//! Pixel environments and the agent-facing preprocessing wrapper.
//!
//! An [`Emulator`] produces raw frames one emulator frame at a time.
//! [`PixelEnv`] turns it into the agent's view: no-op starts, a frame skip
//! of four with rewards summed, the max of the last two raw frames,
//! resampling to 84×84 grayscale and a four-frame stack.

pub mod catch;
pub mod protocol;
pub mod remote;

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

pub use catch::Catch;
pub use protocol::TransportError;
pub use remote::RemoteEmulator;

pub const FRAME_SIZE: usize = 84;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;
pub const STACK: usize = 4;
pub const FRAME_SKIP: u32 = 4;

/// Row-major 8-bit image, grayscale (`channels == 1`) or interleaved RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub frame: RawFrame,
    pub reward: f32,
    pub terminal: bool,
}

/// A frame-level environment.
pub trait Emulator: Send {
    fn name(&self) -> &str;
    fn num_actions(&self) -> usize;
    /// The do-nothing action used for no-op starts.
    fn noop_action(&self) -> usize {
        0
    }
    fn reset(&mut self, seed: u32) -> Result<RawFrame>;
    /// Advances one emulator frame.
    fn act(&mut self, action: usize) -> Result<EnvStep>;
}

impl<E: Emulator + ?Sized> Emulator for Box<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn noop_action(&self) -> usize {
        (**self).noop_action()
    }
    fn reset(&mut self, seed: u32) -> Result<RawFrame> {
        (**self).reset(seed)
    }
    fn act(&mut self, action: usize) -> Result<EnvStep> {
        (**self).act(action)
    }
}

/// Names accepted by [`make_emulator`].
pub const ENV_NAMES: &[&str] = &["catch"];

/// Action count of a named environment.
pub fn env_num_actions(name: &str) -> Result<usize> {
    match name {
        "catch" => Ok(3),
        _ => Err(Error::Env(format!("unknown environment `{name}` (known: {})", ENV_NAMES.join(", ")))),
    }
}

pub fn make_emulator(name: &str) -> Result<Box<dyn Emulator>> {
    match name {
        "catch" => Ok(Box::new(Catch::new())),
        _ => Err(Error::Env(format!("unknown environment `{name}` (known: {})", ENV_NAMES.join(", ")))),
    }
}

/// Where environments come from: a local emulator by name, or a remote
/// peer speaking the byte-stream protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvSource {
    pub name: String,
    pub remote: Option<String>,
}

impl EnvSource {
    pub fn local(name: &str) -> Self {
        EnvSource { name: name.to_string(), remote: None }
    }

    pub fn open(&self) -> Result<Box<dyn Emulator>> {
        match &self.remote {
            None => make_emulator(&self.name),
            Some(addr) => {
                let actions = env_num_actions(&self.name)?;
                Ok(Box::new(RemoteEmulator::connect(
                    addr.as_str(),
                    &self.name,
                    actions,
                    Some(std::time::Duration::from_secs(30)),
                )?))
            }
        }
    }

    pub fn num_actions(&self) -> Result<usize> {
        env_num_actions(&self.name)
    }
}

/// ITU-R 601 luma of an RGB frame; grayscale frames pass through.
pub fn luminance(frame: &RawFrame) -> RawFrame {
    if frame.channels == 1 {
        return frame.clone();
    }
    let pixels = frame
        .pixels
        .chunks_exact(frame.channels)
        .map(|p| {
            let y = 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RawFrame { width: frame.width, height: frame.height, channels: 1, pixels }
}

/// Area-weighted overlap of source cells with each of `dst` output cells.
/// Integer upscales reduce to nearest-neighbour replication.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let overlap = hi.min((i + 1) as f64) - lo.max(i as f64);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

/// Luminance, then area resampling to 84×84, rounded to 8 bits.
pub fn preprocess(frame: &RawFrame) -> Vec<u8> {
    let gray = luminance(frame);
    let wx = area_weights(gray.width, FRAME_SIZE);
    let wy = area_weights(gray.height, FRAME_SIZE);
    // Horizontal pass into a height × 84 buffer, then vertical.
    let mut rows = vec![0f64; gray.height * FRAME_SIZE];
    for y in 0..gray.height {
        let src = &gray.pixels[y * gray.width..(y + 1) * gray.width];
        for (x, ws) in wx.iter().enumerate() {
            rows[y * FRAME_SIZE + x] = ws.iter().map(|&(i, w)| w * f64::from(src[i])).sum();
        }
    }
    let mut out = vec![0u8; FRAME_PIXELS];
    for (y, ws) in wy.iter().enumerate() {
        for x in 0..FRAME_SIZE {
            let v: f64 = ws.iter().map(|&(i, w)| w * rows[i * FRAME_SIZE + x]).sum();
            out[y * FRAME_SIZE + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMode {
    Train,
    Eval,
}

/// Training rewards are clipped to `[−1, 1]`; evaluation rewards are raw.
pub fn clip_reward(r: f32, mode: RewardMode) -> f32 {
    match mode {
        RewardMode::Train => r.clamp(-1.0, 1.0),
        RewardMode::Eval => r,
    }
}

/// A preprocessed 84×84 frame, shared between the stacks that contain it.
pub type Frame = Arc<[u8]>;

/// The last four preprocessed frames, oldest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameStack(pub [Frame; STACK]);

impl FrameStack {
    /// Stack of four copies of `f`, used at episode start.
    pub fn replicated(f: Frame) -> Self {
        FrameStack([f.clone(), f.clone(), f.clone(), f])
    }

    /// The stack after observing `f`: oldest frame dropped, `f` appended.
    pub fn push(&self, f: Frame) -> Self {
        let [_, a, b, c] = &self.0;
        FrameStack([a.clone(), b.clone(), c.clone(), f])
    }

    pub fn newest(&self) -> &Frame {
        &self.0[STACK - 1]
    }

    /// Writes the stack as `[4, 84, 84]` floats in `[0, 1]`.
    pub fn write_normalized(&self, out: &mut [f32]) {
        debug_assert_eq!(out.len(), STACK * FRAME_PIXELS);
        for (dst, f) in out.chunks_exact_mut(FRAME_PIXELS).zip(&self.0) {
            for (d, &p) in dst.iter_mut().zip(f.iter()) {
                *d = f32::from(p) / 255.0;
            }
        }
    }

    pub fn to_normalized(&self) -> Vec<f32> {
        let mut v = vec![0.0; STACK * FRAME_PIXELS];
        self.write_normalized(&mut v);
        v
    }
}

/// Result of one agent step.
#[derive(Clone, Debug)]
pub struct AgentStep {
    pub state: FrameStack,
    /// Raw (unclipped) sum over the skipped frames.
    pub reward: f32,
    pub terminal: bool,
    /// Emulator frames actually run (fewer than four when the episode ended
    /// inside the skip window).
    pub emulator_frames: u32,
}

/// Agent-level view of an emulator.
pub struct PixelEnv<E: Emulator> {
    emu: E,
    noop_max: u32,
    stack: Option<FrameStack>,
    last_raw: Option<RawFrame>,
    terminal: bool,
    last_noops: u32,
}

impl<E: Emulator> PixelEnv<E> {
    pub fn new(emu: E, noop_max: u32) -> Result<Self> {
        if noop_max == 0 {
            return Err(Error::Config("noop_max must be at least 1".into()));
        }
        Ok(PixelEnv { emu, noop_max, stack: None, last_raw: None, terminal: false, last_noops: 0 })
    }

    pub fn emulator(&self) -> &E {
        &self.emu
    }

    pub fn num_actions(&self) -> usize {
        self.emu.num_actions()
    }

    /// No-op count drawn by the latest reset.
    pub fn last_noops(&self) -> u32 {
        self.last_noops
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Seeds the emulator, applies `k ~ U[0, noop_max)` no-op frames and
    /// returns the initial stack (first frame replicated, then the no-op
    /// frames rolled in).
    pub fn reset(&mut self, seed: u32, rng: &mut dyn RngCore) -> Result<FrameStack> {
        let k = rng.gen_range(0..self.noop_max);
        let first = self.emu.reset(seed)?;
        let mut stack = FrameStack::replicated(preprocess(&first).into());
        let mut last = first;
        self.last_noops = k;
        for _ in 0..k {
            let s = self.emu.act(self.emu.noop_action())?;
            if s.terminal {
                // The episode is shorter than its no-op prefix: start over
                // without no-ops rather than hand out a finished state.
                self.last_noops = 0;
                last = self.emu.reset(seed)?;
                stack = FrameStack::replicated(preprocess(&last).into());
                break;
            }
            stack = stack.push(preprocess(&s.frame).into());
            last = s.frame;
        }
        self.stack = Some(stack.clone());
        self.last_raw = Some(last);
        self.terminal = false;
        Ok(stack)
    }

    /// Repeats `action` for up to four emulator frames, stopping early on a
    /// terminal frame.
    pub fn step(&mut self, action: usize) -> Result<AgentStep> {
        let Some(stack) = self.stack.take() else {
            return Err(Error::Env("step called before reset".into()));
        };
        if self.terminal {
            self.stack = Some(stack);
            return Err(Error::Env("step called on a terminal environment".into()));
        }
        if action >= self.emu.num_actions() {
            self.stack = Some(stack);
            return Err(Error::Env(format!("action {action} out of range for {} actions", self.emu.num_actions())));
        }
        let mut reward = 0.0;
        let mut prev = self.last_raw.take().expect("set with stack");
        let mut last = prev.clone();
        let mut frames = 0;
        for _ in 0..FRAME_SKIP {
            let s = self.emu.act(action)?;
            frames += 1;
            reward += s.reward;
            prev = std::mem::replace(&mut last, s.frame);
            if s.terminal {
                self.terminal = true;
                break;
            }
        }
        let pooled = max_frames(&prev, &last);
        let stack = stack.push(preprocess(&pooled).into());
        self.stack = Some(stack.clone());
        self.last_raw = Some(last);
        Ok(AgentStep { state: stack, reward, terminal: self.terminal, emulator_frames: frames })
    }
}

/// Elementwise max of two frames of equal geometry; otherwise `b`.
fn max_frames(a: &RawFrame, b: &RawFrame) -> RawFrame {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return b.clone();
    }
    RawFrame { pixels: a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| x.max(y)).collect(), ..b.clone() }
}
