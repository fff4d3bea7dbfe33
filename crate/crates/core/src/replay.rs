//! Fixed-capacity ring buffer of transitions with uniform sampling.
//!
//! Frames are stored as 8-bit images behind shared pointers, so a
//! transition's `next_state` and the following transition's `state` hold
//! the same three frames without copying them.

use rand::Rng;
use thiserror::Error;

use crate::env::{FrameStack, FRAME_PIXELS, STACK};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: FrameStack,
    pub action: usize,
    /// Reward as used for learning (clipped during training).
    pub reward: f32,
    pub next_state: FrameStack,
    pub terminal: bool,
}

/// Returned by [`ReplayBuffer::sample`] while the buffer holds fewer
/// entries than the requested batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("replay buffer holds {size} transitions, batch of {batch} requested")]
pub struct NotReady {
    pub size: usize,
    pub batch: usize,
}

/// A sampled minibatch with frames dequantized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub len: usize,
    /// `[len, 4, 84, 84]`
    pub states: Vec<f32>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    /// `[len, 4, 84, 84]`
    pub next_states: Vec<f32>,
    pub terminals: Vec<bool>,
}

pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    cursor: usize,
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, entries: Vec::with_capacity(capacity), cursor: 0, pushes: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total pushes since creation.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    /// Allocated slots of the backing store; fixed at `capacity`.
    pub fn allocated(&self) -> usize {
        self.entries.capacity()
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            self.entries[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushes += 1;
    }

    /// Entry `i` in insertion order (0 is the oldest retained).
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.entries.len() {
            return None;
        }
        let start = if self.entries.len() < self.capacity { 0 } else { self.cursor };
        self.entries.get((start + i) % self.capacity)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>, NotReady> {
        if self.entries.len() < batch || batch == 0 {
            return Err(NotReady { size: self.entries.len(), batch });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.entries.len())).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Batch, NotReady> {
        let idx = self.sample_indices(batch, rng)?;
        let per = STACK * FRAME_PIXELS;
        let mut out = Batch {
            len: batch,
            states: vec![0.0; batch * per],
            actions: Vec::with_capacity(batch),
            rewards: Vec::with_capacity(batch),
            next_states: vec![0.0; batch * per],
            terminals: Vec::with_capacity(batch),
        };
        for (k, &i) in idx.iter().enumerate() {
            let t = &self.entries[i];
            t.state.write_normalized(&mut out.states[k * per..(k + 1) * per]);
            t.next_state.write_normalized(&mut out.next_states[k * per..(k + 1) * per]);
            out.actions.push(t.action);
            out.rewards.push(t.reward);
            out.terminals.push(t.terminal);
        }
        Ok(out)
    }

    /// Bytes held by distinct frames plus per-entry bookkeeping.
    pub fn memory_bytes(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut frames = 0;
        for t in &self.entries {
            for f in t.state.0.iter().chain(t.next_state.0.iter()) {
                if seen.insert(f.as_ptr() as usize) {
                    frames += f.len();
                }
            }
        }
        frames + self.entries.len() * std::mem::size_of::<Transition>()
    }
}
