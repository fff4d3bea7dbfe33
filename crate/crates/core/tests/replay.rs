//! Replay memory: FIFO eviction, uniform sampling, determinism, frame sharing.

mod common;

use std::sync::Arc;

use common::{frame, transition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_core::env::{FrameStack, FRAME_PIXELS};
use swindqn_core::replay::{NotReady, ReplayBuffer, Transition};

#[test]
fn evicts_oldest_first_at_fixed_capacity() {
    let mut r = ReplayBuffer::new(5);
    assert_eq!(r.allocated(), 5);
    for t in 0..12u8 {
        r.push(transition(t));
        assert_eq!(r.allocated(), 5);
    }
    assert_eq!(r.len(), 5);
    assert_eq!(r.pushes(), 12);
    let kept: Vec<f32> = (0..5).map(|i| r.get(i).unwrap().reward).collect();
    assert_eq!(kept, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
    assert!(r.get(5).is_none());
}

proptest! {
    #[test]
    fn retains_the_last_capacity_pushes(cap in 1usize..20, n in 0usize..60) {
        let mut r = ReplayBuffer::new(cap);
        for t in 0..n {
            r.push(transition(t as u8));
        }
        prop_assert_eq!(r.len(), n.min(cap));
        for i in 0..r.len() {
            let expected = (n - r.len() + i) as u8;
            prop_assert_eq!(r.get(i).unwrap().reward, f32::from(expected));
        }
    }
}

#[test]
fn sampling_before_enough_data_is_not_ready() {
    let mut r = ReplayBuffer::new(10);
    r.push(transition(1));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(r.sample(2, &mut rng).unwrap_err(), NotReady { size: 1, batch: 2 });
    assert!(r.sample(1, &mut rng).is_ok());
}

#[test]
fn sampling_is_uniform() {
    let mut r = ReplayBuffer::new(10);
    for t in 0..10 {
        r.push(transition(t));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 10];
    let draws = 100_000;
    for _ in 0..draws / 10 {
        for i in r.sample_indices(10, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    // Pearson χ² with 9 degrees of freedom; 27.9 is the 0.999 quantile.
    let e = draws as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi2 < 27.9, "χ² = {chi2}, counts {counts:?}");
    for &c in &counts {
        assert!((c as f64 / draws as f64 - 0.1).abs() <= 0.01);
    }
}

#[test]
fn no_reallocation_when_full() {
    let mut r = ReplayBuffer::new(10_000);
    let t = transition(3);
    for _ in 0..20_000 {
        r.push(t.clone());
    }
    assert_eq!((r.len(), r.allocated(), r.pushes()), (10_000, 10_000, 20_000));
}

#[test]
fn equal_seeds_give_equal_batches() {
    let mut r = ReplayBuffer::new(50);
    for t in 0..50 {
        r.push(transition(t));
    }
    let a = r.sample(8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let b = r.sample(8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.states.len(), 8 * 4 * FRAME_PIXELS);
    // Rewards identify the source transitions, whose frames are constant.
    for k in 0..8 {
        let tag = a.rewards[k];
        assert_eq!(a.states[k * 4 * FRAME_PIXELS], tag / 255.0);
        assert_eq!(a.next_states[k * 4 * FRAME_PIXELS], (tag + 1.0) / 255.0);
        assert_eq!(a.actions[k], tag as usize % 3);
    }
}

#[test]
fn consecutive_transitions_share_frames() {
    let mut r = ReplayBuffer::new(100);
    let mut stack = FrameStack::replicated(frame(0));
    for t in 1..=100u8 {
        let next = stack.push(frame(t));
        r.push(Transition { state: stack.clone(), action: 0, reward: 0.0, next_state: next.clone(), terminal: false });
        stack = next;
    }
    let (a, b) = (r.get(10).unwrap(), r.get(11).unwrap());
    assert!(Arc::ptr_eq(&a.next_state.0[3], &b.state.0[3]));
    // One new frame per transition, plus the initial one.
    let frames = r.memory_bytes() - 100 * std::mem::size_of::<Transition>();
    assert_eq!(frames, 101 * FRAME_PIXELS);
}
