//! Catch dynamics, preprocessing, no-op starts and the remote protocol.

use std::io::Write;
use std::net::TcpListener;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_core::env::catch::{start_columns, ACTION_LEFT, ACTION_RIGHT, ACTION_STAY, BALL_VALUE, GRID, PADDLE_VALUE};
use swindqn_core::env::protocol::{TransportError, OP_OBS};
use swindqn_core::env::remote::serve;
use swindqn_core::env::{
    luminance, make_emulator, preprocess, Catch, Emulator, FrameStack, PixelEnv, RawFrame, RemoteEmulator,
    FRAME_PIXELS, FRAME_SIZE,
};
use swindqn_core::Error;

fn chase(ball_col: i32, paddle: i32) -> usize {
    match ball_col.cmp(&paddle) {
        std::cmp::Ordering::Less => ACTION_LEFT,
        std::cmp::Ordering::Greater => ACTION_RIGHT,
        std::cmp::Ordering::Equal => ACTION_STAY,
    }
}

/// Plays one episode after `noops` no-op frames, choosing every four frames
/// the action that moves the paddle toward the ball's current column.
fn greedy_episode(col: i32, drift: i32, noops: u32) -> f32 {
    let mut c = Catch::new();
    c.reset_to(col, drift);
    for _ in 0..noops {
        assert!(!c.act(ACTION_STAY).unwrap().terminal);
    }
    let mut ret = 0.0;
    loop {
        let action = chase(c.ball().1, c.paddle());
        for _ in 0..4 {
            let s = c.act(action).unwrap();
            ret += s.reward;
            if s.terminal {
                return ret;
            }
        }
    }
}

#[test]
fn greedy_policy_always_catches() {
    let mut episodes = 0;
    for drift in -1..=1 {
        for col in start_columns(drift) {
            for noops in 0..30 {
                assert_eq!(greedy_episode(col, drift, noops), 1.0, "drift {drift} col {col} noops {noops}");
                episodes += 1;
            }
        }
    }
    assert_eq!(episodes, (11 + 21 + 11) * 30);
}

#[test]
fn standing_still_misses_far_balls() {
    assert_eq!(greedy_episode(10, 0, 0), 1.0);
    let mut c = Catch::new();
    c.reset_to(0, 0);
    let mut r = 0.0;
    loop {
        let s = c.act(ACTION_STAY).unwrap();
        r += s.reward;
        if s.terminal {
            break;
        }
    }
    assert_eq!(r, -1.0);
}

/// Ball column and paddle centre read back from an 84×84 observation.
fn read_observation(frame: &[u8]) -> (usize, usize) {
    let scale = FRAME_SIZE / GRID;
    let mut ball = None;
    let mut paddle = Vec::new();
    for y in 0..GRID {
        for x in 0..GRID {
            let v = frame[(y * scale) * FRAME_SIZE + x * scale];
            if v == BALL_VALUE {
                ball = Some(x);
            } else if v == PADDLE_VALUE {
                paddle.push(x);
            }
        }
    }
    let paddle = paddle.iter().sum::<usize>() / paddle.len().max(1);
    (ball.expect("ball visible"), paddle)
}

#[test]
fn greedy_from_pixels_through_pixel_env() {
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..300 {
        let mut state = env.reset(seed, &mut rng).unwrap();
        let mut steps = 0;
        let ret = loop {
            let (ball, paddle) = read_observation(state.newest());
            let out = env.step(chase(ball as i32, paddle as i32)).unwrap();
            steps += 1;
            state = out.state;
            if out.terminal {
                break out.reward;
            }
            assert_eq!(out.emulator_frames, 4);
        };
        assert_eq!(ret, 1.0, "seed {seed}");
        assert!(steps <= 20);
    }
}

#[test]
fn random_policy_return_matches_enumeration() {
    let exact = Catch::random_policy_return(30);
    assert!((exact - (-0.7048228010825388)).abs() < 1e-12);
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let episodes = 6000;
    let mut total = 0.0;
    for seed in 0..episodes {
        env.reset(seed, &mut rng).unwrap();
        loop {
            let out = env.step(rand::Rng::gen_range(&mut rng, 0..3)).unwrap();
            if out.terminal {
                total += f64::from(out.reward);
                break;
            }
        }
    }
    let mean = total / f64::from(episodes);
    // Standard error ≈ 0.71/√6000 ≈ 0.009.
    assert!((mean - exact).abs() < 0.04, "Monte Carlo {mean} vs exact {exact}");
}

#[test]
fn noop_counts_are_uniform() {
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let mut counts = [0usize; 30];
    for seed in 0..n {
        env.reset(seed, &mut rng).unwrap();
        counts[env.last_noops() as usize] += 1;
    }
    let expected = 1.0 / 30.0;
    for (k, &c) in counts.iter().enumerate() {
        let p = c as f64 / f64::from(n);
        assert!((p - expected).abs() <= 0.02, "noop {k}: {p}");
        assert!(c > 0);
    }
}

#[test]
fn noops_advance_the_emulator() {
    // After k no-op frames the ball has fallen ⌊k/4⌋ rows.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    for seed in 0..200 {
        env.reset(seed, &mut rng).unwrap();
        assert_eq!(env.emulator().ball().0 as u32, env.last_noops() / 4);
    }
}

#[test]
fn frame_accounting_and_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut env = PixelEnv::new(Catch::new(), 1).unwrap();
    let s0 = env.reset(0, &mut rng).unwrap();
    assert_eq!(env.last_noops(), 0);
    assert!(s0.0.iter().all(|f| f == &s0.0[0]));
    let mut frames = 0;
    let mut steps = 0;
    loop {
        let out = env.step(ACTION_STAY).unwrap();
        frames += out.emulator_frames;
        steps += 1;
        if out.terminal {
            break;
        }
    }
    // Without no-ops the 80-frame episode is exactly 20 four-frame steps.
    assert_eq!((steps, frames), (20, 80));
    assert!(env.step(ACTION_STAY).is_err());
}

#[test]
fn max_pooling_keeps_ball_from_both_frames() {
    // Between ticks the ball is static, so pooling two identical frames must
    // leave a single ball; after a tick inside the window the pooled frame
    // shows where the ball was on the earlier frame as well.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    for seed in 0..50 {
        env.reset(seed, &mut rng).unwrap();
        let k = env.last_noops();
        let out = env.step(ACTION_STAY).unwrap();
        let balls = out.state.newest().iter().filter(|&&v| v == BALL_VALUE).count() / 16;
        // The tick lands on the last frame of the window only when k ≡ 0 (mod 4).
        let expected = if k.is_multiple_of(4) { 2 } else { 1 };
        assert_eq!(balls, expected, "seed {seed} noops {k}");
    }
}

#[test]
fn integer_upscale_is_exact_replication() {
    let mut c = Catch::new();
    let raw = c.reset_to(4, 1);
    let p = preprocess(&raw);
    assert_eq!(p.len(), FRAME_PIXELS);
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            assert_eq!(p[y * FRAME_SIZE + x], raw.pixels[(y / 4) * GRID + x / 4]);
        }
    }
}

#[test]
fn luminance_weights() {
    let rgb = RawFrame { width: 3, height: 1, channels: 3, pixels: vec![255, 0, 0, 0, 255, 0, 0, 0, 255] };
    let g = luminance(&rgb);
    assert_eq!(g.channels, 1);
    assert_eq!(g.pixels, vec![76, 150, 29]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn preprocess_preserves_constants_and_range(w in 1usize..200, h in 1usize..200, v in any::<u8>()) {
        let frame = RawFrame { width: w, height: h, channels: 1, pixels: vec![v; w * h] };
        let p = preprocess(&frame);
        prop_assert_eq!(p.len(), FRAME_PIXELS);
        prop_assert!(p.iter().all(|&x| x == v));
    }

    #[test]
    fn preprocess_stays_within_input_range(w in 1usize..120, h in 1usize..120, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<u8> = (0..w * h).map(|_| rand::Rng::gen(&mut rng)).collect();
        let (lo, hi) = (*pixels.iter().min().unwrap(), *pixels.iter().max().unwrap());
        let p = preprocess(&RawFrame { width: w, height: h, channels: 1, pixels });
        prop_assert!(p.iter().all(|&x| x >= lo && x <= hi));
    }
}

#[test]
fn frame_stack_rolls_oldest_out() {
    let f = |v: u8| -> swindqn_core::env::Frame { vec![v; FRAME_PIXELS].into() };
    let s = FrameStack::replicated(f(1)).push(f(2)).push(f(3));
    let firsts: Vec<u8> = s.0.iter().map(|fr| fr[0]).collect();
    assert_eq!(firsts, vec![1, 1, 2, 3]);
    let norm = s.to_normalized();
    assert_eq!(norm.len(), 4 * FRAME_PIXELS);
    assert_eq!(norm[3 * FRAME_PIXELS], 3.0 / 255.0);
}

fn spawn_server(connections: usize) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || serve(&listener, Catch::new, Some(connections)).unwrap());
    addr
}

#[test]
fn loopback_matches_local_trajectories() {
    let addr = spawn_server(1);
    let remote = RemoteEmulator::connect(addr, "catch", 3, Some(Duration::from_secs(10))).unwrap();
    let mut local = PixelEnv::new(make_emulator("catch").unwrap(), 30).unwrap();
    let mut remote = PixelEnv::new(remote, 30).unwrap();
    let (mut r1, mut r2) = (ChaCha8Rng::seed_from_u64(9), ChaCha8Rng::seed_from_u64(9));
    let mut actions = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..20 {
        let a = local.reset(seed, &mut r1).unwrap();
        let b = remote.reset(seed, &mut r2).unwrap();
        assert_eq!(a, b);
        loop {
            let act = rand::Rng::gen_range(&mut actions, 0..3);
            let x = local.step(act).unwrap();
            let y = remote.step(act).unwrap();
            assert_eq!(x.state, y.state);
            assert_eq!((x.reward, x.terminal, x.emulator_frames), (y.reward, y.terminal, y.emulator_frames));
            if x.terminal {
                break;
            }
        }
    }
}

#[test]
fn remote_emulator_errors_come_back_as_env_errors() {
    let addr = spawn_server(1);
    let mut remote = RemoteEmulator::connect(addr, "catch", 3, Some(Duration::from_secs(10))).unwrap();
    // Stepping before a reset is an emulator error, reported over the wire.
    assert!(matches!(remote.act(0), Err(Error::Env(_))));
    remote.reset(1).unwrap();
    assert!(remote.act(1).is_ok());
}

#[test]
fn truncated_reply_is_a_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = [0u8; 64];
        let _ = std::io::Read::read(&mut s, &mut buf);
        // Header announces 100 bytes; only the opcode and 3 bytes follow.
        s.write_all(&100u32.to_le_bytes()).unwrap();
        s.write_all(&[OP_OBS, 1, 2, 3]).unwrap();
    });
    let mut remote = RemoteEmulator::connect(addr, "catch", 3, Some(Duration::from_secs(10))).unwrap();
    let err = remote.reset(0).unwrap_err();
    assert!(matches!(err, Error::Transport(TransportError::Protocol(_))), "{err:?}");
    server.join().unwrap();
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mut remote = RemoteEmulator::connect(addr, "catch", 3, Some(Duration::from_millis(200))).unwrap();
    let err = remote.reset(0).unwrap_err();
    assert!(matches!(err, Error::Transport(TransportError::Timeout)), "{err:?}");
    drop(listener);
}

#[test]
fn closed_server_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || drop(listener.accept().unwrap()));
    let mut remote = RemoteEmulator::connect(addr, "catch", 3, Some(Duration::from_secs(10))).unwrap();
    server.join().unwrap();
    let err = remote.reset(0).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
}
