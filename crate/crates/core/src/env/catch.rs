//! Catch: a ball falls down a 21×21 grid and a 3-wide paddle on the bottom
//! row has to be under it when it lands.
//!
//! Physics advances one tick every [`TICK_FRAMES`] emulator frames, so with
//! a frame skip of four every agent step contains exactly one tick. Each
//! tick moves the paddle by the action (clamped to the grid) and the ball
//! down by one row; the ball also shifts one column in its drift direction
//! on every second tick. The episode ends on the tick the ball reaches the
//! bottom row: +1 if it lands on the paddle, −1 otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Emulator, EnvStep, RawFrame};
use crate::error::{Error, Result};

pub const GRID: usize = 21;
pub const TICK_FRAMES: u32 = 4;
pub const EPISODE_TICKS: u32 = GRID as u32 - 1;
pub const BALL_VALUE: u8 = 255;
pub const PADDLE_VALUE: u8 = 170;

pub const ACTION_STAY: usize = 0;
pub const ACTION_LEFT: usize = 1;
pub const ACTION_RIGHT: usize = 2;

const PADDLE_START: i32 = GRID as i32 / 2;
const PADDLE_MIN: i32 = 1;
const PADDLE_MAX: i32 = GRID as i32 - 2;
/// Columns travelled by a drifting ball over one episode.
const DRIFT_SPAN: i32 = EPISODE_TICKS as i32 / 2;

#[derive(Clone, Debug, Default)]
pub struct Catch {
    ball_row: i32,
    ball_col: i32,
    drift: i32,
    paddle: i32,
    frame: u32,
    tick: u32,
    started: bool,
    done: bool,
}

/// Valid starting columns for a drift direction, keeping the ball on the
/// grid for the whole episode.
pub fn start_columns(drift: i32) -> std::ops::RangeInclusive<i32> {
    let last = GRID as i32 - 1;
    match drift {
        1 => 0..=last - DRIFT_SPAN,
        -1 => DRIFT_SPAN..=last,
        _ => 0..=last,
    }
}

fn action_delta(action: usize) -> i32 {
    match action {
        ACTION_LEFT => -1,
        ACTION_RIGHT => 1,
        _ => 0,
    }
}

impl Catch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts an episode from an explicit configuration.
    pub fn reset_to(&mut self, start_col: i32, drift: i32) -> RawFrame {
        *self =
            Catch { ball_row: 0, ball_col: start_col, drift, paddle: PADDLE_START, started: true, ..Catch::default() };
        self.render()
    }

    pub fn ball(&self) -> (i32, i32) {
        (self.ball_row, self.ball_col)
    }

    pub fn paddle(&self) -> i32 {
        self.paddle
    }

    pub fn drift(&self) -> i32 {
        self.drift
    }

    pub fn render(&self) -> RawFrame {
        let mut pixels = vec![0u8; GRID * GRID];
        let bottom = (GRID - 1) * GRID;
        for c in self.paddle - 1..=self.paddle + 1 {
            pixels[bottom + c as usize] = PADDLE_VALUE;
        }
        pixels[self.ball_row as usize * GRID + self.ball_col as usize] = BALL_VALUE;
        RawFrame { width: GRID, height: GRID, channels: 1, pixels }
    }

    /// Expected return of the uniformly random agent under uniform no-op
    /// starts in `[0, noop_max)`, by exhaustive enumeration of start
    /// configurations and paddle random walks.
    pub fn random_policy_return(noop_max: u32) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for drift in -1..=1 {
            for col in start_columns(drift) {
                let landing = col + drift * DRIFT_SPAN;
                for k in 0..noop_max {
                    let ticks = EPISODE_TICKS.saturating_sub(k / TICK_FRAMES);
                    // Paddle position distribution after `ticks` random moves.
                    let mut dist = vec![0.0f64; GRID];
                    dist[PADDLE_START as usize] = 1.0;
                    for _ in 0..ticks {
                        let mut next = vec![0.0f64; GRID];
                        for (p, &mass) in dist.iter().enumerate() {
                            if mass == 0.0 {
                                continue;
                            }
                            for d in -1..=1 {
                                let q = (p as i32 + d).clamp(PADDLE_MIN, PADDLE_MAX) as usize;
                                next[q] += mass / 3.0;
                            }
                        }
                        dist = next;
                    }
                    let p_catch: f64 =
                        dist.iter().enumerate().filter(|(p, _)| (*p as i32 - landing).abs() <= 1).map(|(_, m)| m).sum();
                    total += 2.0 * p_catch - 1.0;
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}

impl Emulator for Catch {
    fn name(&self) -> &str {
        "catch"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn reset(&mut self, seed: u32) -> Result<RawFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let drift = rng.gen_range(-1..=1);
        let col = rng.gen_range(start_columns(drift));
        Ok(self.reset_to(col, drift))
    }

    fn act(&mut self, action: usize) -> Result<EnvStep> {
        if !self.started || self.done {
            return Err(Error::Env("catch: act called on a finished or unstarted episode".into()));
        }
        if action >= self.num_actions() {
            return Err(Error::Env(format!("catch: action {action} out of range")));
        }
        self.frame += 1;
        let mut reward = 0.0;
        if self.frame.is_multiple_of(TICK_FRAMES) {
            self.tick += 1;
            self.paddle = (self.paddle + action_delta(action)).clamp(PADDLE_MIN, PADDLE_MAX);
            self.ball_row += 1;
            if self.tick.is_multiple_of(2) {
                self.ball_col += self.drift;
            }
            if self.tick == EPISODE_TICKS {
                self.done = true;
                reward = if (self.ball_col - self.paddle).abs() <= 1 { 1.0 } else { -1.0 };
            }
        }
        Ok(EnvStep { frame: self.render(), reward, terminal: self.done })
    }
}
