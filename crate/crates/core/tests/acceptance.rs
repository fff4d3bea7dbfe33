//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. The
//! Swin half of the Catch learning criterion takes far longer than the rest
//! and runs only when `SWINDQN_ACCEPTANCE_SWIN=1`; otherwise its line reads
//! NOT RUN with a measured runtime projection.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{tiny_config, tiny_network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swindqn_core::agent::{compute_target, train, Agent, EpisodeLog, Flow, LogCollector, TrainObserver};
use swindqn_core::checkpoint::{Checkpoint, RunManifest};
use swindqn_core::cnn::CnnQNet;
use swindqn_core::config::{BackboneKind, CnnConfig, ExperimentConfig, MixerKind, SwinConfig};
use swindqn_core::env::{make_emulator, Catch, PixelEnv, FRAME_PIXELS, STACK};
use swindqn_core::metrics::{evaluate, EvalSettings, ScoreAnchors};
use swindqn_core::qnet::{Backbone, Mode, QNetwork};
use swindqn_core::replay::{Batch, ReplayBuffer};
use swindqn_core::swin::{drop_path, window_merge, window_partition, BlockGeometry, SwinBlock, SwinQNet};
use swindqn_core::tabular::{tabular_double_q_update, Mdp, QTable, Which};
use swindqn_tensor::gradcheck::{check_gradients, GradCheckConfig};
use swindqn_tensor::{conv2d, grouped_conv1d_mix, layer_norm, no_grad, smooth_l1, softmax, Tensor};

type Outcome = Result<String, String>;
type Criterion = Box<dyn FnOnce() -> Outcome>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

// 1. Shape conformance.

fn shapes() -> Outcome {
    let start = Instant::now();
    let net = SwinQNet::<f32>::new(&SwinConfig::default(), &mut rng(1)).map_err(|e| e.to_string())?;
    let x = Tensor::zeros(&[1, 4, 84, 84]);
    let tokens = net.embed.forward(&x).map_err(|e| e.to_string())?;
    let out = no_grad(|| net.forward_staged(&x, Mode::Eval)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(tokens.shape() == [1, 784, 96], format!("tokens {:?}", tokens.shape()))?;
    let grids: Vec<Vec<usize>> = out.stages.iter().map(|g| g.shape()[1..].to_vec()).collect();
    ensure(grids == [vec![28, 28, 96], vec![14, 14, 192], vec![7, 7, 384]], format!("stages {grids:?}"))?;
    ensure(elapsed < 1.0, format!("took {elapsed:.2} s"))?;
    Ok(format!("784×96 tokens, stages {grids:?}, {elapsed:.2} s"))
}

// 2. Gradient fidelity.

/// Worst relative error of `f` read out through a random linear probe.
fn op_error(seed: u64, wrt: &[Tensor<f64>], f: impl Fn() -> swindqn_tensor::Result<Tensor<f64>>) -> f64 {
    let shape = no_grad(|| f().unwrap().shape().to_vec());
    let probe = Tensor::from_vec(uniform(shape.iter().product(), seed ^ 0x55, -1.0, 1.0), &shape).unwrap();
    let cfg = GradCheckConfig { max_coords: None, ..GradCheckConfig::default() };
    let reports = check_gradients(|| f()?.mul(&probe).map(|t| t.sum_all()), wrt, cfg).unwrap();
    reports.iter().map(|r| r.relative_error()).fold(0.0, f64::max)
}

fn param(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::parameter(uniform(shape.iter().product(), seed, -1.0, 1.0), shape).unwrap()
}

/// Values at least 0.05 away from zero, clear of the ReLU/GELU kink.
fn param_off_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let v = uniform(shape.iter().product(), seed, 0.05, 1.0);
    let mut r = rng(seed + 1);
    Tensor::parameter(v.into_iter().map(|x| if r.gen_bool(0.5) { x } else { -x }).collect(), shape).unwrap()
}

fn per_op_errors() -> Vec<(&'static str, f64)> {
    let (x, y, bias) = (param(&[3, 4, 5], 1), param(&[3, 4, 5], 2), param(&[5], 3));
    let k = param_off_zero(&[4, 6], 4);
    let (m, w, w2, b2) = (param(&[2, 3, 4], 5), param(&[4, 5], 6), param(&[5, 4], 7), param(&[5], 8));
    let (ba, bb) = (param(&[2, 4, 3], 9), param(&[2, 5, 4], 10));
    let g = param(&[2, 3, 4, 5], 11);
    let table = param(&[6, 3], 12);
    let q = param(&[4, 5], 13);
    let q_distinct = Tensor::parameter((0..20).map(|i| ((i * 7919) % 997) as f64 / 97.0).collect(), &[4, 5]).unwrap();
    let (img, kern, kb) = (param(&[2, 2, 7, 6], 14), param(&[3, 2, 3, 2], 15), param(&[3], 16));
    let (tok, mix, mb) = (param(&[2, 5, 6], 17), param(&[2, 5, 5], 18), param(&[2, 5], 19));
    let (ln, gain, lb) = (param(&[4, 6], 20), param(&[6], 21), param(&[6], 22));
    let target = Tensor::from_vec(vec![0.0; 6], &[6]).unwrap();
    // Residuals on both sides of the quadratic/linear seam at ±1.
    let pred = Tensor::parameter(vec![-2.5, -0.6, -0.1, 0.3, 0.8, 1.7], &[6]).unwrap();
    let rows = [0usize, 5, 2, 2];
    vec![
        (
            "add/sub/mul/scale",
            op_error(1, &[x.clone(), y.clone(), bias.clone()], || {
                x.add(&y)?.mul(&x)?.sub(&bias)?.mul(&bias)?.scale(1.7).add_scalar(0.3).add(&bias)
            }),
        ),
        ("relu/gelu", op_error(2, std::slice::from_ref(&k), || k.relu().add(&k.gelu()))),
        (
            "scale_rows/reshape",
            op_error(3, std::slice::from_ref(&x), || x.scale_rows(&[0.5, -2.0, 1.5])?.reshape(&[12, 5])),
        ),
        ("matmul", op_error(4, &[m.clone(), w.clone()], || m.matmul(&w))),
        ("linear", op_error(5, &[m.clone(), w2.clone(), b2.clone()], || m.linear(&w2, Some(&b2)))),
        ("bmm", op_error(6, &[ba.clone(), bb.clone()], || ba.bmm(&bb, true, true))),
        ("permute", op_error(7, std::slice::from_ref(&g), || g.permute(&[2, 0, 3, 1]))),
        ("roll2d", op_error(8, std::slice::from_ref(&g), || g.roll2d(-2, 3))),
        ("select0", op_error(9, std::slice::from_ref(&g), || g.select0(1))),
        ("index_select_rows", op_error(10, std::slice::from_ref(&table), || table.index_select_rows(&rows))),
        ("mean_axis", op_error(11, std::slice::from_ref(&x), || x.mean_axis(1))),
        ("sum_all/mean_all", op_error(12, std::slice::from_ref(&x), || x.mean_all().add(&x.sum_all()))),
        ("gather_last", op_error(13, std::slice::from_ref(&q), || q.gather_last(&[4, 0, 2, 2]))),
        ("max_last", op_error(14, std::slice::from_ref(&q_distinct), || q_distinct.max_last())),
        ("conv2d", op_error(15, &[img.clone(), kern.clone(), kb.clone()], || conv2d(&img, &kern, Some(&kb), 2))),
        (
            "grouped_conv1d_mix",
            op_error(16, &[tok.clone(), mix.clone(), mb.clone()], || grouped_conv1d_mix(&tok, &mix, Some(&mb))),
        ),
        ("layer_norm", op_error(17, &[ln.clone(), gain.clone(), lb.clone()], || layer_norm(&ln, &gain, &lb, 1e-5))),
        ("softmax", op_error(18, std::slice::from_ref(&ln), || softmax(&ln.scale(3.0)))),
        ("smooth_l1", op_error(19, std::slice::from_ref(&pred), || smooth_l1(&pred, &target))),
    ]
}

fn network_error<N: QNetwork<f64>>(net: &N, shape: &[usize], coords: usize, step: f64) -> f64 {
    let x = Tensor::parameter(uniform(shape.iter().product(), 11, 0.0, 1.0), shape).unwrap();
    let qs = [shape[0], net.num_actions()];
    let probe = Tensor::from_vec(uniform(qs[0] * qs[1], 12, -0.5, 0.5), &qs).unwrap();
    let mut wrt: Vec<Tensor<f64>> = net.parameters().into_iter().map(|(_, t)| t).collect();
    wrt.push(x.clone());
    let cfg = GradCheckConfig { step, max_coords: Some(coords), seed: 7 };
    let reports =
        check_gradients(|| net.forward(&x, Mode::Eval).unwrap().mul(&probe).map(|t| t.sum_all()), &wrt, cfg).unwrap();
    reports.iter().map(|r| r.relative_error()).fold(0.0, f64::max)
}

fn reduced_swin(mixer: MixerKind) -> SwinConfig {
    SwinConfig {
        input_size: 21,
        blocks_per_layer: vec![2],
        heads_per_layer: vec![2],
        patch_size: 1,
        embed_dim: 4,
        mlp_ratio: 2,
        mixer,
        ..SwinConfig::default()
    }
}

fn gradients() -> Outcome {
    let ops = per_op_errors();
    let (worst_op, op_err) = ops.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    for (name, e) in &ops {
        ensure(*e < 1e-4, format!("{name}: relative error {e:e}"))?;
    }
    let mut nets = Vec::new();
    for mixer in [MixerKind::SpatialMlp, MixerKind::WindowedAttention] {
        let net = SwinQNet::<f64>::new(&reduced_swin(mixer), &mut rng(1)).unwrap();
        nets.push((format!("swin/{mixer}"), network_error(&net, &[1, 4, 21, 21], 6, 1e-5)));
    }
    let cnn = CnnQNet::<f64>::new(&CnnConfig::default(), &mut rng(3)).unwrap();
    nets.push(("cnn".into(), network_error(&cnn, &[1, 4, 84, 84], 5, 1e-6)));
    for (name, e) in &nets {
        ensure(*e < 1e-3, format!("{name}: relative error {e:e}"))?;
    }
    let net_err = nets.iter().map(|n| n.1).fold(0.0, f64::max);
    Ok(format!("{} ops, worst {worst_op} {op_err:.1e} < 1e-4; backbones worst {net_err:.1e} < 1e-3", ops.len()))
}

// 3. Window partition/merge and cross-window locality.

fn token_influence(shift: usize, mixer: MixerKind) -> Vec<bool> {
    let geometry = BlockGeometry { resolution: 14, dim: 4, heads: 2, window: 7, shift };
    let block = SwinBlock::<f64>::new(&mut rng(13), geometry, 2, mixer, 0.0).unwrap();
    block.fc2.weight.update_data(|w| w.fill(0.0));
    let x = Tensor::parameter(uniform(196 * 4, 14, 0.0, 1.0), &[1, 196, 4]).unwrap();
    let y = block.forward(&x, &mut Mode::Eval).unwrap();
    y.reshape(&[196, 4]).unwrap().index_select_rows(&[0]).unwrap().sum_all().backward().unwrap();
    x.grad().unwrap().chunks(4).map(|t| t.iter().any(|&v| v != 0.0)).collect()
}

fn windows() -> Outcome {
    let grid = Tensor::from_vec(uniform(2 * 28 * 28 * 5, 3, -1.0, 1.0), &[2, 28, 28, 5]).unwrap();
    for shift in [0, 3] {
        let parts = window_partition(&grid, 7, shift).map_err(|e| e.to_string())?;
        let back = window_merge(&parts, 7, shift, 28, 28).map_err(|e| e.to_string())?;
        ensure(back.to_vec() == grid.to_vec(), format!("shift {shift}: merge(partition(x)) != x"))?;
    }
    for mixer in [MixerKind::SpatialMlp, MixerKind::WindowedAttention] {
        let outside = |infl: &[bool]| (0..196).filter(|&t| (t / 14 >= 7 || t % 14 >= 7) && infl[t]).count();
        ensure(outside(&token_influence(0, mixer)) == 0, format!("{mixer}: unshifted block leaks across windows"))?;
        ensure(outside(&token_influence(3, mixer)) > 0, format!("{mixer}: shifted block stays within its window"))?;
    }
    Ok("exact inverse for shifts {0, 3}; cross-window gradient only with shift, both mixers".into())
}

// 4. Double-target inequality.

fn double_targets() -> Outcome {
    let mut r = rng(0);
    let (qa, qb) = (tiny_network(&tiny_config(1)), tiny_network(&tiny_config(2)));
    let per = STACK * FRAME_PIXELS;
    let n = 4;
    let mut terminal_checks = 0;
    for i in 0..1000 {
        let batch = Batch {
            len: n,
            states: vec![0.0; n * per],
            actions: vec![0; n],
            rewards: (0..n).map(|_| r.gen_range(-1.0..1.0)).collect(),
            next_states: (0..n * per).map(|_| r.gen::<f32>()).collect(),
            terminals: (0..n).map(|_| r.gen_bool(0.3)).collect(),
        };
        let gamma = r.gen_range(0.0..1.0);
        let y = compute_target(&batch, &qa, &qb, gamma).map_err(|e| e.to_string())?;
        let next = Tensor::from_vec(batch.next_states.clone(), &[n, STACK, 84, 84]).unwrap();
        let qb_next = no_grad(|| qb.forward(&next, Mode::Eval)).unwrap().to_vec();
        for k in 0..n {
            if batch.terminals[k] {
                ensure(
                    y[k] == batch.rewards[k],
                    format!("batch {i}: terminal target {} != r {}", y[k], batch.rewards[k]),
                )?;
                terminal_checks += 1;
            } else {
                let max_b = qb_next[k * 3..k * 3 + 3].iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let bound = batch.rewards[k] + gamma as f32 * max_b;
                ensure(y[k] <= bound, format!("batch {i}: target {} > bound {bound}", y[k]))?;
            }
        }
    }
    Ok(format!("1000 batches, {terminal_checks} terminal targets exact"))
}

// 5. Tabular convergence.

fn tabular() -> Outcome {
    let mut t = vec![vec![Vec::new(); 2]; 3];
    for (s, moves) in t.iter_mut().enumerate() {
        moves[0] = vec![(1.0, if s == 0 { -0.1 } else { 0.0 }, Some(s.saturating_sub(1)))];
        moves[1] = if s == 2 { vec![(1.0, 1.0, None)] } else { vec![(1.0, 0.0, Some(s + 1))] };
    }
    let mdp = Mdp { states: 3, actions: 2, transitions: t };
    let q_star = mdp.value_iteration(0.9, 1e-12);
    let (mut qa, mut qb) = (QTable::zeros(3, 2), QTable::zeros(3, 2));
    let mut r = rng(0);
    for updates in 1..=100_000 {
        let (s, a) = (r.gen_range(0..3), r.gen_range(0..2));
        let (reward, next) = mdp.sample(s, a, r.gen());
        let which = if r.gen_bool(0.5) { Which::A } else { Which::B };
        tabular_double_q_update(&mut qa, &mut qb, s, a, reward, next, 0.2, 0.9, which);
        if qa.max_abs_diff(&q_star) < 1e-3 && qb.max_abs_diff(&q_star) < 1e-3 {
            return Ok(format!("within 1e-3 of value iteration after {updates} updates"));
        }
    }
    Err(format!("still {:.2e} away after 1e5 updates", qa.max_abs_diff(&q_star).max(qb.max_abs_diff(&q_star))))
}

// 6. Normalized scores.

fn metric_reproduction() -> Outcome {
    let anchors = ScoreAnchors::bundled();
    let mut got = Vec::new();
    for (task, raw, expected) in [("Breakout", 857.8, 29.73), ("Pong", 21.0, 1.18), ("Freeway", 34.0, 1.15)] {
        let v = anchors.normalized(task, raw).map_err(|e| e.to_string())?;
        ensure((v - expected).abs() <= 0.01, format!("{task}: {v:.4} vs {expected}"))?;
        got.push(format!("{task} {v:.2}"));
    }
    Ok(got.join(", "))
}

// 7. Learning Catch from pixels.

/// Desk-scale schedule for Catch. Shared by both backbones.
fn catch_config(backbone: BackboneKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { backbone, seed: 1, ..ExperimentConfig::default() };
    let t = &mut cfg.train;
    t.lr = 5e-4;
    t.eps_decay_frames = 40_000;
    t.learning_starts = 4_000;
    t.sync_frames = 4_000;
    t.steps_per_update = 2;
    t.steps_per_eval = 2_500;
    t.replay_size = 50_000;
    cfg
}

const CATCH_EVAL: EvalSettings =
    EvalSettings { episodes: 100, epsilon: 0.001, noop_max: 30, max_episode_frames: 108_000, seed: 99 };

struct UntilSolved {
    started: Instant,
    curve: Vec<(u64, f64)>,
}

impl TrainObserver<Backbone<f32>> for UntilSolved {
    fn on_episode(&mut self, _log: &EpisodeLog) -> swindqn_core::Result<()> {
        Ok(())
    }

    fn on_eval(&mut self, agent: &Agent<Backbone<f32>>) -> swindqn_core::Result<Flow> {
        let scores = evaluate(agent.policy(), || make_emulator("catch"), &CATCH_EVAL)?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        self.curve.push((agent.frames, mean));
        eprintln!(
            "    [7] {:>7} frames: mean return {mean:+.2} ({:.0} s)",
            agent.frames,
            self.started.elapsed().as_secs_f64()
        );
        Ok(if mean >= 0.9 { Flow::Stop } else { Flow::Continue })
    }
}

fn learns_catch(backbone: BackboneKind, max_frames: u64) -> Outcome {
    let mut cfg = catch_config(backbone);
    cfg.train.max_frames = max_frames;
    let net = Backbone::build(&cfg, 3, &mut rng(cfg.seed)).map_err(|e| e.to_string())?;
    let mut agent = Agent::new(net, cfg.train.clone(), cfg.seed).map_err(|e| e.to_string())?;
    let mut env = PixelEnv::new(make_emulator("catch").unwrap(), cfg.train.noop_max).unwrap();
    let mut replay = ReplayBuffer::new(cfg.train.replay_size);
    let mut obs = UntilSolved { started: Instant::now(), curve: Vec::new() };
    train(&mut agent, &mut env, &mut replay, &mut obs).map_err(|e| e.to_string())?;
    let minutes = obs.started.elapsed().as_secs_f64() / 60.0;
    match obs.curve.iter().find(|p| p.1 >= 0.9) {
        Some(&(frames, mean)) => {
            Ok(format!("{backbone}: mean {mean:+.2} over 100 episodes at {frames} frames ({minutes:.1} min)"))
        }
        None => Err(format!(
            "{backbone}: best {:+.2} within {max_frames} frames",
            obs.curve.iter().map(|p| p.1).fold(f64::MIN, f64::max)
        )),
    }
}

/// Measured cost of the Swin run: update time at batch 32 and one greedy
/// forward pass, scaled to the 300k-frame schedule.
fn swin_projection() -> String {
    let cfg = catch_config(BackboneKind::Swin);
    let net = Backbone::build(&cfg, 3, &mut rng(cfg.seed)).unwrap();
    let mut agent = Agent::new(net, cfg.train.clone(), cfg.seed).unwrap();
    let mut r = rng(5);
    let per = STACK * FRAME_PIXELS;
    let b = cfg.train.batch;
    let batch = Batch {
        len: b,
        states: (0..b * per).map(|_| r.gen()).collect(),
        actions: (0..b).map(|_| r.gen_range(0..3)).collect(),
        rewards: vec![0.0; b],
        next_states: (0..b * per).map(|_| r.gen()).collect(),
        terminals: vec![false; b],
    };
    agent.update_step(&batch).unwrap();
    let t = Instant::now();
    agent.update_step(&batch).unwrap();
    let update = t.elapsed().as_secs_f64();
    let x = Tensor::from_vec(batch.states[..per].to_vec(), &[1, STACK, 84, 84]).unwrap();
    let t = Instant::now();
    no_grad(|| agent.policy().forward(&x, Mode::Eval)).unwrap();
    let act = t.elapsed().as_secs_f64();
    let steps = 300_000 / cfg.train.frames_per_step;
    let hours = (steps / cfg.train.steps_per_update) as f64 * update / 3600.0 + steps as f64 * act / 3600.0;
    format!("projected {hours:.1} h on this machine ({update:.2} s per update, {:.0} ms per action)", act * 1e3)
}

// 8. Drop path.

fn stochastic_depth() -> Outcome {
    let branch = Tensor::<f32>::full(&[10_000, 2], 1.0);
    let out = drop_path(&branch, 0.1, &mut Mode::Train(&mut rng(15))).map_err(|e| e.to_string())?.to_vec();
    let freq = out.chunks(2).filter(|s| s.iter().all(|&v| v == 0.0)).count() as f64 / 10_000.0;
    ensure((freq - 0.1).abs() <= 0.01, format!("drop frequency {freq}"))?;
    let cfg =
        SwinConfig { blocks_per_layer: vec![2, 2], heads_per_layer: vec![2, 4], embed_dim: 8, ..SwinConfig::default() };
    let net = SwinQNet::<f32>::new(&cfg, &mut rng(16)).unwrap();
    let x =
        Tensor::from_vec(uniform(2 * per_state(), 17, 0.0, 1.0).iter().map(|&v| v as f32).collect(), &[2, 4, 84, 84])
            .unwrap();
    let a = net.forward(&x, Mode::Eval).unwrap().to_vec();
    let b = net.forward(&x, Mode::Eval).unwrap().to_vec();
    ensure(bits(&a) == bits(&b), "inference differs between calls")?;
    Ok(format!("drop frequency {freq:.4}; inference bitwise repeatable"))
}

fn per_state() -> usize {
    STACK * FRAME_PIXELS
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

// 9. Determinism and persistence.

fn thousand_steps(seed: u64) -> (Agent<Backbone<f32>>, Vec<EpisodeLog>) {
    let cfg = tiny_config(seed);
    let mut agent = Agent::new(tiny_network(&cfg), cfg.train.clone(), seed).unwrap();
    let mut env = PixelEnv::new(make_emulator("catch").unwrap(), cfg.train.noop_max).unwrap();
    let mut replay = ReplayBuffer::new(cfg.train.replay_size);
    let mut logs = LogCollector::default();
    train(&mut agent, &mut env, &mut replay, &mut logs).unwrap();
    (agent, logs.episodes)
}

fn determinism() -> Outcome {
    let (a, logs_a) = thousand_steps(11);
    let (b, logs_b) = thousand_steps(11);
    ensure(a.steps == 1000, format!("ran {} steps", a.steps))?;
    ensure(logs_a == logs_b, "episode logs differ")?;
    let params = |n: &Backbone<f32>| bits(&n.parameters().iter().flat_map(|(_, t)| t.to_vec()).collect::<Vec<_>>());
    ensure(params(a.policy()) == params(b.policy()), "trained parameters differ")?;

    let ckpt = Checkpoint::from_agent(&a, RunManifest::new(tiny_config(11)));
    let restored =
        Checkpoint::decode(&ckpt.encode()).map_err(|e| e.to_string())?.restore_agent().map_err(|e| e.to_string())?;
    let x =
        Tensor::from_vec(uniform(2 * per_state(), 3, 0.0, 1.0).iter().map(|&v| v as f32).collect(), &[2, 4, 84, 84])
            .unwrap();
    for (orig, back, name) in [(a.policy(), restored.policy(), "policy"), (a.target(), restored.target(), "target")] {
        let (p, q) = (orig.forward(&x, Mode::Eval).unwrap().to_vec(), back.forward(&x, Mode::Eval).unwrap().to_vec());
        ensure(bits(&p) == bits(&q), format!("{name} output changed by the checkpoint round trip"))?;
    }
    ensure(
        Checkpoint::from_agent(&restored, ckpt.manifest.clone()).encode() == ckpt.encode(),
        "re-encoded checkpoint differs",
    )?;
    Ok(format!("{} episodes bitwise equal; checkpoint round trip bitwise", logs_a.len()))
}

// 10. No-op starts.

fn noop_starts() -> Outcome {
    let mut env = PixelEnv::new(Catch::new(), 30).unwrap();
    let mut r = rng(5);
    let mut counts = [0usize; 30];
    for seed in 0..10_000 {
        env.reset(seed, &mut r).map_err(|e| e.to_string())?;
        counts[env.last_noops() as usize] += 1;
    }
    let worst = counts.iter().map(|&c| (c as f64 / 1e4 - 1.0 / 30.0).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.02, format!("largest deviation {worst:.4}"))?;
    Ok(format!("all 30 counts within {worst:.4} of 1/30"))
}

fn main() {
    let swin_run = std::env::var("SWINDQN_ACCEPTANCE_SWIN").is_ok_and(|v| v == "1");
    let criteria: Vec<(&str, &str, Criterion)> = vec![
        ("1", "shape conformance", Box::new(shapes)),
        ("2", "gradient fidelity", Box::new(gradients)),
        ("3", "partition/merge inverse and locality", Box::new(windows)),
        ("4", "double-target inequality", Box::new(double_targets)),
        ("5", "tabular double Q convergence", Box::new(tabular)),
        ("6", "normalized score reproduction", Box::new(metric_reproduction)),
        ("7a", "CNN learns Catch within 200k frames", Box::new(|| learns_catch(BackboneKind::Cnn, 200_000))),
        ("8", "stochastic depth", Box::new(stochastic_depth)),
        ("9", "determinism and persistence", Box::new(determinism)),
        ("10", "no-op start distribution", Box::new(noop_starts)),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {why} [{secs:.1} s]");
            }
        }
    }
    let name = "Swin learns Catch within 300k frames";
    if swin_run {
        match learns_catch(BackboneKind::Swin, 300_000) {
            Ok(detail) => println!("PASS [7b] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [7b] {name}: {why}");
            }
        }
    } else {
        println!("NOT RUN [7b] {name}: {}; set SWINDQN_ACCEPTANCE_SWIN=1 to run", swin_projection());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
