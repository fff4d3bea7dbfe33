//! Evaluation runs and score summaries: per-checkpoint statistics,
//! human-normalized scores, AUC, performance profiles and confidence bands.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{q_values, select_action};
use crate::env::{Emulator, PixelEnv};
use crate::error::{Error, Result};
use crate::qnet::QNetwork;

/// One evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub frames: u64,
    pub episode_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Training exploration rate at the time of the evaluation.
    pub epsilon: f64,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str = "step,frames,mean_score,std_score,min,max,epsilon";

    pub fn from_scores(step: u64, frames: u64, episode_scores: Vec<f64>, epsilon: f64) -> Result<Self> {
        if episode_scores.is_empty() {
            return Err(Error::Metric("evaluation record needs at least one episode".into()));
        }
        let n = episode_scores.len() as f64;
        let mean = episode_scores.iter().sum::<f64>() / n;
        let std = (episode_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = episode_scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = episode_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(EvalRecord { step, frames, episode_scores, mean, std, min, max, epsilon })
    }

    /// True when the stored aggregates equal a recomputation from the scores.
    pub fn is_consistent(&self) -> bool {
        EvalRecord::from_scores(self.step, self.frames, self.episode_scores.clone(), self.epsilon)
            .map(|r| r == *self)
            .unwrap_or(false)
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{},{}", self.step, self.frames, self.mean, self.std, self.min, self.max, self.epsilon)
    }
}

/// How an evaluation is run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub epsilon: f64,
    pub noop_max: u32,
    /// Emulator-frame budget per episode (agent frames, four per step).
    pub max_episode_frames: u64,
    /// Root of the per-episode random streams.
    pub seed: u64,
}

/// Plays episode `index` of an evaluation. Each episode has its own random
/// stream (environment seed, no-op count, exploration), so results do not
/// depend on how episodes are spread over workers.
fn run_episode<N: QNetwork<f32>, E: Emulator>(net: &N, emu: E, settings: &EvalSettings, index: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(index as u64 + 1);
    let mut env = PixelEnv::new(emu, settings.noop_max)?;
    let seed = rng.gen::<u32>();
    let mut state = env.reset(seed, &mut rng)?;
    let mut score = 0.0;
    let mut frames = 0;
    loop {
        let action = select_action(net.num_actions(), settings.epsilon, &mut rng, || q_values(net, &state))?;
        let out = env.step(action)?;
        score += f64::from(out.reward);
        frames += 4;
        state = out.state;
        if out.terminal || frames >= settings.max_episode_frames {
            return Ok(score);
        }
    }
}

/// Raw (unclipped) returns of `settings.episodes` episodes.
pub fn evaluate<N, F>(net: &N, open_env: F, settings: &EvalSettings) -> Result<Vec<f64>>
where
    N: QNetwork<f32>,
    F: Fn() -> Result<Box<dyn Emulator>>,
{
    if settings.episodes == 0 {
        return Err(Error::Metric("evaluation needs at least one episode".into()));
    }
    (0..settings.episodes).map(|i| run_episode(net, open_env()?, settings, i)).collect()
}

/// [`evaluate`] spread over `workers` threads, each with its own parameter
/// snapshot and environments. Returns the same scores in the same order.
pub fn evaluate_parallel<N, F>(net: &N, open_env: F, settings: &EvalSettings, workers: usize) -> Result<Vec<f64>>
where
    N: QNetwork<f32>,
    F: Fn() -> Result<Box<dyn Emulator>> + Sync,
{
    let workers = workers.clamp(1, settings.episodes.max(1));
    if workers == 1 {
        return evaluate(net, open_env, settings);
    }
    if settings.episodes == 0 {
        return Err(Error::Metric("evaluation needs at least one episode".into()));
    }
    let open_env = &open_env;
    let results: Vec<Result<Vec<(usize, f64)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let snapshot = net.frozen_copy();
                scope.spawn(move || {
                    (w..settings.episodes)
                        .step_by(workers)
                        .map(|i| Ok((i, run_episode(&snapshot, open_env()?, settings, i)?)))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut scores = vec![0.0; settings.episodes];
    for r in results {
        for (i, s) in r? {
            scores[i] = s;
        }
    }
    Ok(scores)
}

/// Random-agent and human reference scores of one task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub random: f64,
    pub human: f64,
}

/// `(score − random)/(human − random)`.
pub fn human_normalized(score: f64, anchor: Anchor) -> f64 {
    (score - anchor.random) / (anchor.human - anchor.random)
}

/// Reference scores by task, looked up case-insensitively.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreAnchors {
    table: BTreeMap<String, Anchor>,
}

/// The bundled table (`task,random_score,human_score`).
pub const DEFAULT_ANCHORS: &str = include_str!("../data/anchors.csv");

impl ScoreAnchors {
    /// Parses `task,random_score,human_score` lines. Blank lines, `#`
    /// comments and a header line starting with `task` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("task")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [task, random, human] = fields[..] else {
                return Err(Error::Metric(format!("anchors line {}: expected 3 fields, got `{raw}`", n + 1)));
            };
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Metric(format!("anchors line {}: bad number `{s}`", n + 1)))
            };
            let anchor = Anchor { random: num(random)?, human: num(human)? };
            if anchor.human == anchor.random {
                return Err(Error::Metric(format!("anchors line {}: human score equals random score", n + 1)));
            }
            table.insert(task.to_ascii_lowercase(), anchor);
        }
        Ok(ScoreAnchors { table })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_ANCHORS).expect("bundled anchor table is well-formed")
    }

    pub fn get(&self, task: &str) -> Result<Anchor> {
        self.table.get(&task.to_ascii_lowercase()).copied().ok_or_else(|| Error::MissingAnchor(task.to_string()))
    }

    pub fn normalized(&self, task: &str, score: f64) -> Result<f64> {
        Ok(human_normalized(score, self.get(task)?))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }
}

/// Mean of `score_i / reference` over the curve.
pub fn auc(curve: &[f64], reference: f64) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Metric("AUC of an empty curve".into()));
    }
    if reference == 0.0 {
        return Err(Error::Metric("AUC reference score is zero".into()));
    }
    Ok(curve.iter().map(|s| s / reference).sum::<f64>() / curve.len() as f64)
}

/// For each `τ`, the fraction of scores strictly greater than `τ`.
pub fn performance_profile(scores: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Metric("performance profile thresholds must be sorted ascending".into()));
    }
    if scores.is_empty() {
        return Ok(vec![0.0; taus.len()]);
    }
    let n = scores.len() as f64;
    Ok(taus.iter().map(|&t| scores.iter().filter(|&&s| s > t).count() as f64 / n).collect())
}

/// Normal-approximation 95% interval `mean ± 1.96·s/√n` with the sample
/// standard deviation `s`; zero width for a single value.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Metric("confidence interval of no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, mean, mean));
    }
    let s = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let half = 1.96 * s / n.sqrt();
    Ok((mean, mean - half, mean + half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_statistics() {
        let r = EvalRecord::from_scores(1, 4, vec![1.0, 1.0, 3.0], 0.5).unwrap();
        assert!((r.mean - 5.0 / 3.0).abs() < 1e-12);
        assert!((r.std - (8.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert_eq!((r.min, r.max), (1.0, 3.0));
        assert!(r.is_consistent());
        let mut tampered = r.clone();
        tampered.mean += 1e-9;
        assert!(!tampered.is_consistent());
        assert!(EvalRecord::from_scores(0, 0, vec![], 0.0).is_err());
    }

    #[test]
    fn anchor_parsing() {
        let a = ScoreAnchors::parse("task,random_score,human_score\n# note\nFoo, 1, 3\n").unwrap();
        assert_eq!(a.normalized("foo", 2.0).unwrap(), 0.5);
        assert!(matches!(a.normalized("bar", 1.0), Err(Error::MissingAnchor(_))));
        assert!(ScoreAnchors::parse("x,1,1").is_err());
        assert!(ScoreAnchors::parse("x,1").is_err());
    }

    #[test]
    fn auc_and_profile_examples() {
        assert_eq!(auc(&[2.0, 2.0, 2.0], 2.0).unwrap(), 1.0);
        assert_eq!(auc(&[0.0, 4.0], 4.0).unwrap(), 0.5);
        assert!(auc(&[1.0], 0.0).is_err());
        assert!(auc(&[], 1.0).is_err());
        let p = performance_profile(&[0.5, 1.5, 2.5], &[1.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(performance_profile(&[5.0, 6.0], &[0.0, 1.0, 2.0]).unwrap(), vec![1.0; 3]);
        assert!(performance_profile(&[1.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn confidence_interval_width() {
        let (m, lo, hi) = confidence_interval(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        let half = 1.96 * 2f64.sqrt() / 2f64.sqrt();
        assert!((hi - m - half).abs() < 1e-12 && (m - lo - half).abs() < 1e-12);
    }
}
