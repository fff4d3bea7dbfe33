//! `export`: plot-ready tables from one or more training runs.
//!
//! * `curves.csv`: per evaluation point, the mean score across runs with a
//!   95% interval.
//! * `auc.csv`: per run and for the mean curve, the mean of score/reference.
//! * `profile.csv`: fraction of runs whose final human-normalized score
//!   exceeds each threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use swindqn_core::checkpoint::RunManifest;
use swindqn_core::metrics::{auc, confidence_interval, performance_profile, EvalRecord, ScoreAnchors};
use swindqn_core::persist::write_atomic;
use swindqn_core::{Error, Result};

use crate::run::{EVAL_CSV, MANIFEST};

/// Profile thresholds, in human-normalized units.
const TAUS: [f64; 21] =
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0];

struct Run {
    name: String,
    env: String,
    /// `(step, frames, mean_score)` in file order.
    points: Vec<(u64, u64, f64)>,
}

fn read_run(dir: &Path) -> Result<Run> {
    let path = dir.join(EVAL_CSV);
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    if lines.next() != Some(EvalRecord::CSV_HEADER) {
        return Err(Error::Metric(format!("{}: unexpected header", path.display())));
    }
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::Metric(format!("{}: malformed row {}", path.display(), n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        points.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
        ));
    }
    let env = match fs::read_to_string(dir.join(MANIFEST)) {
        Ok(t) => RunManifest::parse(&t)?.config.env,
        Err(_) => "catch".to_string(),
    };
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
    Ok(Run { name, env, points })
}

/// Run directories: each argument with an `eval.csv`, or its immediate
/// subdirectories that have one.
fn find_runs(args: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for dir in args {
        if dir.join(EVAL_CSV).is_file() {
            found.push(dir.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(EVAL_CSV).is_file())
            .collect();
        if subs.is_empty() {
            return Err(Error::Metric(format!("no {EVAL_CSV} in {} or its subdirectories", dir.display())));
        }
        subs.sort();
        found.extend(subs);
    }
    Ok(found)
}

pub fn export(args: &[PathBuf], out: Option<PathBuf>, reference: Option<f64>) -> Result<()> {
    let runs: Vec<Run> = find_runs(args)?.iter().map(|d| read_run(d)).collect::<Result<_>>()?;
    if let Some(r) = runs.iter().find(|r| r.points.is_empty()) {
        return Err(Error::Metric(format!("run `{}` has no evaluation rows", r.name)));
    }
    let anchors = ScoreAnchors::bundled();

    let mut by_frames: BTreeMap<u64, (u64, Vec<f64>)> = BTreeMap::new();
    for r in &runs {
        for &(step, frames, mean) in &r.points {
            by_frames.entry(frames).or_insert((step, Vec::new())).1.push(mean);
        }
    }
    let mut curves = String::from("step,frames,runs,mean_score,ci_low,ci_high\n");
    let mut mean_curve = Vec::with_capacity(by_frames.len());
    for (frames, (step, scores)) in &by_frames {
        let (m, lo, hi) = confidence_interval(scores)?;
        writeln!(curves, "{step},{frames},{},{m},{lo},{hi}", scores.len()).expect("writing to a String");
        mean_curve.push(m);
    }

    let mut auc_csv = String::from("run,env,reference,auc\n");
    let mut finals = Vec::with_capacity(runs.len());
    for r in &runs {
        let anchor = anchors.get(&r.env)?;
        let reference = reference.unwrap_or(anchor.human);
        let scores: Vec<f64> = r.points.iter().map(|p| p.2).collect();
        writeln!(auc_csv, "{},{},{reference},{}", r.name, r.env, auc(&scores, reference)?)
            .expect("writing to a String");
        finals.push(anchors.normalized(&r.env, *scores.last().expect("checked non-empty"))?);
    }
    let env = &runs[0].env;
    let reference = reference.unwrap_or(anchors.get(env)?.human);
    writeln!(auc_csv, "mean,{env},{reference},{}", auc(&mean_curve, reference)?).expect("writing to a String");

    let mut profile = String::from("tau,fraction\n");
    for (t, f) in TAUS.iter().zip(performance_profile(&finals, &TAUS)?) {
        writeln!(profile, "{t},{f}").expect("writing to a String");
    }

    let out = out.unwrap_or_else(|| args[0].clone());
    for (name, text) in [("curves.csv", curves), ("auc.csv", auc_csv), ("profile.csv", profile)] {
        write_atomic(&out.join(name), text.as_bytes())?;
    }
    println!("exported {} runs to {}", runs.len(), out.display());
    Ok(())
}
