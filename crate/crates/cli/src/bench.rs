//! Benchmark replication harness: a (situation x mode x replicate) grid of
//! episodes with paired noise streams, CSV output and per-mode summaries.

use rayon::prelude::*;

use aprol_core::adapt::Mode;
use aprol_core::archive::Repertoire;
use aprol_core::types::TaskPoint;
use aprol_core::worldsim::{Situation, Task};

use crate::episode::{run_episode, EpisodeConfig, EpisodeResult};
use crate::{CliError, Result};

/// FNV-1a over the situation label and replicate index; process-independent
/// so seed derivation is reproducible across runs and platforms.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed for replicate `r` of a situation: independent of the mode, so every
/// mode faces the identical world noise per replicate (paired comparison).
pub fn derive_seed(base_seed: u64, situation_label: &str, replicate: usize) -> u64 {
    let mut bytes = situation_label.as_bytes().to_vec();
    bytes.extend_from_slice(&(replicate as u64).to_le_bytes());
    base_seed ^ fnv1a(&bytes)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub task: Task,
    pub situations: Vec<Situation>,
    pub modes: Vec<Mode>,
    pub replicates: usize,
    pub base_seed: u64,
    pub exclude_matching: bool,
    pub start: TaskPoint,
    pub goal: TaskPoint,
    pub max_steps: usize,
    pub map_bounds: [(f64, f64); 2],
    pub map_resolution: f64,
    pub obstacles: Vec<aprol_core::nav::Rect>,
}

impl BenchConfig {
    pub fn new(task: Task, situations: Vec<Situation>, modes: Vec<Mode>, goal: TaskPoint) -> Self {
        let template = EpisodeConfig::new(
            task,
            Situation::identity(),
            std::path::Path::new("."),
            Mode::Aprol,
            goal.clone(),
        );
        Self {
            task,
            situations,
            modes,
            replicates: 40,
            base_seed: 0,
            exclude_matching: false,
            start: template.start,
            goal,
            max_steps: template.max_steps,
            map_bounds: template.map_bounds,
            map_resolution: template.map_resolution,
            obstacles: Vec::new(),
        }
    }
}

/// One benchmark episode outcome. Failed episodes (planner or selection
/// errors included) record the full step budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub situation: String,
    pub mode: Mode,
    pub replicate: usize,
    pub steps: usize,
    pub success: bool,
}

/// A benchmark row paired with its episode detail (absent for failed runs).
pub type EpisodeOutcome = (BenchRow, Option<EpisodeResult>);

/// Runs the full grid. Episodes execute concurrently (each owns its state);
/// rows are sorted afterwards so output order is schedule-independent.
/// Returns the rows together with the per-episode results for logging.
pub fn run_benchmark(
    cfg: &BenchConfig,
    repertoires: &[Repertoire],
) -> Result<(Vec<BenchRow>, Vec<EpisodeOutcome>)> {
    if cfg.replicates < 2 {
        return Err(CliError::Config("replicates must be >= 2".into()));
    }
    if cfg.situations.is_empty() || cfg.modes.is_empty() {
        return Err(CliError::Config(
            "need at least one situation and one mode".into(),
        ));
    }

    let mut jobs: Vec<(Situation, Mode, usize)> = Vec::new();
    for situation in &cfg.situations {
        for mode in &cfg.modes {
            for r in 0..cfg.replicates {
                jobs.push((situation.clone(), *mode, r));
            }
        }
    }

    let mut detailed: Vec<EpisodeOutcome> = jobs
        .par_iter()
        .map(|(situation, mode, replicate)| {
            let mut ep = EpisodeConfig::new(
                cfg.task,
                situation.clone(),
                std::path::Path::new("."),
                *mode,
                cfg.goal.clone(),
            );
            ep.exclude_matching = cfg.exclude_matching;
            ep.max_steps = cfg.max_steps;
            ep.start = cfg.start.clone();
            ep.seed = derive_seed(cfg.base_seed, &situation.label, *replicate);
            ep.map_bounds = cfg.map_bounds;
            ep.map_resolution = cfg.map_resolution;
            ep.obstacles = cfg.obstacles.clone();
            let row = |steps, success| BenchRow {
                situation: situation.label.clone(),
                mode: *mode,
                replicate: *replicate,
                steps,
                success,
            };
            match run_episode(&ep, repertoires) {
                Ok(res) => {
                    let steps = if res.success { res.steps_taken } else { cfg.max_steps };
                    (row(steps, res.success), Some(res))
                }
                // failure row: budget exhausted, episode details unavailable
                Err(_) => (row(cfg.max_steps, false), None),
            }
        })
        .collect();

    detailed.sort_by(|(a, _), (b, _)| {
        (a.situation.as_str(), a.mode.as_str(), a.replicate)
            .cmp(&(b.situation.as_str(), b.mode.as_str(), b.replicate))
    });
    let rows = detailed.iter().map(|(r, _)| r.clone()).collect();
    Ok((rows, detailed))
}

/// CSV with header `situation,mode,replicate,steps,success`.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("situation,mode,replicate,steps,success\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.situation, r.mode, r.replicate, r.steps, r.success
        ));
    }
    out
}

/// Parses the benchmark CSV back; every written row round-trips.
pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "situation,mode,replicate,steps,success")) => {}
        other => {
            return Err(CliError::Config(format!(
                "missing or malformed CSV header: {other:?}"
            )))
        }
    }
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Config(format!(
                "line {}: expected 5 fields, got {}",
                idx + 1,
                fields.len()
            )));
        }
        let parse_err = |what: &str| CliError::Config(format!("line {}: bad {what}", idx + 1));
        rows.push(BenchRow {
            situation: fields[0].to_string(),
            mode: fields[1].parse().map_err(|_| parse_err("mode"))?,
            replicate: fields[2].parse().map_err(|_| parse_err("replicate"))?,
            steps: fields[3].parse().map_err(|_| parse_err("steps"))?,
            success: fields[4].parse().map_err(|_| parse_err("success"))?,
        });
    }
    Ok(rows)
}

/// Median of a sample (midpoint convention for even sizes).
pub fn median(values: &[usize]) -> f64 {
    assert!(!values.is_empty());
    let mut v: Vec<usize> = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn quantile(sorted: &[usize], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

/// Per-mode `(median, IQR)` of the steps column, in mode listing order.
pub fn summarize(rows: &[BenchRow], modes: &[Mode]) -> Vec<(Mode, f64, f64)> {
    modes
        .iter()
        .map(|mode| {
            let mut steps: Vec<usize> = rows
                .iter()
                .filter(|r| r.mode == *mode)
                .map(|r| r.steps)
                .collect();
            steps.sort_unstable();
            if steps.is_empty() {
                return (*mode, f64::NAN, f64::NAN);
            }
            let med = median(&steps);
            let iqr = quantile(&steps, 0.75) - quantile(&steps, 0.25);
            (*mode, med, iqr)
        })
        .collect()
}
