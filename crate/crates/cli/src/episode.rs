//! One deployment episode: plan, pick a policy, execute, update the models,
//! repeat until the goal tolerance or the step budget is hit.
//!
//! Selection happens in the agent's body frame: the desired transition and
//! the observed one are both rotated by the current heading before they meet
//! the repertoires, so stored transitions stay comparable when the heading
//! drifts (the pusher's object frame, damage-induced yaw).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use aprol_core::adapt::{record_and_update, select_policy, AdaptConfig, Mode, Observation};
use aprol_core::archive::{load_repertoire, Repertoire};
use aprol_core::gpmodel::{GpHyperparams, GpModel};
use aprol_core::nav::{next_subgoal, plan, GridMap, Rect};
use aprol_core::types::TaskPoint;
use aprol_core::worldsim::{step, AgentState, NominalMap, Situation, Task};
use aprol_core::RepertoireStats;

use crate::{CliError, Result};

/// Everything a single episode needs.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub task: Task,
    pub true_situation: Situation,
    pub repertoire_dir: PathBuf,
    /// Drop the repertoire generated for exactly the deployed situation.
    pub exclude_matching: bool,
    pub mode: Mode,
    pub max_steps: usize,
    pub start: TaskPoint,
    pub goal: TaskPoint,
    pub seed: u64,
    pub map_bounds: [(f64, f64); 2],
    pub map_resolution: f64,
    pub obstacles: Vec<Rect>,
    /// Success when the distance to the goal drops below this.
    pub goal_tolerance: f64,
    /// Override for the candidate neighborhood radius (default 1.5x the mean
    /// inter-centroid spacing).
    pub candidate_radius: Option<f64>,
}

impl EpisodeConfig {
    /// Sensible defaults: start at the origin, auto-sized empty map,
    /// resolution `r_max/2`, tolerance `0.5*r_max`, step budget 60 (mobile)
    /// or 80 (pusher).
    pub fn new(
        task: Task,
        true_situation: Situation,
        repertoire_dir: &Path,
        mode: Mode,
        goal: TaskPoint,
    ) -> Self {
        let r_max = NominalMap::for_task(task).r_max();
        let start = TaskPoint::xy(0.0, 0.0);
        let map_bounds = auto_bounds(&start, &goal, r_max);
        Self {
            task,
            true_situation,
            repertoire_dir: repertoire_dir.to_path_buf(),
            exclude_matching: false,
            mode,
            max_steps: match task {
                Task::Mobile => 60,
                Task::Pusher => 80,
            },
            start,
            goal,
            seed: 0,
            map_bounds,
            map_resolution: r_max / 2.0,
            obstacles: Vec::new(),
            goal_tolerance: 0.5 * r_max,
            candidate_radius: None,
        }
    }
}

/// Empty-map bounds covering start and goal with generous margin; divergent
/// baselines that wander off the map fail their episode instead of planning
/// on an unbounded grid.
pub fn auto_bounds(start: &TaskPoint, goal: &TaskPoint, r_max: f64) -> [(f64, f64); 2] {
    let margin = 8.0 * r_max;
    let lo_x = start.coords[0].min(goal.coords[0]) - margin;
    let hi_x = start.coords[0].max(goal.coords[0]) + margin;
    let lo_y = start.coords[1].min(goal.coords[1]) - margin;
    let hi_y = start.coords[1].max(goal.coords[1]) + margin;
    [(lo_x, hi_x), (lo_y, hi_y)]
}

/// Per-step record for the JSON-lines episode log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiag {
    pub step: usize,
    pub repertoire: String,
    pub cell_id: usize,
    pub candidate_count: usize,
    pub repertoire_probs: Vec<f64>,
    pub score: f64,
    pub position: [f64; 2],
    pub expected: [f64; 2],
    pub observed: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub steps_taken: usize,
    pub success: bool,
    pub final_distance: f64,
    pub steps: Vec<StepDiag>,
}

/// Loads every `*.rpt` file in `dir`, sorted by file name for determinism.
pub fn load_repertoire_dir(dir: &Path) -> Result<Vec<Repertoire>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "rpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no repertoire files (*.rpt) in {}",
            dir.display()
        )));
    }
    let mut reps = Vec::with_capacity(paths.len());
    for p in paths {
        reps.push(load_repertoire(&p)?);
    }
    Ok(reps)
}

fn frobenius_gap(a: &Situation, b: &Situation) -> f64 {
    let mut m = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            m += (a.a[i][j] - b.a[i][j]).powi(2);
        }
    }
    let bias: f64 = (0..2).map(|i| (a.b[i] - b.b[i]).powi(2)).sum();
    m.sqrt() + bias.sqrt() + (a.gamma - b.gamma).abs()
}

fn rotate_into_body(heading: f64, v: &TaskPoint) -> TaskPoint {
    let (s, c) = heading.sin_cos();
    TaskPoint::xy(
        c * v.coords[0] + s * v.coords[1],
        -s * v.coords[0] + c * v.coords[1],
    )
}

/// Runs one episode against pre-loaded repertoires (Algorithm: replan, pick
/// the MAP policy, execute with noise, record the observation).
/// Deterministic given `cfg.seed`.
pub fn run_episode(cfg: &EpisodeConfig, repertoires: &[Repertoire]) -> Result<EpisodeResult> {
    if cfg.max_steps == 0 {
        return Err(CliError::Config("max_steps must be >= 1".into()));
    }

    let eligible: Vec<&Repertoire> = repertoires
        .iter()
        .filter(|r| !(cfg.exclude_matching && r.situation.label == cfg.true_situation.label))
        .collect();
    if eligible.is_empty() {
        return Err(CliError::Config(
            "no eligible repertoires (all excluded?)".into(),
        ));
    }

    // Two independent RNG streams from one seed: the world noise stream is
    // consumed identically by every mode (one draw per step), so paired
    // replicates face the same world; algorithm randomness (the SP draw)
    // lives on its own stream.
    let mut noise_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(0);
    let mut algo_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    algo_rng.set_stream(1);

    let selected: Vec<&Repertoire> = match cfg.mode {
        Mode::Aprol | Mode::AprolNl => eligible,
        Mode::CpL => {
            let closest = eligible
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| {
                    let da = frobenius_gap(&a.situation, &cfg.true_situation);
                    let db = frobenius_gap(&b.situation, &cfg.true_situation);
                    da.partial_cmp(&db).unwrap().then(i.cmp(j))
                })
                .map(|(_, r)| *r)
                .expect("eligible is non-empty");
            vec![closest]
        }
        Mode::SpL | Mode::SpNl => {
            let pick = algo_rng.gen_range(0..eligible.len());
            vec![eligible[pick]]
        }
    };

    let map = NominalMap::for_task(cfg.task);
    let grid = GridMap::new(
        cfg.map_bounds,
        cfg.map_resolution,
        cfg.obstacles.clone(),
        cfg.goal.clone(),
    )?;

    let adapt_cfg = {
        let spacing = selected[0].tessellation.mean_spacing();
        let mut c = AdaptConfig::new(cfg.mode, map.r_max(), spacing);
        c.exclude_matching = cfg.exclude_matching;
        if let Some(r) = cfg.candidate_radius {
            c.candidate_radius = r;
        }
        c
    };

    let mut models: Vec<GpModel> = selected
        .iter()
        .map(|_| GpModel::new(2, GpHyperparams::default()))
        .collect();
    let mut stats = vec![RepertoireStats::default(); selected.len()];

    let reach = selected
        .iter()
        .map(|r| r.max_step())
        .fold(0.0f64, f64::max)
        .max(cfg.map_resolution);

    let mut state = AgentState {
        position: cfg.start.clone(),
        heading: 0.0,
    };
    let mut diags: Vec<StepDiag> = Vec::new();
    let mut steps_taken = 0usize;

    let at_step = |step: usize| move |e: aprol_core::Error| CliError::AtStep { step, source: e };

    for step_idx in 0..cfg.max_steps {
        if state.position.dist(&cfg.goal) <= cfg.goal_tolerance {
            break;
        }

        let path = plan(&grid, &state.position).map_err(at_step(step_idx))?;
        let subgoal = next_subgoal(&path, &state.position, reach);
        let desired_world = subgoal.sub(&state.position);
        let desired_body = rotate_into_body(state.heading, &desired_world);

        let origin = TaskPoint::xy(0.0, 0.0);
        let (rep_idx, entry, diag) = select_policy(
            &selected,
            &models,
            &stats,
            &origin,
            &desired_body,
            &adapt_cfg,
        )
        .map_err(at_step(step_idx))?;
        let policy = entry.policy.clone();
        let expected = entry.delta_s.clone();

        let next = step(
            &state,
            &policy,
            &cfg.true_situation,
            &map,
            &mut noise_rng,
            true,
        );
        let moved_world = next.position.sub(&state.position);
        let observed = rotate_into_body(state.heading, &moved_world);

        let obs = Observation {
            repertoire_id: rep_idx,
            policy,
            expected: expected.clone(),
            observed: observed.clone(),
            timestamp: step_idx,
        };
        record_and_update(&obs, &mut models, &mut stats, &adapt_cfg)
            .map_err(at_step(step_idx))?;

        diags.push(StepDiag {
            step: step_idx,
            repertoire: selected[rep_idx].situation.label.clone(),
            cell_id: diag.cell_id,
            candidate_count: diag.candidate_count,
            repertoire_probs: diag.repertoire_probs,
            score: diag.score,
            position: [state.position.coords[0], state.position.coords[1]],
            expected: [expected.coords[0], expected.coords[1]],
            observed: [observed.coords[0], observed.coords[1]],
        });

        state = next;
        steps_taken = step_idx + 1;
    }

    let final_distance = state.position.dist(&cfg.goal);
    Ok(EpisodeResult {
        steps_taken,
        success: final_distance <= cfg.goal_tolerance,
        final_distance,
        steps: diags,
    })
}

/// Convenience wrapper loading the repertoires from `cfg.repertoire_dir`.
pub fn run_episode_from_dir(cfg: &EpisodeConfig) -> Result<EpisodeResult> {
    let reps = load_repertoire_dir(&cfg.repertoire_dir)?;
    run_episode(cfg, &reps)
}
