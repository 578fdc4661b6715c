//! Episode- and benchmark-level integration tests against small generated
//! libraries.

use std::path::Path;

use tempfile::TempDir;

use aprol_cli::bench::{run_benchmark, BenchConfig};
use aprol_cli::episode::{load_repertoire_dir, run_episode, EpisodeConfig};
use aprol_cli::CliError;
use aprol_core::adapt::Mode;
use aprol_core::archive::{build_cvt, save_repertoire};
use aprol_core::nav::Rect;
use aprol_core::qd::{generate_repertoire, MapElitesConfig, PerformanceFn};
use aprol_core::types::TaskPoint;
use aprol_core::worldsim::{situation_library, NominalMap, Situation, Task};

/// Generates repertoires for the given situations into `dir`.
fn gen_library(dir: &Path, situations: &[Situation], cells: usize, evals: usize) {
    let map = NominalMap::for_task(Task::Mobile);
    let r = map.r_max();
    let tess = build_cvt(cells, &[(-r, r), (-r, r)], 10 * cells, 7).unwrap();
    for (i, situation) in situations.iter().enumerate() {
        let cfg = MapElitesConfig::new(400.min(evals / 2), evals, 0.05, 1000 + i as u64).unwrap();
        let rep = generate_repertoire(&map, situation, &tess, &cfg, &PerformanceFn::Constant)
            .unwrap();
        save_repertoire(&rep, &dir.join(format!("{}.rpt", situation.label))).unwrap();
    }
}

fn identity_library(dir: &Path) {
    gen_library(dir, &[Situation::identity()], 200, 8000);
}

#[test]
fn straight_run_matches_geometric_step_oracle() {
    // Identity world, close prior, no noise: the step count must match
    // ceil(distance / max archive step) within one step.
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let goal = TaskPoint::xy(1.0, 0.0);
    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        Situation::identity().with_noise(0.0),
        tmp.path(),
        Mode::CpL,
        goal,
    );
    // grid aligned so the start sits on a cell center and two cells fit
    // inside one repertoire step
    cfg.map_resolution = 0.07;
    cfg.map_bounds = [(-0.735, 1.505), (-0.735, 0.735)];

    let result = run_episode(&cfg, &reps).unwrap();
    assert!(result.success, "did not reach the goal: {result:?}");

    let max_step = reps[0].max_step();
    let oracle = (1.0f64 / max_step).ceil() as i64;
    let diff = (result.steps_taken as i64 - oracle).abs();
    assert!(
        diff <= 1,
        "steps {} vs geometric oracle {oracle}",
        result.steps_taken
    );
}

#[test]
fn one_step_budget_fails_gracefully() {
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        Situation::identity(),
        tmp.path(),
        Mode::Aprol,
        TaskPoint::xy(1.5, 0.0),
    );
    cfg.max_steps = 1;
    let result = run_episode(&cfg, &reps).unwrap();
    assert!(!result.success);
    assert_eq!(result.steps_taken, 1);
}

#[test]
fn same_seed_reproduces_the_episode() {
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        situation_library(Task::Mobile)
            .into_iter()
            .find(|s| s.label == "fric0.6_weak_y")
            .unwrap(),
        tmp.path(),
        Mode::SpL,
        TaskPoint::xy(0.8, 0.4),
    );
    cfg.seed = 99;
    let a = run_episode(&cfg, &reps).unwrap();
    let b = run_episode(&cfg, &reps).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn noise_stream_is_mode_independent() {
    // A zero linear map means every policy produces pure noise, so the
    // trajectory is exactly the noise stream: it must be identical across
    // modes for the same seed (paired worlds).
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let zero = Situation::new("zero", [[0.0; 2]; 2], [0.0; 2], 0.0, 0.02);
    let mut results = Vec::new();
    for mode in [Mode::CpL, Mode::SpNl, Mode::AprolNl] {
        let mut cfg = EpisodeConfig::new(
            Task::Mobile,
            zero.clone(),
            tmp.path(),
            mode,
            TaskPoint::xy(2.0, 0.0),
        );
        cfg.max_steps = 6;
        cfg.seed = 4242;
        results.push(run_episode(&cfg, &reps).unwrap());
    }
    for r in &results[1..] {
        for (a, b) in results[0].steps.iter().zip(&r.steps) {
            assert_eq!(a.position, b.position, "noise streams diverged");
        }
    }
}

#[test]
fn episode_navigates_around_obstacles() {
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        Situation::identity(),
        tmp.path(),
        Mode::CpL,
        TaskPoint::xy(1.0, 0.0),
    );
    cfg.obstacles = vec![Rect {
        min: [0.4, -0.8],
        max: [0.6, 0.35],
    }];
    cfg.seed = 5;
    let result = run_episode(&cfg, &reps).unwrap();
    assert!(result.success, "failed to route around the wall: {result:?}");
    // the detour forces it above the wall at some point
    assert!(result.steps.iter().any(|s| s.position[1] > 0.3));
}

#[test]
fn planner_errors_carry_the_step_index() {
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        Situation::identity(),
        tmp.path(),
        Mode::Aprol,
        TaskPoint::xy(0.5, 0.0),
    );
    // start outside the map: the first plan() call fails
    cfg.start = TaskPoint::xy(50.0, 0.0);
    cfg.map_bounds = [(-1.0, 1.0), (-1.0, 1.0)];
    match run_episode(&cfg, &reps) {
        Err(CliError::AtStep { step: 0, .. }) => {}
        other => panic!("expected step-0 failure, got {other:?}"),
    }
}

#[test]
fn exclude_matching_drops_the_exact_repertoire() {
    let tmp = TempDir::new().unwrap();
    let situations = vec![
        Situation::identity(),
        situation_library(Task::Mobile)
            .into_iter()
            .find(|s| s.label == "fric0.6_ok")
            .unwrap(),
    ];
    gen_library(tmp.path(), &situations, 100, 4000);
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = EpisodeConfig::new(
        Task::Mobile,
        Situation::identity(),
        tmp.path(),
        Mode::Aprol,
        TaskPoint::xy(0.6, 0.0),
    );
    cfg.exclude_matching = true;
    cfg.seed = 3;
    let result = run_episode(&cfg, &reps).unwrap();
    assert!(result
        .steps
        .iter()
        .all(|s| s.repertoire != "identity"));
}

#[test]
fn pusher_task_adapts_despite_heading_drift() {
    // Object shapes rotate while pushed (gamma != 0); the body-frame
    // selection must keep the repertoires usable.
    let tmp = TempDir::new().unwrap();
    let map = NominalMap::for_task(Task::Pusher);
    let r = map.r_max();
    let tess = build_cvt(200, &[(-r, r), (-r, r)], 2000, 2).unwrap();
    let library = situation_library(Task::Pusher);
    for (i, situation) in library.iter().enumerate() {
        let cfg = MapElitesConfig::new(400, 8000, 0.05, 500 + i as u64).unwrap();
        let rep = generate_repertoire(&map, situation, &tess, &cfg, &PerformanceFn::Constant)
            .unwrap();
        save_repertoire(&rep, &tmp.path().join(format!("{}.rpt", situation.label))).unwrap();
    }
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    for label in ["cube_small", "triangle", "bar"] {
        let truth = library.iter().find(|s| s.label == label).unwrap().clone();
        let mut cfg = EpisodeConfig::new(
            Task::Pusher,
            truth,
            tmp.path(),
            Mode::Aprol,
            TaskPoint::xy(0.8, 0.3),
        );
        cfg.exclude_matching = true;
        cfg.seed = 4;
        let result = run_episode(&cfg, &reps).unwrap();
        assert!(result.success, "{label}: {result:?}");
        assert!(result.steps_taken <= 40, "{label} took {}", result.steps_taken);
    }
}

#[test]
fn benchmark_grid_accounting_and_duplicate_modes() {
    let tmp = TempDir::new().unwrap();
    identity_library(tmp.path());
    let reps = load_repertoire_dir(tmp.path()).unwrap();

    let mut cfg = BenchConfig::new(
        Task::Mobile,
        vec![Situation::identity()],
        vec![Mode::SpNl, Mode::SpNl],
        TaskPoint::xy(0.7, 0.2),
    );
    cfg.replicates = 3;
    cfg.base_seed = 11;
    let (rows, _) = run_benchmark(&cfg, &reps).unwrap();
    // 1 situation x 2 modes x 3 replicates
    assert_eq!(rows.len(), 6);
    // the duplicated mode produces identical adjacent rows after sorting
    for pair in rows.chunks(2) {
        assert_eq!(pair[0], pair[1]);
    }

    let mut bad = cfg.clone();
    bad.replicates = 1;
    assert!(run_benchmark(&bad, &reps).is_err());
}
