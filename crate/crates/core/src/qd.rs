//! CVT MAP-Elites repertoire generation: bootstrap with random policies,
//! then iterate pick-mutate-evaluate-insert until the evaluation budget is
//! spent. One repertoire per situation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::archive::{
    archive_insert, cell_id_of, GenerationMeta, Repertoire, RepertoireEntry, Tessellation,
};
use crate::error::Error;
use crate::types::{PolicyParams, TaskPoint};
use crate::worldsim::{step, AgentState, NominalMap, Situation};
use crate::Result;

/// Default mutation std in normalized policy space.
pub const DEFAULT_SIGMA_MUT: f64 = 0.05;
/// Default desk-scale evaluation budget.
pub const DEFAULT_N_EVALS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MapElitesConfig {
    /// Random bootstrap evaluations before any mutation.
    pub n_init: usize,
    /// Total evaluation budget, bootstrap included.
    pub n_evals: usize,
    /// Std of the per-component Gaussian mutation.
    pub sigma_mut: f64,
    pub seed: u64,
}

impl MapElitesConfig {
    pub fn new(n_init: usize, n_evals: usize, sigma_mut: f64, seed: u64) -> Result<Self> {
        if n_init == 0 || n_init >= n_evals {
            return Err(Error::InvalidInput(format!(
                "need 0 < n_init ({n_init}) < n_evals ({n_evals})"
            )));
        }
        if !(sigma_mut > 0.0 && sigma_mut <= 0.5) {
            return Err(Error::InvalidInput(format!(
                "sigma_mut ({sigma_mut}) must be in (0, 0.5]"
            )));
        }
        Ok(Self {
            n_init,
            n_evals,
            sigma_mut,
            seed,
        })
    }

    /// Defaults: bootstrap max(500, n_cells/10), sigma_mut 0.05.
    pub fn for_cells(n_cells: usize, n_evals: usize, seed: u64) -> Result<Self> {
        let n_init = 500.max(n_cells / 10).min(n_evals / 2);
        Self::new(n_init, n_evals, DEFAULT_SIGMA_MUT, seed)
    }
}

/// Performance score assigned to an evaluated policy.
#[derive(Debug, Clone, PartialEq)]
pub enum PerformanceFn {
    /// Every policy scores 1; elites are first-come (used when transitions
    /// alone matter).
    Constant,
    /// Penalizes large control inputs: `1 - weight * mean(theta_i^2)`.
    EffortPenalty { weight: f64 },
}

impl PerformanceFn {
    pub fn eval(&self, theta: &PolicyParams, _delta_s: &TaskPoint) -> f64 {
        match self {
            PerformanceFn::Constant => 1.0,
            PerformanceFn::EffortPenalty { weight } => {
                let effort =
                    theta.theta.iter().map(|t| t * t).sum::<f64>() / theta.dim() as f64;
                1.0 - weight * effort
            }
        }
    }
}

/// Per-component Gaussian perturbation clipped back to [0, 1].
pub fn mutate<R: Rng>(theta: &PolicyParams, sigma_mut: f64, rng: &mut R) -> PolicyParams {
    let normal = Normal::new(0.0, sigma_mut).expect("sigma_mut >= 0");
    PolicyParams {
        theta: theta
            .theta
            .iter()
            .map(|t| (t + normal.sample(rng)).clamp(0.0, 1.0))
            .collect(),
    }
}

/// Evaluates a policy in the noise-free simulator from the canonical start
/// state, returning the expected transition and its performance score.
pub fn evaluate(
    map: &NominalMap,
    c: &Situation,
    theta: &PolicyParams,
    perf: &PerformanceFn,
) -> Result<(TaskPoint, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(0); // unused in noise-free mode
    let next = step(&AgentState::origin(), theta, c, map, &mut rng, false);
    let delta_s = next.position;
    if delta_s.coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "non-finite transition for policy {:?}",
            theta.theta
        )));
    }
    let r = perf.eval(theta, &delta_s);
    if !r.is_finite() {
        return Err(Error::Evaluation(format!(
            "non-finite performance for policy {:?}",
            theta.theta
        )));
    }
    Ok((delta_s, r))
}

/// Runs MAP-Elites for one situation: `n_init` uniform-random policies, then
/// pick-mutate-evaluate-insert until exactly `n_evals` evaluations have been
/// spent. Deterministic given the config seed.
pub fn generate_repertoire(
    map: &NominalMap,
    c: &Situation,
    tess: &Tessellation,
    cfg: &MapElitesConfig,
    perf: &PerformanceFn,
) -> Result<Repertoire> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let n_theta = map.n_theta();
    let mut rep = Repertoire::new(
        tess.clone(),
        c.clone(),
        GenerationMeta {
            n_evals: cfg.n_evals,
            seed: cfg.seed,
        },
    );
    // Cell ids with an elite, in insertion order; lets us pick a uniform
    // random elite without walking the map.
    let mut filled: Vec<usize> = Vec::new();

    let try_insert = |rep: &mut Repertoire,
                          filled: &mut Vec<usize>,
                          theta: PolicyParams|
     -> Result<()> {
        let (delta_s, r) = match evaluate(map, c, &theta, perf) {
            Ok(v) => v,
            Err(_) => return Ok(()), // candidate discarded, budget consumed
        };
        let cell_id = cell_id_of(tess, &delta_s)?;
        let outcome = archive_insert(
            rep,
            RepertoireEntry {
                policy: theta,
                delta_s,
                performance: r,
                cell_id,
            },
        );
        if outcome == crate::archive::InsertOutcome::Added {
            filled.push(cell_id);
        }
        Ok(())
    };

    for _ in 0..cfg.n_init {
        let theta = PolicyParams {
            theta: (0..n_theta).map(|_| rng.gen::<f64>()).collect(),
        };
        try_insert(&mut rep, &mut filled, theta)?;
    }
    if rep.is_empty() {
        return Err(Error::Generation(format!(
            "archive empty after {} bootstrap evaluations",
            cfg.n_init
        )));
    }

    for _ in cfg.n_init..cfg.n_evals {
        let pick = filled[rng.gen_range(0..filled.len())];
        let parent = rep.entries[&pick].policy.clone();
        let child = mutate(&parent, cfg.sigma_mut, &mut rng);
        try_insert(&mut rep, &mut filled, child)?;
    }

    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{build_cvt, repertoire_to_string};
    use crate::worldsim::Task;
    use approx::assert_abs_diff_eq;

    fn mobile_tess(n_cells: usize, seed: u64) -> Tessellation {
        let r = crate::worldsim::DEFAULT_R_MAX;
        build_cvt(n_cells, &[(-r, r), (-r, r)], 10 * n_cells.max(100), seed).unwrap()
    }

    #[test]
    fn mutate_degenerate_noise_is_identity() {
        let theta = PolicyParams::new(vec![0.2, 0.9]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let out = mutate(&theta, 0.0, &mut rng);
        assert_eq!(out, theta);
    }

    #[test]
    fn mutate_clips_to_unit_interval() {
        let theta = PolicyParams::new(vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..200 {
            let out = mutate(&theta, 0.3, &mut rng);
            assert!(out.theta.iter().all(|t| (0.0..=1.0).contains(t)));
        }
    }

    #[test]
    fn mutate_sample_std_matches_sigma() {
        // Monte Carlo check of the sampler: at theta=0.5 and sigma=0.05,
        // clipping is a >10-sigma event, so the sample std must track sigma.
        let theta = PolicyParams::new(vec![0.5]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| mutate(&theta, 0.05, &mut rng).theta[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((0.045..=0.055).contains(&std), "sample std {std}");
    }

    #[test]
    fn evaluate_identity_north() {
        // theta = (0.25, 1.0): straight north at full magnitude
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let theta = PolicyParams::new(vec![0.25, 1.0]).unwrap();
        let (delta, r) = evaluate(&map, &c, &theta, &PerformanceFn::Constant).unwrap();
        assert_abs_diff_eq!(delta.coords[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(delta.coords[1], 0.15, epsilon = 1e-15);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn evaluate_zero_magnitude_policy() {
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let theta = PolicyParams::new(vec![0.62, 0.0]).unwrap();
        let (delta, _) = evaluate(&map, &c, &theta, &PerformanceFn::Constant).unwrap();
        assert_eq!(delta, TaskPoint::xy(0.0, 0.0));
    }

    #[test]
    fn constant_performance_is_one_everywhere() {
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let theta = PolicyParams::new(vec![rng.gen(), rng.gen()]).unwrap();
            let (_, r) = evaluate(&map, &c, &theta, &PerformanceFn::Constant).unwrap();
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn archive_size_bounded_by_budget() {
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let tess = mobile_tess(1000, 8);
        let cfg = MapElitesConfig::new(49, 50, 0.05, 21).unwrap();
        let rep = generate_repertoire(&map, &c, &tess, &cfg, &PerformanceFn::Constant).unwrap();
        assert!(rep.len() <= 50, "archive size {}", rep.len());
    }

    #[test]
    fn coverage_of_reachable_disc() {
        // Identity situation: the image of the nominal mobile map is exactly
        // the disc of radius r_max, so every cell whose centroid lies inside
        // the disc is reachable.
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let tess = mobile_tess(100, 17);
        let cfg = MapElitesConfig::for_cells(100, 20_000, 33).unwrap();
        let rep = generate_repertoire(&map, &c, &tess, &cfg, &PerformanceFn::Constant).unwrap();
        let r_max = map.r_max();
        let reachable: Vec<usize> = (0..tess.n_cells())
            .filter(|i| tess.centroids[*i].norm() <= r_max)
            .collect();
        let covered = reachable
            .iter()
            .filter(|i| rep.entries.contains_key(i))
            .count();
        let ratio = covered as f64 / reachable.len() as f64;
        assert!(ratio >= 0.9, "coverage {ratio} ({covered}/{})", reachable.len());
    }

    #[test]
    fn generation_is_deterministic_to_the_byte() {
        let map = NominalMap::for_task(Task::Mobile);
        let c = Situation::identity();
        let tess = mobile_tess(50, 2);
        let cfg = MapElitesConfig::new(100, 1500, 0.05, 9).unwrap();
        let a = generate_repertoire(&map, &c, &tess, &cfg, &PerformanceFn::Constant).unwrap();
        let b = generate_repertoire(&map, &c, &tess, &cfg, &PerformanceFn::Constant).unwrap();
        assert_eq!(repertoire_to_string(&a), repertoire_to_string(&b));
    }

    #[test]
    fn stored_elites_replay_exactly() {
        let map = NominalMap::for_task(Task::Mobile);
        let c = situation_with_distortion();
        let tess = mobile_tess(60, 4);
        let cfg = MapElitesConfig::new(200, 3000, 0.05, 5).unwrap();
        let perf = PerformanceFn::EffortPenalty { weight: 0.1 };
        let rep = generate_repertoire(&map, &c, &tess, &cfg, &perf).unwrap();
        assert!(!rep.is_empty());
        for e in rep.entries.values() {
            let (delta, r) = evaluate(&map, &c, &e.policy, &perf).unwrap();
            assert_eq!(delta, e.delta_s);
            assert_eq!(r, e.performance);
        }
    }

    fn situation_with_distortion() -> Situation {
        Situation::new("tilt", [[0.8, 0.1], [-0.1, 0.9]], [0.01, 0.0], 0.0, 0.0)
    }

    #[test]
    fn config_validation() {
        assert!(MapElitesConfig::new(0, 10, 0.05, 0).is_err());
        assert!(MapElitesConfig::new(10, 10, 0.05, 0).is_err());
        assert!(MapElitesConfig::new(5, 10, 0.6, 0).is_err());
        assert!(MapElitesConfig::new(5, 10, 0.05, 0).is_ok());
    }
}
