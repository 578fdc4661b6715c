//! The decision core: MAP selection of the next elementary policy across
//! repertoires, closeness scoring of priors, UCB-driven repertoire
//! probabilities, and the baseline ablations.
//!
//! Per replanning step the score of a candidate policy `pi` from repertoire
//! `Pi` is `P(s_g | pi, obs, Pi) * P(pi) * P(Pi | obs)`: the GP likelihood of
//! reaching the sub-goal, a uniform positive prior over policies whose
//! expected transition lies near the desired one (zero elsewhere), and the
//! normalized UCB score of the repertoire.

use std::f64::consts::TAU;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archive::{lookup_candidates, Repertoire, RepertoireEntry};
use crate::error::Error;
use crate::gpmodel::GpModel;
use crate::types::{PolicyParams, TaskPoint};
use crate::Result;

/// Default UCB exploration constant (UCB1).
pub const DEFAULT_M_EXPLORE: f64 = std::f64::consts::SQRT_2;
/// Default floor for the likelihood covariance diagonal.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-8;

/// Algorithm variants: the full method plus the ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Full objective over all repertoires, transformation models learned.
    Aprol,
    /// Close Prior with Learning: the single repertoire nearest the true
    /// situation.
    CpL,
    /// Single (random) Prior with Learning.
    SpL,
    /// Single Prior, No Learning: models frozen at the prior.
    SpNl,
    /// All repertoires, models frozen at the prior.
    AprolNl,
}

impl Mode {
    /// Frozen modes never update their transformation models.
    pub fn learns(&self) -> bool {
        matches!(self, Mode::Aprol | Mode::CpL | Mode::SpL)
    }

    /// Single-repertoire baselines.
    pub fn single_prior(&self) -> bool {
        matches!(self, Mode::CpL | Mode::SpL | Mode::SpNl)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Aprol => "aprol",
            Mode::CpL => "cp-l",
            Mode::SpL => "sp-l",
            Mode::SpNl => "sp-nl",
            Mode::AprolNl => "aprol-nl",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aprol" => Ok(Mode::Aprol),
            "cp-l" => Ok(Mode::CpL),
            "sp-l" => Ok(Mode::SpL),
            "sp-nl" => Ok(Mode::SpNl),
            "aprol-nl" => Ok(Mode::AprolNl),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// Running closeness statistics for one repertoire, feeding its UCB score.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RepertoireStats {
    /// Sum of closeness scores over the steps this repertoire was used.
    pub psi_sum: f64,
    /// How many times a policy was taken from this repertoire.
    pub n_used: u32,
}

/// Knobs of the decision core.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    /// Closeness sharpness `k` in `exp(-k |expected - observed|^2)`.
    pub k_closeness: f64,
    /// UCB exploration constant `m`.
    pub m_explore: f64,
    /// Neighborhood radius of the positive policy prior.
    pub candidate_radius: f64,
    /// Floor for the likelihood covariance diagonal.
    pub likelihood_var_floor: f64,
    pub mode: Mode,
    /// Drop the repertoire whose situation matches the deployed one.
    pub exclude_matching: bool,
}

impl AdaptConfig {
    /// Defaults scaled to the task: closeness reaches 0.5 at a mismatch of
    /// half the maximum step; the candidate neighborhood is 1.5x the mean
    /// inter-centroid spacing of the tessellation.
    pub fn new(mode: Mode, r_max: f64, mean_spacing: f64) -> Self {
        let half_step = 0.5 * r_max;
        Self {
            k_closeness: std::f64::consts::LN_2 / (half_step * half_step),
            m_explore: DEFAULT_M_EXPLORE,
            candidate_radius: 1.5 * mean_spacing,
            likelihood_var_floor: DEFAULT_VAR_FLOOR,
            mode,
            exclude_matching: false,
        }
    }
}

/// One executed step: which repertoire and policy ran, what the repertoire
/// expected, and what the system actually did.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub repertoire_id: usize,
    pub policy: PolicyParams,
    pub expected: TaskPoint,
    pub observed: TaskPoint,
    pub timestamp: usize,
}

/// Per-step record emitted to the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub repertoire_id: usize,
    pub cell_id: usize,
    pub candidate_count: usize,
    pub repertoire_probs: Vec<f64>,
    pub score: f64,
}

/// Closeness `psi = exp(-k |expected - observed|^2)`, in (0, 1].
pub fn closeness(expected: &TaskPoint, observed: &TaskPoint, k: f64) -> f64 {
    debug_assert!(k > 0.0);
    (-k * expected.sq_dist(observed)).exp()
}

/// UCB1 score of a repertoire: untried repertoires get an infinite sentinel
/// so they are all selected before any retry; otherwise
/// `psi_sum/N + m*sqrt(ln(n_total)/N)`.
pub fn ucb_score(stats: &RepertoireStats, n_total: u32, m: f64) -> f64 {
    if stats.n_used == 0 {
        return f64::INFINITY;
    }
    debug_assert!(n_total >= stats.n_used);
    let n = stats.n_used as f64;
    stats.psi_sum / n + m * ((n_total as f64).ln() / n).sqrt()
}

/// Normalizes UCB scores into a probability vector. Infinite sentinels take
/// uniform mass (everything else zero); otherwise scores are divided by
/// their sum.
pub fn repertoire_probs(all_stats: &[RepertoireStats], n_total: u32, m: f64) -> Vec<f64> {
    debug_assert!(!all_stats.is_empty());
    let scores: Vec<f64> = all_stats
        .iter()
        .map(|s| ucb_score(s, n_total, m))
        .collect();
    let sentinels = scores.iter().filter(|s| s.is_infinite()).count();
    if sentinels > 0 {
        let mass = 1.0 / sentinels as f64;
        return scores
            .iter()
            .map(|s| if s.is_infinite() { mass } else { 0.0 })
            .collect();
    }
    let total: f64 = scores.iter().sum();
    scores.iter().map(|s| s / total).collect()
}

/// Diagonal-covariance Gaussian density of `s_g` under `N(mu, diag(var))`.
/// Variances are floored before use; far tails underflow to zero.
pub fn likelihood(s_g: &TaskPoint, mu: &TaskPoint, var: &[f64], floor: f64) -> f64 {
    let n = s_g.dim();
    debug_assert_eq!(mu.dim(), n);
    debug_assert_eq!(var.len(), n);
    let mut log_norm = 0.0;
    let mut quad = 0.0;
    for ((sg, m), v) in s_g.coords.iter().zip(&mu.coords).zip(var) {
        let v = v.max(floor);
        log_norm += v.ln();
        let diff = sg - m;
        quad += diff * diff / v;
    }
    let log_density = -0.5 * (n as f64 * TAU.ln() + log_norm + quad);
    log_density.exp()
}

/// MAP estimation of the next elementary policy across repertoires.
///
/// The desired transition is `s_g - s_t`; each repertoire contributes the
/// candidates whose stored transition falls inside the neighborhood prior,
/// scored by GP likelihood times the repertoire probability. Ties break
/// toward the lowest `(repertoire_id, cell_id)`. The caller is responsible
/// for passing the repertoire subset and model state its mode calls for
/// (single prior for CP-L/SP-L/SP-NL, prior-frozen models for the NL modes).
pub fn select_policy<'a>(
    repertoires: &[&'a Repertoire],
    models: &[GpModel],
    stats: &[RepertoireStats],
    s_t: &TaskPoint,
    s_g: &TaskPoint,
    cfg: &AdaptConfig,
) -> Result<(usize, &'a RepertoireEntry, SelectionDiagnostics)> {
    if repertoires.is_empty() {
        return Err(Error::Selection);
    }
    debug_assert_eq!(repertoires.len(), models.len());
    debug_assert_eq!(repertoires.len(), stats.len());

    let desired = s_g.sub(s_t);
    let n_total: u32 = stats.iter().map(|s| s.n_used).sum();
    let probs = repertoire_probs(stats, n_total, cfg.m_explore);

    let mut best: Option<(f64, usize, &RepertoireEntry)> = None;
    let mut candidate_count = 0usize;
    for (rep_id, rep) in repertoires.iter().enumerate() {
        if probs[rep_id] == 0.0 {
            continue;
        }
        let candidates = match lookup_candidates(rep, &desired, cfg.candidate_radius) {
            Ok(c) => c,
            Err(Error::EmptyRepertoire) => continue,
            Err(e) => return Err(e),
        };
        candidate_count += candidates.len();
        for entry in candidates {
            let (mu, var) = models[rep_id].predict(&entry.delta_s)?;
            let l = likelihood(&desired, &mu, &var, cfg.likelihood_var_floor);
            let score = l * probs[rep_id];
            // strict > keeps the first (lowest repertoire_id, cell_id) on ties
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, rep_id, entry));
            }
        }
    }

    let (score, rep_id, entry) = best.ok_or(Error::Selection)?;
    Ok((
        rep_id,
        entry,
        SelectionDiagnostics {
            repertoire_id: rep_id,
            cell_id: entry.cell_id,
            candidate_count,
            repertoire_probs: probs,
            score,
        },
    ))
}

/// Applies an executed step: the selected repertoire's stats always absorb
/// the closeness score; its transformation model is refit with the new
/// observation unless the mode is frozen.
pub fn record_and_update(
    obs: &Observation,
    models: &mut [GpModel],
    stats: &mut [RepertoireStats],
    cfg: &AdaptConfig,
) -> Result<()> {
    let i = obs.repertoire_id;
    if i >= models.len() {
        return Err(Error::InvalidInput(format!(
            "repertoire id {i} out of range ({} repertoires)",
            models.len()
        )));
    }
    let psi = closeness(&obs.expected, &obs.observed, cfg.k_closeness);
    stats[i].psi_sum += psi;
    stats[i].n_used += 1;
    if cfg.mode.learns() {
        models[i] = models[i].augmented(obs.expected.clone(), obs.observed.clone())?;
    }
    Ok(())
}
