//! Ground-truth situation-conditioned dynamics.
//!
//! The agent's task-space transition is
//! `s_{t+1} = s_t + F(s_t, pi_theta, c) + w`: a nominal displacement field
//! distorted by the current situation's linear map `A`, bias `b` and heading
//! drift `gamma`, rotated into the world frame, plus Gaussian noise `w`. Two
//! instantiations are provided: a mobile agent steered by
//! direction/magnitude, and a planar pusher whose policy is a chord across
//! an approach circle in the object frame.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::types::{PolicyParams, TaskPoint};
use crate::Result;

/// Default per-step displacement cap, meters.
pub const DEFAULT_R_MAX: f64 = 0.15;
/// Default pusher approach-circle radius, meters.
pub const DEFAULT_R_CIRCLE: f64 = 0.2;
/// Default deployment noise std, meters.
pub const DEFAULT_SIGMA_W: f64 = 0.01;

/// A latent perturbation of the dynamics: linear distortion `a`, bias `b`
/// (meters), per-step heading drift `gamma` (radians) and noise std
/// `sigma_w`. `det(a)` may be zero or negative; damage can collapse or
/// reflect a direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    pub label: String,
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub gamma: f64,
    pub sigma_w: f64,
}

impl Situation {
    pub fn new(label: &str, a: [[f64; 2]; 2], b: [f64; 2], gamma: f64, sigma_w: f64) -> Self {
        Self {
            label: label.to_string(),
            a,
            b,
            gamma,
            sigma_w,
        }
    }

    /// Undisturbed dynamics with the default deployment noise.
    pub fn identity() -> Self {
        Self::new(
            "identity",
            [[1.0, 0.0], [0.0, 1.0]],
            [0.0, 0.0],
            0.0,
            DEFAULT_SIGMA_W,
        )
    }

    /// Same situation with a different noise level.
    pub fn with_noise(mut self, sigma_w: f64) -> Self {
        self.sigma_w = sigma_w;
        self
    }

    fn apply(&self, delta: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * delta[0] + self.a[0][1] * delta[1] + self.b[0],
            self.a[1][0] * delta[0] + self.a[1][1] * delta[1] + self.b[1],
        ]
    }
}

/// Agent pose: 2-D task-space position plus heading (mobile robot body yaw,
/// or the pushed object's orientation), wrapped to (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub position: TaskPoint,
    pub heading: f64,
}

impl AgentState {
    pub fn origin() -> Self {
        Self {
            position: TaskPoint::xy(0.0, 0.0),
            heading: 0.0,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Which built-in task the toolkit is driving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Mobile,
    Pusher,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mobile" => Ok(Task::Mobile),
            "pusher" => Ok(Task::Pusher),
            other => Err(Error::InvalidInput(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Mobile => write!(f, "mobile"),
            Task::Pusher => write!(f, "pusher"),
        }
    }
}

/// Nominal (situation-free) displacement field `f0`, mapping a normalized
/// 2-parameter policy to a body-frame displacement of magnitude <= `r_max`.
#[derive(Debug, Clone, PartialEq)]
pub enum NominalMap {
    /// `theta = (direction, magnitude)`: angle `2*pi*theta_1`, length
    /// `r_max*theta_2`.
    Mobile { r_max: f64 },
    /// `theta = (entry, exit)` angles on the approach circle; the push moves
    /// the object along half the chord and turns it by `0.25*sin(a2 - a1)`.
    Pusher { r_max: f64, r_circle: f64 },
}

impl NominalMap {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Mobile => NominalMap::Mobile {
                r_max: DEFAULT_R_MAX,
            },
            Task::Pusher => NominalMap::Pusher {
                r_max: DEFAULT_R_MAX,
                r_circle: DEFAULT_R_CIRCLE,
            },
        }
    }

    pub fn r_max(&self) -> f64 {
        match self {
            NominalMap::Mobile { r_max } | NominalMap::Pusher { r_max, .. } => *r_max,
        }
    }

    pub fn n_theta(&self) -> usize {
        2
    }
}

/// Body-frame displacement and heading change produced by a policy under the
/// nominal map.
pub fn nominal_displacement(map: &NominalMap, theta: &PolicyParams) -> ([f64; 2], f64) {
    match map {
        NominalMap::Mobile { r_max } => {
            let alpha = TAU * theta.theta[0];
            let m = r_max * theta.theta[1];
            ([m * alpha.cos(), m * alpha.sin()], 0.0)
        }
        NominalMap::Pusher { r_max, r_circle } => {
            let a1 = TAU * theta.theta[0];
            let a2 = TAU * theta.theta[1];
            let v = [
                r_circle * (a2.cos() - a1.cos()),
                r_circle * (a2.sin() - a1.sin()),
            ];
            let mut delta = [0.5 * v[0], 0.5 * v[1]];
            let norm = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
            if norm > *r_max {
                let scale = r_max / norm;
                delta[0] *= scale;
                delta[1] *= scale;
            }
            (delta, 0.25 * (a2 - a1).sin())
        }
    }
}

/// One replanning-step transition. The situation distorts the body-frame
/// displacement, the heading rotates it into the world frame, and `w` is
/// isotropic Gaussian noise (skipped when `noisy` is false).
pub fn step<R: Rng>(
    state: &AgentState,
    theta: &PolicyParams,
    c: &Situation,
    map: &NominalMap,
    rng: &mut R,
    noisy: bool,
) -> AgentState {
    let (delta0, dtheta) = nominal_displacement(map, theta);
    let local = c.apply(delta0);
    let (sin_h, cos_h) = state.heading.sin_cos();
    let mut dx = cos_h * local[0] - sin_h * local[1];
    let mut dy = sin_h * local[0] + cos_h * local[1];
    if noisy && c.sigma_w > 0.0 {
        let normal = Normal::new(0.0, c.sigma_w).expect("sigma_w >= 0");
        dx += normal.sample(rng);
        dy += normal.sample(rng);
    }
    AgentState {
        position: TaskPoint::xy(state.position.coords[0] + dx, state.position.coords[1] + dy),
        heading: wrap_angle(state.heading + dtheta + c.gamma),
    }
}

fn rot(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

fn scale(m: [[f64; 2]; 2], g: f64) -> [[f64; 2]; 2] {
    [[g * m[0][0], g * m[0][1]], [g * m[1][0], g * m[1][1]]]
}

/// Desk-scale situation roster for a task.
///
/// Mobile: three friction coefficients (labels keep the physical values 0.6,
/// 1.0, 5.0; displacement gains 0.6, 1.0, 1.4) crossed with five damage
/// matrices. The undamaged unit-gain combination is labeled `identity`.
///
/// Pusher: seven object shapes realized as distinct `(A, gamma)` pairs; the
/// round object that pushes exactly like the nominal point-object is the
/// `identity` situation.
pub fn situation_library(task: Task) -> Vec<Situation> {
    let sw = DEFAULT_SIGMA_W;
    match task {
        Task::Mobile => {
            let frictions = [("0.6", 0.6), ("1.0", 1.0), ("5.0", 1.4)];
            let damages: [(&str, [[f64; 2]; 2]); 5] = [
                ("ok", [[1.0, 0.0], [0.0, 1.0]]),
                ("weak_y", [[1.0, 0.0], [0.0, 0.4]]),
                ("weak_x", [[0.4, 0.0], [0.0, 1.0]]),
                ("rot20", rot(20.0_f64.to_radians())),
                ("mirror_y", [[1.0, 0.0], [0.0, -1.0]]),
            ];
            let mut out = Vec::with_capacity(15);
            for (flabel, gain) in frictions {
                for (dlabel, a) in damages {
                    let label = if gain == 1.0 && dlabel == "ok" {
                        "identity".to_string()
                    } else {
                        format!("fric{flabel}_{dlabel}")
                    };
                    out.push(Situation::new(&label, scale(a, gain), [0.0, 0.0], 0.0, sw));
                }
            }
            out
        }
        Task::Pusher => {
            let shapes: [(&str, [[f64; 2]; 2], f64); 7] = [
                ("identity", [[1.0, 0.0], [0.0, 1.0]], 0.0),
                ("cube_small", scale([[1.0, 0.0], [0.0, 1.0]], 0.92), 0.04),
                ("cube_large", scale([[1.0, 0.0], [0.0, 1.0]], 0.78), 0.03),
                ("cuboid", [[0.9, 0.0], [0.0, 0.62]], 0.10),
                ("triangle", scale(rot(0.18), 0.85), 0.18),
                ("bar", [[1.05, 0.0], [0.0, 0.42]], 0.26),
                ("lshape", [[0.82, 0.12], [-0.18, 0.66]], -0.14),
            ];
            shapes
                .iter()
                .map(|(label, a, gamma)| Situation::new(label, *a, [0.0, 0.0], *gamma, sw))
                .collect()
        }
    }
}
