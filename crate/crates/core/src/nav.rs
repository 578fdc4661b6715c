//! High-level task planner: 8-connected A* over a known obstacle grid,
//! replanned every step, providing the current sub-goal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::types::TaskPoint;
use crate::Result;

/// Axis-aligned obstacle rectangle (inclusive bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, p: &TaskPoint) -> bool {
        let (x, y) = (p.coords[0], p.coords[1]);
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Known world map: bounds, grid resolution, obstacle rectangles and the
/// final goal. Obstacles are inflated by one cell at construction so the
/// agent's footprint stays clear of them.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub bounds: [(f64, f64); 2],
    pub resolution: f64,
    pub obstacles: Vec<Rect>,
    pub goal: TaskPoint,
    nx: usize,
    ny: usize,
    blocked: Vec<bool>,
}

impl GridMap {
    pub fn new(
        bounds: [(f64, f64); 2],
        resolution: f64,
        obstacles: Vec<Rect>,
        goal: TaskPoint,
    ) -> Result<Self> {
        if resolution.is_nan() || resolution <= 0.0 {
            return Err(Error::InvalidInput("resolution must be > 0".into()));
        }
        for (axis, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "degenerate bounds on axis {axis}: [{lo}, {hi}]"
                )));
            }
        }
        goal.check_dim(2)?;
        let inside = |p: &TaskPoint| {
            p.coords[0] >= bounds[0].0
                && p.coords[0] <= bounds[0].1
                && p.coords[1] >= bounds[1].0
                && p.coords[1] <= bounds[1].1
        };
        if !inside(&goal) {
            return Err(Error::InvalidInput("goal outside map bounds".into()));
        }
        if obstacles.iter().any(|o| o.contains(&goal)) {
            return Err(Error::InvalidInput("goal inside an obstacle".into()));
        }

        let nx = (((bounds[0].1 - bounds[0].0) / resolution).ceil() as usize).max(1);
        let ny = (((bounds[1].1 - bounds[1].0) / resolution).ceil() as usize).max(1);

        let mut map = Self {
            bounds,
            resolution,
            obstacles,
            goal,
            nx,
            ny,
            blocked: vec![false; nx * ny],
        };
        let mut raw = vec![false; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let center = map.cell_center(ix, iy);
                raw[iy * nx + ix] = map.obstacles.iter().any(|o| o.contains(&center));
            }
        }
        // one-cell inflation
        let mut blocked = raw.clone();
        for iy in 0..ny {
            for ix in 0..nx {
                if raw[iy * nx + ix] {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                            if jx >= 0 && jy >= 0 && (jx as usize) < nx && (jy as usize) < ny {
                                blocked[jy as usize * nx + jx as usize] = true;
                            }
                        }
                    }
                }
            }
        }
        map.blocked = blocked;
        Ok(map)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> TaskPoint {
        TaskPoint::xy(
            self.bounds[0].0 + (ix as f64 + 0.5) * self.resolution,
            self.bounds[1].0 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_of(&self, p: &TaskPoint) -> (usize, usize) {
        let ix = ((p.coords[0] - self.bounds[0].0) / self.resolution).floor() as i64;
        let iy = ((p.coords[1] - self.bounds[1].0) / self.resolution).floor() as i64;
        (
            ix.clamp(0, self.nx as i64 - 1) as usize,
            iy.clamp(0, self.ny as i64 - 1) as usize,
        )
    }

    pub fn is_blocked(&self, ix: usize, iy: usize) -> bool {
        self.blocked[iy * self.nx + ix]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn in_bounds(&self, p: &TaskPoint) -> bool {
        p.coords[0] >= self.bounds[0].0
            && p.coords[0] <= self.bounds[0].1
            && p.coords[1] >= self.bounds[1].0
            && p.coords[1] <= self.bounds[1].1
    }
}

/// A* path: waypoints from the start cell center to the goal cell center,
/// consecutive waypoints 8-adjacent on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub waypoints: Vec<TaskPoint>,
    pub cost: f64,
}

/// Exact path cost as counts of cardinal and diagonal moves; keeps cost
/// comparisons free of float-summation order effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct MoveCost {
    cardinal: u32,
    diagonal: u32,
}

impl MoveCost {
    fn to_f64(self, h: f64) -> f64 {
        self.cardinal as f64 * h + self.diagonal as f64 * std::f64::consts::SQRT_2 * h
    }
}

#[derive(PartialEq)]
struct OpenNode {
    f: f64,
    heuristic: f64,
    idx: usize,
    g: MoveCost,
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    // BinaryHeap is a max-heap; invert so the smallest (f, h, idx) pops
    // first, giving the deterministic tie-break.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then(other.heuristic.partial_cmp(&self.heuristic).unwrap())
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64, bool); 8] = [
    (1, 0, false),
    (-1, 0, false),
    (0, 1, false),
    (0, -1, false),
    (1, 1, true),
    (1, -1, true),
    (-1, 1, true),
    (-1, -1, true),
];

/// Optimal 8-connected A* path from `start` to the map goal. Euclidean
/// heuristic (admissible under cardinal cost `h` and diagonal cost
/// `sqrt(2)*h`); ties break by `(f, heuristic, cell index)`.
///
/// The start cell is treated as traversable even if obstacle inflation
/// covers it; a start inside a raw obstacle is rejected.
pub fn plan(map: &GridMap, start: &TaskPoint) -> Result<Path> {
    start.check_dim(2)?;
    if !map.in_bounds(start) {
        return Err(Error::InvalidInput("start outside map bounds".into()));
    }
    if map.obstacles.iter().any(|o| o.contains(start)) {
        return Err(Error::InvalidInput("start inside an obstacle".into()));
    }

    let (nx, ny) = (map.nx, map.ny);
    let start_cell = map.cell_of(start);
    let goal_cell = map.cell_of(&map.goal);
    let start_idx = start_cell.1 * nx + start_cell.0;
    let goal_idx = goal_cell.1 * nx + goal_cell.0;

    let passable = |idx: usize| idx == start_idx || !map.blocked[idx];
    if map.blocked[goal_idx] {
        return Err(Error::NoPath);
    }

    let h = map.resolution;
    let goal_center = map.cell_center(goal_cell.0, goal_cell.1);
    let heuristic = |idx: usize| {
        let (ix, iy) = (idx % nx, idx / nx);
        map.cell_center(ix, iy).dist(&goal_center)
    };

    let mut best_g: Vec<Option<MoveCost>> = vec![None; nx * ny];
    let mut parent: Vec<usize> = vec![usize::MAX; nx * ny];
    let mut open = BinaryHeap::new();
    best_g[start_idx] = Some(MoveCost::default());
    open.push(OpenNode {
        f: heuristic(start_idx),
        heuristic: heuristic(start_idx),
        idx: start_idx,
        g: MoveCost::default(),
    });

    let mut found = false;
    while let Some(node) = open.pop() {
        if best_g[node.idx] != Some(node.g) {
            continue; // stale entry
        }
        if node.idx == goal_idx {
            found = true;
            break;
        }
        let (ix, iy) = ((node.idx % nx) as i64, (node.idx / nx) as i64);
        for (dx, dy, diagonal) in NEIGHBORS {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                continue;
            }
            let jidx = jy as usize * nx + jx as usize;
            if !passable(jidx) {
                continue;
            }
            let g = MoveCost {
                cardinal: node.g.cardinal + u32::from(!diagonal),
                diagonal: node.g.diagonal + u32::from(diagonal),
            };
            let better = match best_g[jidx] {
                None => true,
                Some(old) => g.to_f64(h) < old.to_f64(h),
            };
            if better {
                best_g[jidx] = Some(g);
                parent[jidx] = node.idx;
                let hek = heuristic(jidx);
                open.push(OpenNode {
                    f: g.to_f64(h) + hek,
                    heuristic: hek,
                    idx: jidx,
                    g,
                });
            }
        }
    }

    if !found {
        return Err(Error::NoPath);
    }

    let mut cells = vec![goal_idx];
    let mut at = goal_idx;
    while at != start_idx {
        at = parent[at];
        cells.push(at);
    }
    cells.reverse();
    let waypoints = cells
        .iter()
        .map(|idx| map.cell_center(idx % nx, idx / nx))
        .collect();
    Ok(Path {
        waypoints,
        cost: best_g[goal_idx].unwrap().to_f64(h),
    })
}

/// The farthest waypoint within `reach` of `current`; the first waypoint
/// when none qualifies.
pub fn next_subgoal(path: &Path, current: &TaskPoint, reach: f64) -> TaskPoint {
    debug_assert!(!path.waypoints.is_empty());
    debug_assert!(reach > 0.0);
    path.waypoints
        .iter()
        .rev()
        .find(|w| w.dist(current) <= reach)
        .unwrap_or(&path.waypoints[0])
        .clone()
}
