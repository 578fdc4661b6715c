//! Repertoire archives: CVT tessellation of the task-space, elite storage
//! keyed by cell id, and the versioned on-disk format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::types::{PolicyParams, TaskPoint};
use crate::worldsim::Situation;
use crate::Result;

/// Current archive file format version.
pub const FORMAT_VERSION: u32 = 1;

const KMEANS_MAX_ITERS: usize = 200;
const KMEANS_REL_TOL: f64 = 1e-6;

/// Centroidal Voronoi tessellation of a bounded task-space region.
///
/// Rebuilding with the same `(seed, bounds, n_cells, n_samples)` yields
/// bit-identical centroids, which is what makes the on-disk format
/// reconstructible.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    pub centroids: Vec<TaskPoint>,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    pub n_samples: usize,
}

impl Tessellation {
    pub fn n_cells(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Diameter of the bounding box, used as the cap for radius doubling.
    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Mean nearest-neighbor distance between centroids. Single-cell
    /// tessellations fall back to the bounding-box diameter.
    pub fn mean_spacing(&self) -> f64 {
        if self.centroids.len() < 2 {
            return self.diameter();
        }
        let mut total = 0.0;
        for (i, c) in self.centroids.iter().enumerate() {
            let nearest = self
                .centroids
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| c.sq_dist(o))
                .fold(f64::INFINITY, f64::min);
            total += nearest.sqrt();
        }
        total / self.centroids.len() as f64
    }
}

/// Builds a CVT by running Lloyd's k-means (k-means++ seeding) on
/// `n_samples` uniform samples over `bounds`.
///
/// Converges when the relative inertia change drops below 1e-6 or after 200
/// iterations. Deterministic given `seed`.
pub fn build_cvt(
    n_cells: usize,
    bounds: &[(f64, f64)],
    n_samples: usize,
    seed: u64,
) -> Result<Tessellation> {
    if n_cells == 0 {
        return Err(Error::InvalidInput("n_cells must be >= 1".into()));
    }
    if bounds.is_empty() {
        return Err(Error::InvalidInput("bounds must have n_s >= 1".into()));
    }
    for (axis, (lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "degenerate bounds on axis {axis}: [{lo}, {hi}]"
            )));
        }
    }
    if n_samples < 10 * n_cells {
        return Err(Error::InvalidInput(format!(
            "n_samples ({n_samples}) must be >= 10 * n_cells ({n_cells})"
        )));
    }

    let dim = bounds.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples * dim);
    for _ in 0..n_samples {
        for (lo, hi) in bounds {
            samples.push(rng.gen_range(*lo..*hi));
        }
    }

    let centroids = lloyd_kmeans(&samples, n_samples, dim, n_cells, &mut rng);
    let centroids = centroids
        .chunks(dim)
        .map(|c| TaskPoint {
            coords: c.to_vec(),
        })
        .collect();

    Ok(Tessellation {
        centroids,
        bounds: bounds.to_vec(),
        seed,
        n_samples,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations. Flat row-major storage.
fn lloyd_kmeans(
    samples: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let sample = |i: usize| &samples[i * dim..(i + 1) * dim];

    // k-means++ seeding: first center uniform, later centers weighted by the
    // squared distance to the closest chosen center.
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(sample(first));
    let mut best_d2: Vec<f64> = (0..n).map(|i| sq_dist(sample(i), sample(first))).collect();
    while centroids.len() < k * dim {
        let total: f64 = best_d2.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, d2) in best_d2.iter().enumerate() {
            draw -= d2;
            if draw <= 0.0 {
                chosen = i;
                break;
            }
        }
        let start = centroids.len();
        centroids.extend_from_slice(sample(chosen));
        let new_c = &centroids[start..start + dim];
        for (i, best) in best_d2.iter_mut().enumerate() {
            let d2 = sq_dist(sample(i), new_c);
            if d2 < *best {
                *best = d2;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    let mut dist_to_own = vec![0.0f64; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITERS {
        // Assignment step; ties keep the lowest centroid index.
        let mut inertia = 0.0;
        for i in 0..n {
            let s = sample(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(s, &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
            dist_to_own[i] = best_d;
            inertia += best_d;
        }

        if prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= KMEANS_REL_TOL * prev_inertia
        {
            break;
        }
        prev_inertia = inertia;

        // Update step.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for d in 0..dim {
                sums[c * dim + d] += samples[i * dim + d];
            }
        }
        // Empty clusters grab the sample currently worst-served, lowest
        // sample index on ties, so the result stays deterministic.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut worst = 0usize;
            let mut worst_d = -1.0;
            for i in 0..n {
                if counts[assignment[i]] > 1 && dist_to_own[i] > worst_d {
                    worst_d = dist_to_own[i];
                    worst = i;
                }
            }
            let old = assignment[worst];
            counts[old] -= 1;
            counts[c] += 1;
            assignment[worst] = c;
            dist_to_own[worst] = 0.0;
            for d in 0..dim {
                sums[old * dim + d] -= samples[worst * dim + d];
                sums[c * dim + d] += samples[worst * dim + d];
            }
        }
        for c in 0..k {
            for d in 0..dim {
                centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
    }
    centroids
}

/// Index of the nearest centroid under Euclidean distance; ties break toward
/// the lowest index.
pub fn cell_id_of(tess: &Tessellation, p: &TaskPoint) -> Result<usize> {
    p.check_dim(tess.dim())?;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in tess.centroids.iter().enumerate() {
        let d = p.sq_dist(c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// One elite: the policy, the task-space transition it produced in
/// simulation, its performance score and its home cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RepertoireEntry {
    pub policy: PolicyParams,
    pub delta_s: TaskPoint,
    pub performance: f64,
    pub cell_id: usize,
}

/// Outcome of an elitist insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Added,
    Replaced,
    Rejected,
}

/// How the repertoire was generated; round-trips through the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationMeta {
    pub n_evals: usize,
    pub seed: u64,
}

/// A CVT-indexed archive of elites for one simulated situation.
///
/// Immutable after generation; workers may share it read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct Repertoire {
    pub entries: BTreeMap<usize, RepertoireEntry>,
    pub tessellation: Tessellation,
    pub situation: Situation,
    pub meta: GenerationMeta,
}

impl Repertoire {
    pub fn new(tessellation: Tessellation, situation: Situation, meta: GenerationMeta) -> Self {
        Self {
            entries: BTreeMap::new(),
            tessellation,
            situation,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest expected transition magnitude stored in the archive.
    pub fn max_step(&self) -> f64 {
        self.entries
            .values()
            .map(|e| e.delta_s.norm())
            .fold(0.0, f64::max)
    }
}

/// Elitist insertion: fills empty cells, replaces strictly worse incumbents,
/// keeps the incumbent on ties. Per-cell performance never decreases.
pub fn archive_insert(rep: &mut Repertoire, cand: RepertoireEntry) -> InsertOutcome {
    debug_assert!(cand.cell_id < rep.tessellation.n_cells());
    match rep.entries.get(&cand.cell_id) {
        None => {
            rep.entries.insert(cand.cell_id, cand);
            InsertOutcome::Added
        }
        Some(incumbent) if incumbent.performance < cand.performance => {
            rep.entries.insert(cand.cell_id, cand);
            InsertOutcome::Replaced
        }
        Some(_) => InsertOutcome::Rejected,
    }
}

/// Entries whose expected transition lies within `radius` of `desired`,
/// ascending cell id. An empty shell doubles the radius until at least one
/// entry qualifies (or every entry is returned).
pub fn lookup_candidates<'a>(
    rep: &'a Repertoire,
    desired: &TaskPoint,
    radius: f64,
) -> Result<Vec<&'a RepertoireEntry>> {
    if rep.is_empty() {
        return Err(Error::EmptyRepertoire);
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidInput("radius must be > 0".into()));
    }
    let cap = 2.0 * rep.tessellation.diameter() + desired.norm();
    let mut r = radius;
    loop {
        let r2 = r * r;
        let hits: Vec<&RepertoireEntry> = rep
            .entries
            .values()
            .filter(|e| e.delta_s.sq_dist(desired) <= r2)
            .collect();
        if !hits.is_empty() {
            return Ok(hits);
        }
        if r > cap {
            return Ok(rep.entries.values().collect());
        }
        r *= 2.0;
    }
}

/// Formats a float with 17 significant digits, enough for an exact `f64`
/// round-trip through the text format.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_repertoire<W: Write>(rep: &Repertoire, w: &mut W) -> Result<()> {
    let mut out = String::new();
    let tess = &rep.tessellation;
    writeln!(out, "#version={FORMAT_VERSION}").unwrap();
    writeln!(out, "#n_s={}", tess.dim()).unwrap();
    let n_theta = rep
        .entries
        .values()
        .next()
        .map(|e| e.policy.dim())
        .unwrap_or(0);
    writeln!(out, "#n_theta={n_theta}").unwrap();
    writeln!(out, "#n_cells={}", tess.n_cells()).unwrap();
    writeln!(out, "#seed={}", tess.seed).unwrap();
    writeln!(out, "#n_samples={}", tess.n_samples).unwrap();
    let bounds: Vec<String> = tess
        .bounds
        .iter()
        .map(|(lo, hi)| format!("[{},{}]", fmt_f64(*lo), fmt_f64(*hi)))
        .collect();
    writeln!(out, "#bounds=[{}]", bounds.join(",")).unwrap();
    writeln!(
        out,
        "#situation={}",
        serde_json::to_string(&rep.situation).expect("situation serializes")
    )
    .unwrap();
    writeln!(out, "#n_evals={}", rep.meta.n_evals).unwrap();
    writeln!(out, "#gen_seed={}", rep.meta.seed).unwrap();
    for (cell_id, e) in &rep.entries {
        let mut fields = vec![cell_id.to_string()];
        let centroid = &tess.centroids[*cell_id];
        fields.extend(centroid.coords.iter().map(|c| fmt_f64(*c)));
        fields.extend(e.policy.theta.iter().map(|t| fmt_f64(*t)));
        fields.extend(e.delta_s.coords.iter().map(|c| fmt_f64(*c)));
        fields.push(fmt_f64(e.performance));
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the line-oriented archive format described in the crate docs.
pub fn save_repertoire(rep: &Repertoire, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_repertoire(rep, &mut file)?;
    Ok(())
}

/// Serializes to a string; `gen` uses this to compare runs byte-for-byte.
pub fn repertoire_to_string(rep: &Repertoire) -> String {
    let mut buf = Vec::new();
    write_repertoire(rep, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("archive text is UTF-8")
}

struct HeaderField<T> {
    value: Option<T>,
    key: &'static str,
}

impl<T> HeaderField<T> {
    fn new(key: &'static str) -> Self {
        Self { value: None, key }
    }

    fn require(self) -> Result<T> {
        self.value.ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("missing header field #{}", self.key),
        })
    }
}

fn parse_f64(s: &str, line: usize, field: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("field `{field}`: not a real number: `{s}`"),
    })
}

/// Loads a repertoire, rebuilding the tessellation from the header and
/// validating every row against the archive invariants.
pub fn load_repertoire(path: &Path) -> Result<Repertoire> {
    let file = fs::File::open(path)?;
    read_repertoire(BufReader::new(file))
}

pub fn read_repertoire<R: Read>(reader: BufReader<R>) -> Result<Repertoire> {
    let mut version = HeaderField::new("version");
    let mut n_s = HeaderField::new("n_s");
    let mut n_theta = HeaderField::new("n_theta");
    let mut n_cells = HeaderField::new("n_cells");
    let mut seed = HeaderField::new("seed");
    let mut n_samples = HeaderField::new("n_samples");
    let mut bounds: HeaderField<Vec<(f64, f64)>> = HeaderField::new("bounds");
    let mut situation: HeaderField<Situation> = HeaderField::new("situation");
    let mut n_evals = HeaderField::new("n_evals");
    let mut gen_seed = HeaderField::new("gen_seed");

    let mut rows: Vec<(usize, String)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("header without `=`: `{line}`"),
            })?;
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("field `{key}`: not an integer: `{v}`"),
                })
            };
            match key {
                "version" => {
                    let v: u32 = value.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("field `version`: not an integer: `{value}`"),
                    })?;
                    if v != FORMAT_VERSION {
                        return Err(Error::Version {
                            found: v,
                            supported: FORMAT_VERSION,
                        });
                    }
                    version.value = Some(v);
                }
                "n_s" => n_s.value = Some(parse_usize(value)?),
                "n_theta" => n_theta.value = Some(parse_usize(value)?),
                "n_cells" => n_cells.value = Some(parse_usize(value)?),
                "seed" => {
                    seed.value = Some(value.parse::<u64>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("field `seed`: not an integer: `{value}`"),
                    })?)
                }
                "n_samples" => n_samples.value = Some(parse_usize(value)?),
                "n_evals" => n_evals.value = Some(parse_usize(value)?),
                "gen_seed" => {
                    gen_seed.value = Some(value.parse::<u64>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("field `gen_seed`: not an integer: `{value}`"),
                    })?)
                }
                "bounds" => bounds.value = Some(parse_bounds(value, line_no)?),
                "situation" => {
                    situation.value =
                        Some(serde_json::from_str(value).map_err(|e| Error::Parse {
                            line: line_no,
                            msg: format!("field `situation`: {e}"),
                        })?)
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown header field `{other}`"),
                    })
                }
            }
        } else {
            rows.push((line_no, line.to_string()));
        }
    }

    version.require()?;
    let n_s = n_s.require()?;
    let n_theta = n_theta.require()?;
    let n_cells = n_cells.require()?;
    let seed = seed.require()?;
    let n_samples = n_samples.require()?;
    let bounds = bounds.require()?;
    let situation = situation.require()?;
    let meta = GenerationMeta {
        n_evals: n_evals.require()?,
        seed: gen_seed.require()?,
    };

    if bounds.len() != n_s {
        return Err(Error::Parse {
            line: 0,
            msg: format!("bounds dimension {} != n_s {}", bounds.len(), n_s),
        });
    }

    let tess = build_cvt(n_cells, &bounds, n_samples, seed)?;
    let mut rep = Repertoire::new(tess, situation, meta);

    let expected_fields = 1 + n_s + n_theta + n_s + 1;
    for (line_no, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != expected_fields {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected {expected_fields} fields, got {}",
                    fields.len()
                ),
            });
        }
        let cell_id: usize = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("field `cell_id`: not an integer: `{}`", fields[0]),
        })?;
        if cell_id >= n_cells {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("field `cell_id`: {cell_id} out of range (n_cells={n_cells})"),
            });
        }
        let mut at = 1;
        let mut centroid = Vec::with_capacity(n_s);
        for _ in 0..n_s {
            centroid.push(parse_f64(fields[at], line_no, "centroid")?);
            at += 1;
        }
        let stored = &rep.tessellation.centroids[cell_id];
        if stored.coords != centroid {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("field `centroid`: does not match rebuilt tessellation cell {cell_id}"),
            });
        }
        let mut theta = Vec::with_capacity(n_theta);
        for _ in 0..n_theta {
            theta.push(parse_f64(fields[at], line_no, "theta")?);
            at += 1;
        }
        let policy = PolicyParams::new(theta).map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("field `theta`: {e}"),
        })?;
        let mut delta = Vec::with_capacity(n_s);
        for _ in 0..n_s {
            delta.push(parse_f64(fields[at], line_no, "delta_s")?);
            at += 1;
        }
        let delta_s = TaskPoint::new(delta).map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("field `delta_s`: {e}"),
        })?;
        let performance = parse_f64(fields[at], line_no, "performance")?;

        if cell_id_of(&rep.tessellation, &delta_s)? != cell_id {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("field `delta_s`: not in cell {cell_id}"),
            });
        }
        if rep.entries.contains_key(&cell_id) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate cell_id {cell_id}"),
            });
        }
        rep.entries.insert(
            cell_id,
            RepertoireEntry {
                policy,
                delta_s,
                performance,
                cell_id,
            },
        );
    }

    Ok(rep)
}

fn parse_bounds(value: &str, line: usize) -> Result<Vec<(f64, f64)>> {
    let malformed = || Error::Parse {
        line,
        msg: format!("field `bounds`: malformed: `{value}`"),
    };
    let inner = value
        .trim()
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(malformed)?;
    let mut out = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let rest2 = rest.strip_prefix('[').ok_or_else(malformed)?;
        let (pair, tail) = rest2.split_once(']').ok_or_else(malformed)?;
        let (lo, hi) = pair.split_once(',').ok_or_else(malformed)?;
        out.push((
            parse_f64(lo, line, "bounds")?,
            parse_f64(hi, line, "bounds")?,
        ));
        rest = tail.strip_prefix(',').unwrap_or(tail);
    }
    if out.is_empty() {
        return Err(malformed());
    }
    Ok(out)
}
