//! `bench-cli`: generate repertoires, run episodes, replicate benchmarks and
//! compare result columns.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aprol_cli::bench::{summarize, BenchConfig};
use aprol_cli::episode::{auto_bounds, load_repertoire_dir, run_episode, EpisodeConfig};
use aprol_cli::mapfile::MapFile;
use aprol_cli::{bench, stats};
use aprol_core::adapt::Mode;
use aprol_core::archive::{build_cvt, save_repertoire};
use aprol_core::qd::{generate_repertoire, MapElitesConfig, PerformanceFn, DEFAULT_N_EVALS};
use aprol_core::types::TaskPoint;
use aprol_core::worldsim::{situation_library, NominalMap, Situation, Task};

#[derive(Parser)]
#[command(
    name = "bench-cli",
    about = "Repertoire-based online adaptation: generation, episodes, benchmarks, statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the tessellation and evolve one repertoire per library situation
    Gen(GenArgs),
    /// Run a single adaptation episode
    Run(RunArgs),
    /// Run the full (situation x mode x replicate) comparison grid
    Bench(BenchArgs),
    /// Rank-sum test between two mode columns of a results CSV
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Task: mobile | pusher
    #[arg(long)]
    task: String,
    /// Number of CVT cells
    #[arg(long, default_value_t = 400)]
    cells: usize,
    /// MAP-Elites evaluation budget per situation
    #[arg(long, default_value_t = DEFAULT_N_EVALS)]
    evals: usize,
    /// Uniform samples for the CVT construction (default 10x cells)
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the .rpt files
    #[arg(long)]
    out: PathBuf,
    /// Restrict generation to these situation labels (comma-separated)
    #[arg(long, value_delimiter = ',')]
    situations: Vec<String>,
    /// Mutation std in normalized policy space
    #[arg(long, default_value_t = 0.05)]
    sigma_mut: f64,
    /// Bootstrap size (default max(500, cells/10))
    #[arg(long)]
    n_init: Option<usize>,
}

#[derive(Args)]
struct EpisodeArgs {
    /// Task: mobile | pusher
    #[arg(long)]
    task: String,
    /// Directory of .rpt repertoire files
    #[arg(long)]
    repertoires: PathBuf,
    /// Goal position "x,y"
    #[arg(long, allow_hyphen_values = true)]
    goal: String,
    /// Start position "x,y" (default 0,0)
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// JSON map file (bounds, resolution, obstacles, goal, start)
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exclude the repertoire whose situation matches the deployed one
    #[arg(long)]
    exclude_matching: bool,
    /// Override the deployment noise std of the true situation
    #[arg(long)]
    sigma_w: Option<f64>,
    /// JSON-lines diagnostics log
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    episode: EpisodeArgs,
    /// True (deployed) situation label from the task library
    #[arg(long)]
    situation: String,
    /// Algorithm mode: aprol | cp-l | sp-l | sp-nl | aprol-nl
    #[arg(long, default_value = "aprol")]
    mode: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    episode: EpisodeArgs,
    /// True situation labels (comma-separated)
    #[arg(long, value_delimiter = ',')]
    situations: Vec<String>,
    /// Modes to compare (comma-separated)
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    #[arg(long, default_value_t = 40)]
    replicates: usize,
    /// Results CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Results CSV produced by `bench`
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    mode_a: String,
    #[arg(long)]
    mode_b: String,
    /// Restrict to one situation label
    #[arg(long)]
    situation: Option<String>,
}

/// Errors before any real work starts are usage errors (exit 1); failures
/// during the work are runtime errors (exit 2).
enum CliFailure {
    Usage(String),
    Runtime(String),
}

type CliResult<T> = Result<T, CliFailure>;

fn usage<E: std::fmt::Display>(e: E) -> CliFailure {
    CliFailure::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliFailure {
    CliFailure::Runtime(e.to_string())
}

fn parse_point(s: &str) -> CliResult<TaskPoint> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliFailure::Usage(format!("expected \"x,y\", got `{s}`")));
    }
    let x: f64 = parts[0].trim().parse().map_err(usage)?;
    let y: f64 = parts[1].trim().parse().map_err(usage)?;
    Ok(TaskPoint::xy(x, y))
}

fn find_situation(task: Task, label: &str) -> CliResult<Situation> {
    situation_library(task)
        .into_iter()
        .find(|s| s.label == label)
        .ok_or_else(|| {
            CliFailure::Usage(format!(
                "situation `{label}` is not in the {task} library"
            ))
        })
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let task: Task = args.task.parse().map_err(usage)?;
    let map = NominalMap::for_task(task);
    let r = map.r_max();
    let n_samples = args.samples.unwrap_or(10 * args.cells);

    let mut situations = situation_library(task);
    if !args.situations.is_empty() {
        for label in &args.situations {
            if !situations.iter().any(|s| &s.label == label) {
                return Err(CliFailure::Usage(format!(
                    "situation `{label}` is not in the {task} library"
                )));
            }
        }
        situations.retain(|s| args.situations.contains(&s.label));
    }

    fs::create_dir_all(&args.out).map_err(runtime)?;
    let tess =
        build_cvt(args.cells, &[(-r, r), (-r, r)], n_samples, args.seed).map_err(usage)?;

    for situation in &situations {
        let gen_seed = bench::derive_seed(args.seed, &situation.label, 0);
        let cfg = match args.n_init {
            Some(n_init) => MapElitesConfig::new(n_init, args.evals, args.sigma_mut, gen_seed),
            None => MapElitesConfig::for_cells(args.cells, args.evals, gen_seed).map(|mut c| {
                c.sigma_mut = args.sigma_mut;
                c
            }),
        }
        .map_err(usage)?;
        let rep = generate_repertoire(&map, situation, &tess, &cfg, &PerformanceFn::Constant)
            .map_err(runtime)?;
        let path = args.out.join(format!("{}.rpt", situation.label));
        save_repertoire(&rep, &path).map_err(runtime)?;
        println!(
            "wrote {} ({} elites / {} cells)",
            path.display(),
            rep.len(),
            args.cells
        );
    }
    println!("{} repertoire files in {}", situations.len(), args.out.display());
    Ok(())
}

/// Shared episode assembly for `run` and `bench`.
fn build_episode_template(
    args: &EpisodeArgs,
    task: Task,
    situation: Situation,
    mode: Mode,
) -> CliResult<EpisodeConfig> {
    if !args.repertoires.is_dir() {
        return Err(CliFailure::Usage(format!(
            "repertoire directory {} does not exist",
            args.repertoires.display()
        )));
    }
    let map_file = match &args.map {
        Some(p) => Some(MapFile::load(p).map_err(usage)?),
        None => None,
    };
    let goal = parse_point(&args.goal)?;
    let start = match (&args.start, &map_file) {
        (Some(s), _) => parse_point(s)?,
        (None, Some(m)) => m
            .start
            .map(|s| TaskPoint::xy(s[0], s[1]))
            .unwrap_or_else(|| TaskPoint::xy(0.0, 0.0)),
        (None, None) => TaskPoint::xy(0.0, 0.0),
    };

    let mut situation = situation;
    if let Some(sw) = args.sigma_w {
        situation = situation.with_noise(sw);
    }

    let mut cfg = EpisodeConfig::new(task, situation, &args.repertoires, mode, goal.clone());
    cfg.start = start.clone();
    cfg.seed = args.seed;
    cfg.exclude_matching = args.exclude_matching;
    if let Some(ms) = args.max_steps {
        cfg.max_steps = ms;
    }
    match &map_file {
        Some(m) => {
            cfg.map_bounds = m.bounds_pairs();
            cfg.map_resolution = m.resolution;
            cfg.obstacles = m.obstacles.clone();
        }
        None => {
            cfg.map_bounds = auto_bounds(&start, &goal, NominalMap::for_task(task).r_max());
        }
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let task: Task = args.episode.task.parse().map_err(usage)?;
    let mode: Mode = args.mode.parse().map_err(usage)?;
    let situation = find_situation(task, &args.situation)?;
    let cfg = build_episode_template(&args.episode, task, situation, mode)?;

    let reps = load_repertoire_dir(&cfg.repertoire_dir).map_err(usage)?;
    let result = run_episode(&cfg, &reps).map_err(runtime)?;

    if let Some(log_path) = &args.episode.log {
        let mut f = fs::File::create(log_path).map_err(runtime)?;
        for step in &result.steps {
            let line = serde_json::to_string(step).map_err(runtime)?;
            writeln!(f, "{line}").map_err(runtime)?;
        }
    }

    println!(
        "mode={} situation={} steps={} success={} final_distance={:.4}",
        mode, args.situation, result.steps_taken, result.success, result.final_distance
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let task: Task = args.episode.task.parse().map_err(usage)?;
    if args.situations.is_empty() {
        return Err(CliFailure::Usage("--situations must not be empty".into()));
    }
    if args.modes.is_empty() {
        return Err(CliFailure::Usage("--modes must not be empty".into()));
    }
    let modes: Vec<Mode> = args
        .modes
        .iter()
        .map(|m| m.parse().map_err(usage))
        .collect::<CliResult<_>>()?;
    let mut situations = Vec::new();
    for label in &args.situations {
        let mut s = find_situation(task, label)?;
        if let Some(sw) = args.episode.sigma_w {
            s = s.with_noise(sw);
        }
        situations.push(s);
    }

    // template episode validates the shared map/goal arguments
    let template =
        build_episode_template(&args.episode, task, situations[0].clone(), modes[0])?;
    let reps = load_repertoire_dir(&template.repertoire_dir).map_err(usage)?;

    let mut bcfg = BenchConfig::new(task, situations, modes.clone(), template.goal.clone());
    bcfg.replicates = args.replicates;
    bcfg.base_seed = args.episode.seed;
    bcfg.exclude_matching = args.episode.exclude_matching;
    bcfg.start = template.start.clone();
    bcfg.max_steps = template.max_steps;
    bcfg.map_bounds = template.map_bounds;
    bcfg.map_resolution = template.map_resolution;
    bcfg.obstacles = template.obstacles.clone();

    let (rows, detailed) = bench::run_benchmark(&bcfg, &reps).map_err(runtime)?;
    let csv = bench::rows_to_csv(&rows);
    fs::write(&args.out, &csv).map_err(runtime)?;

    if let Some(log_path) = &args.episode.log {
        let mut f = fs::File::create(log_path).map_err(runtime)?;
        for (row, result) in &detailed {
            let line = serde_json::json!({
                "situation": row.situation,
                "mode": row.mode.as_str(),
                "replicate": row.replicate,
                "steps": row.steps,
                "success": row.success,
                "detail": result,
            });
            writeln!(f, "{line}").map_err(runtime)?;
        }
    }

    println!("wrote {} rows to {}", rows.len(), args.out.display());
    for (mode, med, iqr) in summarize(&rows, &modes) {
        println!("mode={mode} median_steps={med:.1} iqr={iqr:.1}");
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult<()> {
    let mode_a: Mode = args.mode_a.parse().map_err(usage)?;
    let mode_b: Mode = args.mode_b.parse().map_err(usage)?;
    let text = fs::read_to_string(&args.csv).map_err(usage)?;
    let rows = bench::parse_csv(&text).map_err(runtime)?;
    let column = |mode: Mode| -> Vec<f64> {
        rows.iter()
            .filter(|r| {
                r.mode == mode
                    && args
                        .situation
                        .as_ref()
                        .is_none_or(|s| &r.situation == s)
            })
            .map(|r| r.steps as f64)
            .collect()
    };
    let a = column(mode_a);
    let b = column(mode_b);
    if a.is_empty() || b.is_empty() {
        return Err(CliFailure::Runtime(format!(
            "no rows for {} ({}) or {} ({})",
            mode_a,
            a.len(),
            mode_b,
            b.len()
        )));
    }
    let (u, p) = stats::ranksum(&a, &b).map_err(runtime)?;
    println!(
        "n_a={} n_b={} U={u} p_two_sided={p:.6e} median_a={:.1} median_b={:.1}",
        a.len(),
        b.len(),
        median_f64(&a),
        median_f64(&b),
    );
    Ok(())
}

fn median_f64(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success status
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Stats(args) => cmd_stats(args),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliFailure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliFailure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
