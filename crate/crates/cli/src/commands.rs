use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use setbo::bo::{self, BoRun, Evaluation, Phase};
use setbo::wind_stats::{self, ColumnSpec};
use setbo::{Evaluator, RunOutcome, WindDistribution};

use crate::config::ConfigFile;
use crate::layout_io::{format_layout, read_layout};

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input data (exit 1).
    Usage(anyhow::Error),
    /// Failure while doing the actual work (exit 2).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => e,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

trait Classify<T> {
    fn usage(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.into()))
    }
    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

pub struct FitDistArgs {
    pub csv: PathBuf,
    pub out: PathBuf,
    pub v_max: Option<usize>,
    pub config: Option<PathBuf>,
    pub columns: Option<ColumnSpec>,
    pub jitter: Option<f64>,
}

/// Fits the wind distribution from observations and writes its table.
pub fn fit_dist(args: &FitDistArgs) -> CliResult<WindDistribution> {
    let cfg = args.config.as_deref().map(ConfigFile::load).transpose().usage()?;
    let columns = args
        .columns
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.wind.columns.clone()))
        .unwrap_or_default();
    let v_max = args
        .v_max
        .or(cfg.as_ref().map(|c| c.wind.v_max))
        .unwrap_or(wind_stats::DEFAULT_V_MAX);
    let jitter = args.jitter.or(cfg.as_ref().map(|c| c.wind.jitter)).unwrap_or(0.0);
    let records = wind_stats::load_wind_csv::<f64>(&args.csv, &columns).usage()?;
    let dist = wind_stats::fit_distribution_with_jitter(&records, v_max, jitter).usage()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent).runtime()?;
    }
    dist.save(&args.out).runtime()?;
    let (v, t) = dist.argmax();
    log::info!(
        "fitted {} records; most likely cell v = {v} m/s, θ = {t}°; wrote {}",
        records.len(),
        args.out.display()
    );
    Ok(dist)
}

pub struct RunArgs {
    pub config: PathBuf,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub restart: bool,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Runs the optimisation for every seed, writing one directory per seed.
pub fn run(args: &RunArgs) -> CliResult<Vec<(u64, RunOutcome)>> {
    let cfg = ConfigFile::load(&args.config).usage()?;
    let run_config = cfg.run_config();
    let dist = cfg.wind_distribution().usage()?;
    // validates the wake and power-curve parameters before any expensive work
    Evaluator::new(dist.clone(), &run_config.wake, run_config.power_curve).usage()?;
    let seeds = if args.seeds.is_empty() { run_config.seeds.clone() } else { args.seeds.clone() };
    let out = args.out.clone().unwrap_or_else(|| cfg.run.output.clone());
    create_dir(&out).runtime()?;
    let snapshot = cfg.to_toml().runtime()?;

    let mut outcomes = Vec::new();
    for seed in seeds {
        let dir = seed_dir(&out, seed);
        create_dir(&dir).runtime()?;
        let state_path = dir.join("state.json");
        let mut run = if state_path.exists() && !args.restart {
            let state = BoRun::load_state(&state_path).runtime()?;
            if state.config != run_config || state.seed != seed {
                return Err(CliError::Usage(anyhow!(
                    "{} belongs to a different configuration or seed; pass --restart to discard it",
                    state_path.display()
                )));
            }
            log::info!("seed {seed}: resuming after {} evaluations", state.evaluations.len());
            BoRun::resume(dist.clone(), state).runtime()?
        } else {
            BoRun::new(run_config.clone(), dist.clone(), seed).runtime()?
        };
        write_file(&dir.join("config.toml"), &snapshot).runtime()?;
        run.save_state(&state_path).runtime()?;
        let outcome = run
            .run_to_end(|r| r.save_state(&state_path))
            .with_context(|| format!("seed {seed} failed; state saved in {}", state_path.display()))
            .runtime()?;
        write_outputs(&dir, &outcome, &run_config.grid).runtime()?;
        log::info!(
            "seed {seed}: final hypervolume {:.6e}, {} layouts on the front",
            outcome.trace.final_hypervolume(),
            outcome.front().len()
        );
        outcomes.push((seed, outcome));
    }
    Ok(outcomes)
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Initial => "initial",
        Phase::Proposal => "proposal",
        Phase::Random => "random",
    }
}

fn layout_file_name(id: usize) -> String {
    format!("layout_{id:04}.txt")
}

fn write_outputs(dir: &Path, outcome: &RunOutcome, grid: &setbo::GridSpec) -> anyhow::Result<()> {
    let mut evals = String::from("id,phase,power,cost,n_turbines,genome\n");
    for e in &outcome.evaluations {
        let _ = writeln!(
            evals,
            "{},{},{},{},{},{}",
            e.id,
            phase_name(e.phase),
            e.objectives.power,
            e.objectives.cost,
            e.n_turbines,
            e.genome
        );
    }
    write_file(&dir.join("evaluations.csv"), &evals)?;

    let mut hv = String::from("evaluation,hypervolume\n");
    for r in &outcome.trace.records {
        let _ = writeln!(hv, "{},{}", r.evaluation, r.hypervolume);
    }
    write_file(&dir.join("hv_trace.csv"), &hv)?;

    let layouts = dir.join("layouts");
    if layouts.exists() {
        std::fs::remove_dir_all(&layouts).with_context(|| format!("cannot clear {}", layouts.display()))?;
    }
    create_dir(&layouts)?;
    let mut front = String::from("power,cost,n_turbines,layout_id\n");
    for id in outcome.front() {
        let e: &Evaluation = &outcome.evaluations[id];
        let _ = writeln!(front, "{},{},{},{}", e.objectives.power, e.objectives.cost, e.n_turbines, e.id);
        let layout = bo::layout_of(e, grid)?;
        let header = [
            format!("layout {}", e.id),
            format!("power {} kW, cost {}, {} turbines", e.objectives.power, e.objectives.cost, e.n_turbines),
        ];
        write_file(&layouts.join(layout_file_name(e.id)), &format_layout(&layout, &header))?;
    }
    write_file(&dir.join("pareto_front.csv"), &front)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub power: f64,
    pub cost: f64,
    pub n_turbines: usize,
}

/// Objective values of a layout file under the configured site and turbine.
pub fn evaluate(layout: &Path, config: &Path) -> CliResult<Report> {
    let cfg = ConfigFile::load(config).usage()?;
    let layout = read_layout(layout).usage()?;
    let dist = cfg.wind_distribution().usage()?;
    let ev = Evaluator::new(dist, &cfg.wake, cfg.power_curve).usage()?;
    let o = ev.evaluate(&layout).runtime()?;
    Ok(Report {
        power: o.power,
        cost: o.cost,
        n_turbines: layout.len(),
    })
}

fn read_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .with_context(|| format!("malformed {}", path.display()))?;
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str, path: &Path) -> anyhow::Result<Vec<f64>> {
    let i = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))?;
    rows.iter()
        .map(|r| {
            r[i].parse::<f64>()
                .with_context(|| format!("{}: `{}` is not a number", path.display(), r[i]))
        })
        .collect()
}

/// Per-seed hypervolume trace and Pareto front read back from a run directory.
pub struct SeedResult {
    pub seed: u64,
    pub hypervolume: Vec<f64>,
    pub front: Vec<(f64, f64)>,
}

pub fn load_seed_results(run_dir: &Path) -> anyhow::Result<Vec<SeedResult>> {
    let mut seeds: Vec<(u64, PathBuf)> = std::fs::read_dir(run_dir)
        .with_context(|| format!("cannot read run directory {}", run_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let seed = name.strip_prefix("seed_")?.parse().ok()?;
            Some((seed, e.path()))
        })
        .collect();
    if seeds.is_empty() {
        bail!("{} contains no seed_<n> directories", run_dir.display());
    }
    seeds.sort();
    seeds
        .into_iter()
        .map(|(seed, dir)| {
            let hv_path = dir.join("hv_trace.csv");
            let (h, rows) = read_csv(&hv_path)?;
            let hypervolume = column(&h, &rows, "hypervolume", &hv_path)?;
            let front_path = dir.join("pareto_front.csv");
            let (h, rows) = read_csv(&front_path)?;
            let power = column(&h, &rows, "power", &front_path)?;
            let cost = column(&h, &rows, "cost", &front_path)?;
            Ok(SeedResult {
                seed,
                hypervolume,
                front: power.into_iter().zip(cost).collect(),
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Writes plot-ready data for the runs under `run_dir` into `out`.
pub fn report(run_dir: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let results = load_seed_results(run_dir).usage()?;
    let len = results[0].hypervolume.len();
    if results.iter().any(|r| r.hypervolume.len() != len) {
        return Err(CliError::Usage(anyhow!("seed traces have different lengths")));
    }
    create_dir(out).runtime()?;
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> CliResult {
        let p = out.join(name);
        write_file(&p, &text).runtime()?;
        written.push(p);
        Ok(())
    };

    let mut seeds_csv = String::from("evaluation");
    for r in &results {
        let _ = write!(seeds_csv, ",seed_{}", r.seed);
    }
    seeds_csv.push('\n');
    let mut med = String::from("evaluation,median,band_min,band_max\n");
    for k in 0..len {
        let mut col: Vec<f64> = results.iter().map(|r| r.hypervolume[k]).collect();
        let _ = write!(seeds_csv, "{}", k + 1);
        for v in &col {
            let _ = write!(seeds_csv, ",{v}");
        }
        seeds_csv.push('\n');
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(med, "{},{},{},{}", k + 1, median(&mut col), lo, hi);
    }
    emit("hv_seeds.csv".into(), seeds_csv)?;
    emit("hv_median.csv".into(), med)?;

    for r in &results {
        let mut hv = String::from("evaluation,hypervolume\n");
        for (k, v) in r.hypervolume.iter().enumerate() {
            let _ = writeln!(hv, "{},{v}", k + 1);
        }
        emit(format!("hv_seed_{}.csv", r.seed), hv)?;
        emit(format!("pareto_seed_{}.csv", r.seed), front_csv(&r.front))?;
    }

    // run whose final hypervolume is the (lower) median
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = results[a].hypervolume.last().copied().unwrap_or(0.0);
        let fb = results[b].hypervolume.last().copied().unwrap_or(0.0);
        fa.total_cmp(&fb).then(results[a].seed.cmp(&results[b].seed))
    });
    let mid = &results[order[(order.len() - 1) / 2]];
    log::info!("median-hypervolume run: seed {}", mid.seed);
    emit("pareto_median_run.csv".into(), front_csv(&mid.front))?;
    Ok(written)
}

fn front_csv(front: &[(f64, f64)]) -> String {
    let mut s = String::from("power,cost\n");
    for (p, c) in front {
        let _ = writeln!(s, "{p},{c}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_band_of_three() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
