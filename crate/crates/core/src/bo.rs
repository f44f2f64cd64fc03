//! The optimisation loop: initial design, surrogate fitting, EHVI proposal,
//! expensive evaluation and archive bookkeeping.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acq_opt::{self, maximise_ehvi, GaConfig, Genome, GridGp, GridSpec, Surrogate, Surrogates};
use crate::error::{Error, Result};
use crate::objectives::{cost, Evaluator, ObjectiveVector, PowerCurveParams};
use crate::pareto::{non_dominated_indices, update_reference, ParetoArchive};
use crate::rng::{derive_seed, stream};
use crate::set_gp::{FitOptions, ModelSnapshot, SetDataset, SetGpModel};
use crate::wake::{Layout, WakeConfig};
use crate::wind_stats::WindDistribution;

const TAG_INITIAL: u64 = 0x696e;
const TAG_FIT: u64 = 0x6669;
const TAG_GA: u64 = 0x6761;
const TAG_RANDOM: u64 = 0x726e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// A set-GP surrogate, like expected power.
    #[default]
    Gp,
    /// The closed-form cost, which is exact and cheap.
    Exact,
}

fn default_n_initial() -> usize {
    20
}
fn default_max_evaluations() -> usize {
    100
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_refit_every() -> usize {
    1
}
fn default_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_n_initial")]
    pub n_initial: usize,
    /// Total expensive evaluations, initial design included.
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub grid: GridSpec<f64>,
    pub wake: WakeConfig<f64>,
    pub power_curve: PowerCurveParams<f64>,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub gp: FitOptions<f64>,
    /// Refit hyperparameters every `k` proposals; in between the previous
    /// hyperparameters are conditioned on the enlarged data set.
    #[serde(default = "default_refit_every")]
    pub refit_every: usize,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default = "default_margin")]
    pub reference_margin: f64,
    /// Reference point `(−power, cost)` for reported hypervolumes. Defaults to
    /// `(0, (1 + margin)·cost(rows·cols))`.
    #[serde(default)]
    pub reporting_reference: Option<[f64; 2]>,
}

impl RunConfig {
    /// Default settings around the given turbine model.
    pub fn new(wake: WakeConfig<f64>, power_curve: PowerCurveParams<f64>) -> Self {
        RunConfig {
            n_initial: default_n_initial(),
            max_evaluations: default_max_evaluations(),
            seeds: default_seeds(),
            grid: GridSpec::default(),
            wake,
            power_curve,
            ga: GaConfig::default(),
            gp: FitOptions::default(),
            refit_every: default_refit_every(),
            cost_model: CostModel::default(),
            reference_margin: default_margin(),
            reporting_reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.ga.validate()?;
        if self.n_initial < 2 {
            return Err(Error::param("n_initial must be at least 2"));
        }
        if self.max_evaluations < self.n_initial {
            return Err(Error::param(format!(
                "max_evaluations ({}) must be at least n_initial ({})",
                self.max_evaluations, self.n_initial
            )));
        }
        if self.grid.cells() < 2 {
            return Err(Error::param("the grid needs at least two cells"));
        }
        if self.refit_every == 0 {
            return Err(Error::param("refit_every must be at least 1"));
        }
        if !(self.reference_margin > 0.0) || !self.reference_margin.is_finite() {
            return Err(Error::param("reference_margin must be positive"));
        }
        if let Some(r) = self.reporting_reference {
            if !r.iter().all(|v| v.is_finite()) {
                return Err(Error::param("reporting_reference must be finite"));
            }
        }
        Ok(())
    }

    pub fn reporting_reference(&self) -> [f64; 2] {
        self.reporting_reference
            .unwrap_or([0.0, (1.0 + self.reference_margin) * cost::<f64>(self.grid.cells())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Proposal,
    Random,
}

/// One expensive evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Position in evaluation order, from 0.
    pub id: usize,
    pub phase: Phase,
    pub genome: Genome,
    pub objectives: ObjectiveVector<f64>,
    pub n_turbines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Number of expensive evaluations so far (1-based).
    pub evaluation: usize,
    pub layout_id: usize,
    pub objectives: ObjectiveVector<f64>,
    /// Archive hypervolume under the reporting reference.
    pub hypervolume: f64,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn hypervolumes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.hypervolume).collect()
    }

    pub fn final_hypervolume(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.hypervolume)
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub seed: u64,
    pub strategy: Strategy,
    pub config: RunConfig,
    pub evaluations: Vec<Evaluation>,
    pub trace: RunTrace,
    /// Most recently fitted surrogate per modelled objective; training ids
    /// index `evaluations`.
    pub models: Vec<ModelSnapshot<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Bayesian,
    RandomSearch,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Non-dominated evaluations under the reporting reference.
    pub archive: ParetoArchive<f64>,
    pub trace: RunTrace,
    pub dataset: SetDataset<f64>,
    pub evaluations: Vec<Evaluation>,
}

impl RunOutcome {
    /// Ids of the evaluations on the reported front, ordered by power (descending).
    pub fn front(&self) -> Vec<usize> {
        front_ids(&self.evaluations, self.archive.reference())
    }
}

fn front_ids(evals: &[Evaluation], reference: &[f64]) -> Vec<usize> {
    let inside: Vec<&Evaluation> = evals
        .iter()
        .filter(|e| inside(&e.objectives.canonical(), reference))
        .collect();
    let points: Vec<Vec<f64>> = inside.iter().map(|e| e.objectives.canonical().to_vec()).collect();
    let mut ids: Vec<usize> = non_dominated_indices(&points)
        .into_iter()
        .map(|i| inside[i].id)
        .collect();
    ids.sort_by(|&a, &b| {
        evals[b]
            .objectives
            .power
            .total_cmp(&evals[a].objectives.power)
            .then(a.cmp(&b))
    });
    ids
}

fn inside(p: &[f64], r: &[f64]) -> bool {
    p.iter().zip(r).all(|(x, y)| x < y)
}

/// Draws `n_initial` distinct feasible genomes, each with a cardinality
/// uniform in `[2, rows·cols]` and uniformly chosen cells.
pub fn initial_design(config: &RunConfig, seed: u64) -> Result<Vec<Genome>> {
    config.validate()?;
    let mut rng = stream(seed, TAG_INITIAL, 0);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(config.n_initial);
    let mut attempts = 0usize;
    while out.len() < config.n_initial {
        attempts += 1;
        if attempts > 1000 * config.n_initial {
            return Err(Error::param(format!(
                "could not draw {} distinct feasible layouts with at least two turbines",
                config.n_initial
            )));
        }
        let mut g = acq_opt::random_genome(&config.grid, 2, &mut rng)?;
        acq_opt::repair(&mut g, &config.grid, &mut rng);
        if g.popcount() >= 2 && seen.insert(g.clone()) {
            out.push(g);
        }
    }
    Ok(out)
}

/// Resumable optimisation run that performs one expensive evaluation per [`BoRun::step`].
pub struct BoRun {
    evaluator: Evaluator<f64>,
    design: Vec<Genome>,
    state: RunState,
    evaluated: HashSet<Genome>,
}

impl BoRun {
    pub fn new(config: RunConfig, distribution: WindDistribution<f64>, seed: u64) -> Result<Self> {
        Self::start(config, distribution, seed, Strategy::Bayesian)
    }

    /// Same budget and initial design, remaining proposals drawn like the initial design.
    pub fn random_search(config: RunConfig, distribution: WindDistribution<f64>, seed: u64) -> Result<Self> {
        Self::start(config, distribution, seed, Strategy::RandomSearch)
    }

    fn start(config: RunConfig, distribution: WindDistribution<f64>, seed: u64, strategy: Strategy) -> Result<Self> {
        Self::resume(
            distribution,
            RunState {
                seed,
                strategy,
                config,
                evaluations: Vec::new(),
                trace: RunTrace::default(),
                models: Vec::new(),
            },
        )
    }

    /// Continues from a persisted state.
    pub fn resume(distribution: WindDistribution<f64>, state: RunState) -> Result<Self> {
        let config = &state.config;
        config.validate()?;
        let evaluator = Evaluator::new(distribution, &config.wake, config.power_curve)?;
        let design = initial_design(config, state.seed)?;
        if state.evaluations.len() > config.max_evaluations
            || state.trace.records.len() != state.evaluations.len()
            || state.evaluations.iter().enumerate().any(|(i, e)| e.id != i)
        {
            return Err(Error::State("evaluations and trace are inconsistent".into()));
        }
        for e in &state.evaluations {
            acq_opt::decode(&e.genome, &config.grid)?;
        }
        let evaluated = state.evaluations.iter().map(|e| e.genome.clone()).collect();
        Ok(BoRun {
            evaluator,
            design,
            state,
            evaluated,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.state.config
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn evaluator(&self) -> &Evaluator<f64> {
        &self.evaluator
    }

    pub fn is_done(&self) -> bool {
        self.state.evaluations.len() >= self.config().max_evaluations
    }

    /// Performs the next expensive evaluation. Returns `None` once the budget is spent.
    pub fn step(&mut self) -> Result<Option<&Evaluation>> {
        if self.is_done() {
            return Ok(None);
        }
        let started = Instant::now();
        let id = self.state.evaluations.len();
        let n_initial = self.config().n_initial;
        let (genome, phase) = if id < n_initial {
            (self.design[id].clone(), Phase::Initial)
        } else {
            let t = (id - n_initial) as u64;
            match self.state.strategy {
                Strategy::Bayesian => (self.propose(t)?, Phase::Proposal),
                Strategy::RandomSearch => (self.random_proposal(t)?, Phase::Random),
            }
        };
        let layout = acq_opt::decode(&genome, &self.config().grid)?;
        let objectives = self.evaluator.evaluate(&layout)?;
        let evaluation = Evaluation {
            id,
            phase,
            n_turbines: layout.len(),
            genome: genome.clone(),
            objectives,
        };
        self.evaluated.insert(genome);
        self.state.evaluations.push(evaluation);
        let hypervolume = self.reporting_archive()?.hypervolume();
        self.state.trace.records.push(TraceRecord {
            evaluation: id + 1,
            layout_id: id,
            objectives,
            hypervolume,
            wall_time: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "seed {} evaluation {}/{} ({:?}): power {:.6e} kW, cost {:.6}, {} turbines, HV {:.6e}",
            self.state.seed,
            id + 1,
            self.config().max_evaluations,
            phase,
            objectives.power,
            objectives.cost,
            layout.len(),
            hypervolume
        );
        Ok(self.state.evaluations.last())
    }

    fn dataset(&self) -> SetDataset<f64> {
        let mut d = SetDataset::new(2);
        for e in &self.state.evaluations {
            let layout = acq_opt::decode(&e.genome, &self.config().grid).expect("evaluated genomes decode");
            d.push(layout, e.objectives.canonical().to_vec())
                .expect("evaluated layouts are non-empty");
        }
        d
    }

    fn modelled_objectives(&self) -> usize {
        match self.config().cost_model {
            CostModel::Gp => 2,
            CostModel::Exact => 1,
        }
    }

    /// Fits (or reconditions) one model per modelled objective.
    fn surrogate_models(&mut self, t: u64) -> Result<Vec<SetGpModel<f64>>> {
        let config = self.config().clone();
        let data = self.dataset();
        let lattice = config.grid.to_lattice();
        let ids: Vec<usize> = (0..data.len()).collect();
        let refit = self.state.models.is_empty() || t % config.refit_every as u64 == 0;
        let seed = derive_seed(self.state.seed, TAG_FIT, t);
        let models = (0..self.modelled_objectives())
            .map(|i| {
                let y = data.column(i);
                if refit {
                    SetGpModel::fit(
                        data.sets().to_vec(),
                        &y,
                        &config.gp,
                        Some(&lattice),
                        derive_seed(seed, 0x6670, i as u64),
                    )
                } else {
                    SetGpModel::with_hyperparams_on(
                        data.sets().to_vec(),
                        &y,
                        self.state.models[i].hyperparams,
                        config.gp.normalize,
                        Some(&lattice),
                    )
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.state.models = models.iter().map(|m| m.snapshot(ids.clone())).collect();
        Ok(models)
    }

    fn propose(&mut self, t: u64) -> Result<Genome> {
        let models = self.surrogate_models(t)?;
        let config = self.config();
        let mut parts = models
            .iter()
            .map(|m| GridGp::new(m, &config.grid).map(Surrogate::Gp))
            .collect::<Result<Vec<_>>>()?;
        if config.cost_model == CostModel::Exact {
            parts.push(Surrogate::ExactCost);
        }
        let points: Vec<Vec<f64>> = self
            .state
            .evaluations
            .iter()
            .map(|e| e.objectives.canonical().to_vec())
            .collect();
        let reference = update_reference(&points, config.reference_margin)?;
        let archive = ParetoArchive::from_points(&points, reference)?;
        let proposal = maximise_ehvi(
            &Surrogates(parts),
            &archive,
            &config.grid,
            &config.ga,
            &self.evaluated,
            derive_seed(self.state.seed, TAG_GA, t),
        )?;
        log::debug!(
            "proposal {}: {} turbines, EHVI {:.6e} ({} genomes scored)",
            t,
            proposal.layout.len(),
            proposal.ehvi,
            proposal.scored
        );
        Ok(proposal.genome)
    }

    fn random_proposal(&self, t: u64) -> Result<Genome> {
        let grid = &self.config().grid;
        let mut rng = stream(self.state.seed, TAG_RANDOM, t);
        for _ in 0..10_000 {
            let mut g = acq_opt::random_genome(grid, 2, &mut rng)?;
            acq_opt::repair(&mut g, grid, &mut rng);
            if g.popcount() >= 2 && !self.evaluated.contains(&g) {
                return Ok(g);
            }
        }
        Err(Error::NoFeasibleGenome)
    }

    /// Evaluations so far, filtered to the non-dominated ones inside the reporting reference.
    pub fn reporting_archive(&self) -> Result<ParetoArchive<f64>> {
        let r = self.config().reporting_reference();
        let mut a = ParetoArchive::new(r.to_vec());
        for e in &self.state.evaluations {
            let p = e.objectives.canonical();
            if inside(&p, &r) {
                a.insert(p.to_vec())?;
            }
        }
        Ok(a)
    }

    pub fn outcome(&self) -> Result<RunOutcome> {
        Ok(RunOutcome {
            archive: self.reporting_archive()?,
            trace: self.state.trace.clone(),
            dataset: self.dataset(),
            evaluations: self.state.evaluations.clone(),
        })
    }

    /// Runs to completion, calling `after_each` after every evaluation (for
    /// persistence). A failing step is logged before its error is returned.
    pub fn run_to_end(&mut self, mut after_each: impl FnMut(&BoRun) -> Result<()>) -> Result<RunOutcome> {
        while !self.is_done() {
            if let Err(e) = self.step() {
                log::error!(
                    "seed {}: evaluation {} failed: {e}",
                    self.state.seed,
                    self.state.evaluations.len() + 1
                );
                return Err(e);
            }
            after_each(self)?;
        }
        self.outcome()
    }

    pub fn save_state(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.state)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load_state(path: &Path) -> Result<RunState> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn run(config: &RunConfig, distribution: &WindDistribution<f64>, seed: u64) -> Result<RunOutcome> {
    BoRun::new(config.clone(), distribution.clone(), seed)?.run_to_end(|_| Ok(()))
}

pub fn random_search_baseline(
    config: &RunConfig,
    distribution: &WindDistribution<f64>,
    seed: u64,
) -> Result<RunOutcome> {
    BoRun::random_search(config.clone(), distribution.clone(), seed)?.run_to_end(|_| Ok(()))
}

/// Decoded layout of an evaluation.
pub fn layout_of(evaluation: &Evaluation, grid: &GridSpec<f64>) -> Result<Layout<f64>> {
    acq_opt::decode(&evaluation.genome, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        let mut c = RunConfig::new(
            WakeConfig {
                rotor_radius: 41.0,
                thrust_coefficient: 0.8,
                decay_constant: None,
                hub_height: Some(80.0),
                surface_roughness: Some(0.3),
            },
            PowerCurveParams {
                a: 2000.0,
                m: -1.0,
                n: 400.0,
                tau: 1.6,
                cut_in: 3.0,
            },
        );
        c.grid = GridSpec::new(4, 4, 246.0, 246.0).unwrap();
        c.n_initial = 5;
        c.max_evaluations = 8;
        c.ga.population = 20;
        c.ga.generations = 10;
        c.gp.de.max_generations = 20;
        c
    }

    fn wind() -> WindDistribution<f64> {
        let mut w = vec![0.0; 11 * 360];
        for (v, th, p) in [(8, 270, 0.5), (10, 90, 0.3), (6, 0, 0.2)] {
            w[v * 360 + th] = p;
        }
        WindDistribution::from_weights(10, w, [[1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn initial_design_postconditions() {
        let c = config();
        let d = initial_design(&c, 3).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d, initial_design(&c, 3).unwrap());
        let distinct: HashSet<_> = d.iter().collect();
        assert_eq!(distinct.len(), 5);
        for g in &d {
            assert!((2..=16).contains(&g.popcount()));
            assert!(acq_opt::feasible(g, &c.grid));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        c.n_initial = 1;
        assert!(c.validate().is_err());
        c = config();
        c.max_evaluations = 4;
        assert!(c.validate().is_err());
        c = config();
        c.refit_every = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn budget_archive_and_trace() {
        let c = config();
        let out = run(&c, &wind(), 11).unwrap();
        assert_eq!(out.evaluations.len(), c.max_evaluations);
        assert_eq!(out.trace.records.len(), c.max_evaluations);
        let hv = out.trace.hypervolumes();
        assert!(hv.windows(2).all(|w| w[1] >= w[0]));
        let distinct: HashSet<_> = out.evaluations.iter().map(|e| &e.genome).collect();
        assert_eq!(distinct.len(), c.max_evaluations);
        // archive equals the non-dominated filter of everything evaluated
        let mut expected: Vec<Vec<f64>> = out
            .front()
            .iter()
            .map(|&i| out.evaluations[i].objectives.canonical().to_vec())
            .collect();
        let mut got = out.archive.points().to_vec();
        let key = |a: &Vec<f64>, b: &Vec<f64>| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]));
        expected.sort_by(key);
        got.sort_by(key);
        assert_eq!(expected, got);
        assert_eq!(out.archive.hypervolume(), out.trace.final_hypervolume());
    }

    #[test]
    fn zero_iterations_returns_initial_design() {
        let mut c = config();
        c.max_evaluations = c.n_initial;
        let out = run(&c, &wind(), 2).unwrap();
        assert_eq!(out.evaluations.len(), c.n_initial);
        assert!(out.evaluations.iter().all(|e| e.phase == Phase::Initial));
        let design = initial_design(&c, 2).unwrap();
        assert!(out.evaluations.iter().zip(&design).all(|(e, g)| &e.genome == g));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let c = config();
        let full = run(&c, &wind(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        let mut first = BoRun::new(c.clone(), wind(), 5).unwrap();
        for _ in 0..6 {
            first.step().unwrap();
        }
        first.save_state(&path).unwrap();
        drop(first);
        let state = BoRun::load_state(&path).unwrap();
        let resumed = BoRun::resume(wind(), state).unwrap().run_to_end(|_| Ok(())).unwrap();
        assert_eq!(resumed.evaluations, full.evaluations);
        assert_eq!(resumed.trace.hypervolumes(), full.trace.hypervolumes());
    }

    #[test]
    fn random_search_shares_initial_design() {
        let c = config();
        let bo = run(&c, &wind(), 4).unwrap();
        let rs = random_search_baseline(&c, &wind(), 4).unwrap();
        assert_eq!(rs.evaluations.len(), c.max_evaluations);
        assert_eq!(bo.evaluations[..c.n_initial], rs.evaluations[..c.n_initial]);
        assert!(rs.evaluations[c.n_initial..].iter().all(|e| e.phase == Phase::Random));
    }

    #[test]
    fn exact_cost_and_sparse_refits_run() {
        let mut c = config();
        c.cost_model = CostModel::Exact;
        c.refit_every = 2;
        let a = run(&c, &wind(), 8).unwrap();
        let b = run(&c, &wind(), 8).unwrap();
        assert_eq!(a.evaluations, b.evaluations);
    }
}
