use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use setbo::acq_opt::GaConfig;
use setbo::bo::CostModel;
use setbo::set_gp::FitOptions;
use setbo::wind_stats::{self, ColumnSpec};
use setbo::{GridSpec, PowerCurveParams, RunConfig, WakeConfig, WindDistribution};

/// Where the wind distribution comes from: raw observations or a fitted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSection {
    /// CSV of observations, fitted on load.
    pub csv: Option<PathBuf>,
    /// Table previously written by `fit-dist`.
    pub distribution: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnSpec,
    #[serde(default = "default_v_max")]
    pub v_max: usize,
    /// Added to the sample covariance diagonal before fitting.
    #[serde(default)]
    pub jitter: f64,
}

fn default_v_max() -> usize {
    wind_stats::DEFAULT_V_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "d_n_initial")]
    pub n_initial: usize,
    #[serde(default = "d_max_evaluations")]
    pub max_evaluations: usize,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_refit")]
    pub refit_every: usize,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default = "d_margin")]
    pub reference_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporting_reference: Option<[f64; 2]>,
    /// Output directory for per-seed results.
    #[serde(default = "d_output")]
    pub output: PathBuf,
}

fn d_n_initial() -> usize {
    20
}
fn d_max_evaluations() -> usize {
    100
}
fn d_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn d_refit() -> usize {
    1
}
fn d_margin() -> f64 {
    0.1
}
fn d_output() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n_initial: d_n_initial(),
            max_evaluations: d_max_evaluations(),
            seeds: d_seeds(),
            refit_every: d_refit(),
            cost_model: CostModel::default(),
            reference_margin: d_margin(),
            reporting_reference: None,
            output: d_output(),
        }
    }
}

/// The TOML configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub wind: WindSection,
    pub wake: WakeConfig,
    pub power_curve: PowerCurveParams,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub gp: FitOptions<f64>,
}

impl ConfigFile {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.wind.csv.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.wind.distribution.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.run.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.wind.csv, &self.wind.distribution) {
            (Some(_), Some(_)) => bail!("[wind] takes either `csv` or `distribution`, not both"),
            (None, None) => bail!("[wind] needs `csv` or `distribution`"),
            _ => {}
        }
        if self.run.seeds.is_empty() {
            bail!("[run] seeds must not be empty");
        }
        self.run_config().validate()?;
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            n_initial: self.run.n_initial,
            max_evaluations: self.run.max_evaluations,
            seeds: self.run.seeds.clone(),
            grid: self.grid,
            wake: self.wake,
            power_curve: self.power_curve,
            ga: self.ga,
            gp: self.gp,
            refit_every: self.run.refit_every,
            cost_model: self.run.cost_model,
            reference_margin: self.run.reference_margin,
            reporting_reference: self.run.reporting_reference,
        }
    }

    /// Fits or loads the wind distribution.
    pub fn wind_distribution(&self) -> anyhow::Result<WindDistribution> {
        if let Some(p) = &self.wind.distribution {
            return WindDistribution::load(p).with_context(|| format!("cannot load distribution {}", p.display()));
        }
        let p = self.wind.csv.as_ref().expect("validated");
        let records = wind_stats::load_wind_csv(p, &self.wind.columns)?;
        Ok(wind_stats::fit_distribution_with_jitter(
            &records,
            self.wind.v_max,
            self.wind.jitter,
        )?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
