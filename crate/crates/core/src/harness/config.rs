//! TOML experiment configuration. Every section and key is optional; missing
//! keys take the defaults below, unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::FitSettings;
use crate::channel::{ChannelModel, Fading, InputSignal};
use crate::error::{Error, Result};
use crate::gnn::{GnnParams, Nonlinearity, OutputSquash};
use crate::policy::AllocationProblem;

/// Key reference printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML; every key optional)
  [dataset]    scales = [100, 196, 289, 400]   target node counts (side = round(sqrt))
               graphs_per_scale = 20            training graphs per scale
               test_graphs_per_scale = 20       held-out graphs per scale
               spacing = 1.0                    grid spacing a
               radius = 1.5                     connection radius r_c
               sigma = 0.1                      jitter standard deviation (absolute units)
  [channel]    pathloss_exponent = 2.2
               fading = \"rayleigh\" | \"none\"
               noise_power = 1.0
               sparsify_radius = <float>        omit for all-pairs interference
               direct_link_distance = <float>   default spacing / 2
               input = \"direct_gain\" | \"ones\"
  [problem]    p0 = 1.0  budget_fraction = 0.3  dual_step = 1e-3  primal_step = 1e-2
               batch = 8  iters = 500  optimizer = \"sgd\" | \"adam\"
  [gnn]        layers = 3  taps = 4  nonlinearity = \"relu\" | \"leaky_relu\" | \"abs\"
               leaky_slope = 0.1  init_scale = 0.5
  [experiment] seed = 1  train_scale = 100  eval_scales = []  (empty: every scale)
               trials = 3  in_distribution = true  wmmse_iters = 50
               histogram_bins = 20  svg = false
  [bounds]     spacing = 1.0  radius = 1.5
               rgg_instances = 100  rgg_sides = [8, 12, 16]  sigma_max = 0.1  max_order = 3
               rgg_seeds = 100  gnn_width = 2  gnn_depth = 2  tap_scale = 1.0
               grid_instances = 10  grid_trials = 200  grid_min_side = 6  grid_max_side = 10
               fit_iters = 150  fit_batch = 4  fit_learning_rate = 0.02
               alpha_sides = [8, 12, 16, 20]  alpha_sigma = 0.05  alpha_seeds = 50
               cross_small = 12  cross_large = 20  cross_sigma = 0.05
";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub dataset: DatasetSpec,
    pub channel: ChannelSection,
    pub problem: AllocationProblem,
    pub gnn: GnnSection,
    pub experiment: ExperimentSection,
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub scales: Vec<usize>,
    pub graphs_per_scale: usize,
    pub test_graphs_per_scale: usize,
    pub spacing: f64,
    pub radius: f64,
    pub sigma: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            scales: vec![100, 196, 289, 400],
            graphs_per_scale: 20,
            test_graphs_per_scale: 20,
            spacing: 1.0,
            radius: 1.5,
            sigma: 0.1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config("dataset.scales must be a nonempty list of positive counts".into()));
        }
        if self.graphs_per_scale == 0 {
            return Err(Error::Config("dataset.graphs_per_scale must be at least 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("dataset.sigma must be nonnegative".into()));
        }
        Ok(())
    }

    /// Grid side whose square is nearest to the target count.
    pub fn side(target: usize) -> usize {
        ((target as f64).sqrt().round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub pathloss_exponent: f64,
    pub fading: Fading,
    pub noise_power: f64,
    pub sparsify_radius: Option<f64>,
    pub direct_link_distance: Option<f64>,
    pub input: InputSignal,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            pathloss_exponent: 2.2,
            fading: Fading::Rayleigh,
            noise_power: 1.0,
            sparsify_radius: None,
            direct_link_distance: None,
            input: InputSignal::DirectGain,
        }
    }
}

impl ChannelSection {
    pub fn model(&self, spacing: f64) -> ChannelModel {
        ChannelModel {
            pathloss_exponent: self.pathloss_exponent,
            fading: self.fading,
            noise_power: self.noise_power,
            sparsify_radius: self.sparsify_radius,
            direct_link_distance: self.direct_link_distance.unwrap_or(spacing / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityName {
    Relu,
    LeakyRelu,
    Abs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnSection {
    pub layers: usize,
    pub taps: usize,
    pub nonlinearity: NonlinearityName,
    pub leaky_slope: f64,
    pub init_scale: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        Self {
            layers: 3,
            taps: 4,
            nonlinearity: NonlinearityName::Relu,
            leaky_slope: 0.1,
            init_scale: 0.5,
        }
    }
}

impl GnnSection {
    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.nonlinearity {
            NonlinearityName::Relu => Nonlinearity::Relu,
            NonlinearityName::LeakyRelu => Nonlinearity::LeakyRelu(self.leaky_slope),
            NonlinearityName::Abs => Nonlinearity::AbsValue,
        }
    }

    pub fn init(&self, seed: u64) -> Result<GnnParams> {
        GnnParams::random(
            self.layers,
            self.taps,
            self.nonlinearity(),
            OutputSquash::Sigmoid,
            self.init_scale,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seed: u64,
    /// Target node count of the training scale; must appear in `dataset.scales`.
    pub train_scale: usize,
    /// Target node counts to evaluate; empty means all.
    pub eval_scales: Vec<usize>,
    pub trials: usize,
    pub in_distribution: bool,
    pub wmmse_iters: usize,
    pub histogram_bins: usize,
    pub svg: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 1,
            train_scale: 100,
            eval_scales: Vec::new(),
            trials: 3,
            in_distribution: true,
            wmmse_iters: 50,
            histogram_bins: 20,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub spacing: f64,
    pub radius: f64,
    pub rgg_instances: usize,
    pub rgg_sides: Vec<usize>,
    /// Largest jitter, in units of the spacing.
    pub sigma_max: f64,
    pub max_order: usize,
    pub rgg_seeds: usize,
    pub gnn_width: usize,
    pub gnn_depth: usize,
    pub tap_scale: f64,
    pub grid_instances: usize,
    pub grid_trials: usize,
    pub grid_min_side: usize,
    pub grid_max_side: usize,
    pub fit_iters: usize,
    pub fit_batch: usize,
    pub fit_learning_rate: f64,
    pub alpha_sides: Vec<usize>,
    /// Jitter for the decay fit, in units of the spacing.
    pub alpha_sigma: f64,
    pub alpha_seeds: usize,
    pub cross_small: usize,
    pub cross_large: usize,
    pub cross_sigma: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            spacing: 1.0,
            radius: 1.5,
            rgg_instances: 100,
            rgg_sides: vec![8, 12, 16],
            sigma_max: 0.1,
            max_order: 3,
            rgg_seeds: 100,
            gnn_width: 2,
            gnn_depth: 2,
            tap_scale: 1.0,
            grid_instances: 10,
            grid_trials: 200,
            grid_min_side: 6,
            grid_max_side: 10,
            fit_iters: 150,
            fit_batch: 4,
            fit_learning_rate: 0.02,
            alpha_sides: vec![8, 12, 16, 20],
            alpha_sigma: 0.05,
            alpha_seeds: 50,
            cross_small: 12,
            cross_large: 20,
            cross_sigma: 0.05,
        }
    }
}

impl BoundsSection {
    pub fn fit(&self) -> FitSettings {
        FitSettings {
            iters: self.fit_iters,
            batch: self.fit_batch,
            learning_rate: self.fit_learning_rate,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.problem.validate()?;
        self.channel.model(self.dataset.spacing).validate()?;
        if !self.dataset.scales.contains(&self.experiment.train_scale) {
            return Err(Error::Config(format!(
                "experiment.train_scale {} is not among dataset.scales {:?}",
                self.experiment.train_scale, self.dataset.scales
            )));
        }
        if let Some(s) = self.eval_scales().iter().find(|s| !self.dataset.scales.contains(s)) {
            return Err(Error::Config(format!("eval scale {s} is not among dataset.scales")));
        }
        if self.experiment.trials == 0 {
            return Err(Error::Config("experiment.trials must be at least 1".into()));
        }
        if self.gnn.layers == 0 || self.gnn.taps == 0 {
            return Err(Error::Config("gnn.layers and gnn.taps must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_scales(&self) -> Vec<usize> {
        if self.experiment.eval_scales.is_empty() {
            self.dataset.scales.clone()
        } else {
            self.experiment.eval_scales.clone()
        }
    }

    pub fn channel_model(&self) -> ChannelModel {
        self.channel.model(self.dataset.spacing)
    }
}
