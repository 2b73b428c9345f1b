//! Experiment settings: per-experiment defaults, flat `key=value` files and
//! command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rpvf::{Error, Result};

/// Offset separating initial-policy seeds from sampling seeds.
pub const POLICY_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    KernelEig,
    ThreeroomBasis,
    GoalgridCompare,
    MinegridBench,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [
        ExperimentId::KernelEig,
        ExperimentId::ThreeroomBasis,
        ExperimentId::GoalgridCompare,
        ExperimentId::MinegridBench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::KernelEig => "kernel-eig",
            ExperimentId::ThreeroomBasis => "threeroom-basis",
            ExperimentId::GoalgridCompare => "goalgrid-compare",
            ExperimentId::MinegridBench => "minegrid-bench",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

/// Which state's reward a sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardIndex {
    /// Reward of the state entered, `r(s')`.
    Entry,
    /// Reward of the state left, `r(s)`.
    Departure,
}

impl RewardIndex {
    pub fn name(self) -> &'static str {
        match self {
            RewardIndex::Entry => "entry",
            RewardIndex::Departure => "departure",
        }
    }
}

impl FromStr for RewardIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entry" => Ok(RewardIndex::Entry),
            "departure" => Ok(RewardIndex::Departure),
            _ => Err(Error::InvalidArgument(format!(
                "reward_index must be `entry` or `departure`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    /// Basis size.
    pub k: usize,
    /// Base seed; instance `i` samples with `seed + i`.
    pub seed: u64,
    pub instances: usize,
    /// Initial policies per instance.
    pub policies: usize,
    pub episodes: usize,
    pub horizon: usize,
    /// Side of the square goal and mine grids.
    pub grid_size: usize,
    pub mines: usize,
    /// Wall penalty of the three-room comparison grid.
    pub penalty: f64,
    /// RPI iteration cap.
    pub iterations: usize,
    pub ridge: f64,
    pub reward_index: RewardIndex,
    pub out: PathBuf,
}

/// Keys accepted by [`ExperimentConfig::set`], in manifest order.
pub const KEYS: [&str; 17] = [
    "experiment",
    "alpha",
    "beta",
    "sigma",
    "k",
    "seed",
    "instances",
    "policies",
    "episodes",
    "horizon",
    "grid_size",
    "mines",
    "penalty",
    "iterations",
    "ridge",
    "reward_index",
    "out",
];

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentId) -> Self {
        let (beta, episodes, horizon) = match experiment {
            ExperimentId::KernelEig => (0.1, 5000, 100),
            ExperimentId::ThreeroomBasis => (0.1, 5000, 100),
            ExperimentId::GoalgridCompare => (1.0, 500, 50),
            ExperimentId::MinegridBench => (0.1, 500, 50),
        };
        Self {
            experiment,
            alpha: 0.9,
            beta,
            sigma: 0.1,
            k: 4,
            seed: 0,
            instances: 10,
            policies: 10,
            episodes,
            horizon,
            grid_size: 5,
            mines: 5,
            penalty: -50.0,
            iterations: rpvf::learner::DEFAULT_ITERATIONS,
            ridge: rpvf::learner::DEFAULT_RIDGE,
            reward_index: RewardIndex::Entry,
            out: PathBuf::from("results"),
        }
    }

    /// Defaults for `experiment`, then `overrides` applied in order. An
    /// `experiment` key among the overrides is ignored: the caller already
    /// chose which experiment to run.
    pub fn resolve<'a>(
        experiment: ExperimentId,
        overrides: impl IntoIterator<Item = &'a (String, String)>,
    ) -> Result<Self> {
        let mut config = Self::defaults(experiment);
        for (key, value) in overrides {
            if key != "experiment" {
                config.set(key, value)?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "experiment" => self.experiment = value.parse()?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "instances" => self.instances = parse(key, value)?,
            "policies" => self.policies = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "grid_size" => self.grid_size = parse(key, value)?,
            "mines" => self.mines = parse(key, value)?,
            "penalty" => self.penalty = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "ridge" => self.ridge = parse(key, value)?,
            "reward_index" => self.reward_index = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{key}`"
                )))
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "experiment" => self.experiment.name().to_string(),
            "alpha" => format!("{:?}", self.alpha),
            "beta" => format!("{:?}", self.beta),
            "sigma" => format!("{:?}", self.sigma),
            "k" => self.k.to_string(),
            "seed" => self.seed.to_string(),
            "instances" => self.instances.to_string(),
            "policies" => self.policies.to_string(),
            "episodes" => self.episodes.to_string(),
            "horizon" => self.horizon.to_string(),
            "grid_size" => self.grid_size.to_string(),
            "mines" => self.mines.to_string(),
            "penalty" => format!("{:?}", self.penalty),
            "iterations" => self.iterations.to_string(),
            "ridge" => format!("{:?}", self.ridge),
            "reward_index" => self.reward_index.name().to_string(),
            "out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta {} must be finite and ≥ 0", self.beta));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma {} must be positive", self.sigma));
        }
        if !(self.penalty < 0.0) {
            return fail(format!("penalty {} must be negative", self.penalty));
        }
        if !(self.ridge >= 0.0) {
            return fail(format!("ridge {} must be ≥ 0", self.ridge));
        }
        for (name, v) in [
            ("k", self.k),
            ("instances", self.instances),
            ("policies", self.policies),
            ("episodes", self.episodes),
            ("horizon", self.horizon),
            ("iterations", self.iterations),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.grid_size < 2 {
            return fail(format!("grid_size {} must be at least 2", self.grid_size));
        }
        match self.experiment {
            ExperimentId::KernelEig if self.k < 2 => fail("kernel-eig needs k ≥ 2".into()),
            ExperimentId::ThreeroomBasis if !(2..=8).contains(&self.k) => fail(format!(
                "threeroom-basis compares 2 to 8 vectors, got k = {}",
                self.k
            )),
            ExperimentId::GoalgridCompare | ExperimentId::MinegridBench
                if self.k > self.grid_size * self.grid_size =>
            {
                fail(format!("k {} exceeds the state count", self.k))
            }
            ExperimentId::MinegridBench if self.instances < 2 => {
                fail("minegrid-bench needs at least 2 instances".into())
            }
            _ => Ok(()),
        }
    }

    /// Sampling and grid seeds, one per instance.
    pub fn instance_seeds(&self) -> Vec<u64> {
        (0..self.instances as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    /// Seeds of the random initial policies.
    pub fn policy_seeds(&self) -> Vec<u64> {
        (0..self.policies as u64)
            .map(|j| self.seed.wrapping_add(POLICY_SEED_OFFSET).wrapping_add(j))
            .collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.join(self.experiment.name())
    }

    /// Every key with its resolved value, then the library version.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push('=');
            out.push_str(&self.get(key).expect("known key"));
            out.push('\n');
        }
        out.push_str(&format!("version={}\n", rpvf::VERSION));
        out
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; whitespace around keys and values is trimmed.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            });
        };
        let key = key.trim();
        if key != "version" && !KEYS.contains(&key) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("unknown key `{key}`"),
            });
        }
        if key != "version" {
            pairs.push((key.to_string(), value.trim().to_string()));
        }
    }
    Ok(pairs)
}
