//! Run configuration, loaded from JSON. Every field has a default, so `{}`
//! is the full-scale N3 experiment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvConfig, InitialAot, RewardWeights};
use crate::error::{Error, Result};
use crate::kinetics::FlightParams;
use crate::pd3qn::AgentHyper;
use crate::power::{SolarModel, JOULES_PER_KWH, JOULES_PER_WH};
use crate::topology::{random_geometric_graph, DeviceGraph};

/// Node counts and square-region sides of the four evaluation networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkPreset {
    N1,
    N2,
    N3,
    N4,
}

impl NetworkPreset {
    pub fn devices(self) -> usize {
        match self {
            Self::N1 => 5,
            Self::N2 => 6,
            Self::N3 => 7,
            Self::N4 => 8,
        }
    }

    pub fn region_m(self) -> f64 {
        match self {
            Self::N1 => 1500.0,
            Self::N2 => 2000.0,
            Self::N3 => 2500.0,
            Self::N4 => 3000.0,
        }
    }
}

impl FromStr for NetworkPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n1" => Ok(Self::N1),
            "n2" => Ok(Self::N2),
            "n3" => Ok(Self::N3),
            "n4" => Ok(Self::N4),
            _ => Err(Error::Config(format!("unknown network preset {s:?} (expected n1..n4)"))),
        }
    }
}

/// Full no-attestation throughput every generated network is scaled to.
pub const DEFAULT_FULL_KBPS: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    /// Random geometric graph with a preset's size; radius is half the region side.
    Preset {
        name: NetworkPreset,
        #[serde(default = "default_topology_seed")]
        topology_seed: u64,
    },
    Random {
        devices: usize,
        region_m: f64,
        radius_m: f64,
        #[serde(default = "default_link_kbps")]
        link_kbps: f64,
        /// Rescale capacities so the full throughput equals this; `null` keeps them.
        #[serde(default = "default_full_kbps")]
        full_kbps: Option<f64>,
        #[serde(default = "default_topology_seed")]
        topology_seed: u64,
    },
    File {
        path: PathBuf,
    },
}

fn default_topology_seed() -> u64 {
    1
}

fn default_link_kbps() -> f64 {
    10.0
}

fn default_full_kbps() -> Option<f64> {
    Some(DEFAULT_FULL_KBPS)
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::Preset {
            name: NetworkPreset::N3,
            topology_seed: default_topology_seed(),
        }
    }
}

impl NetworkConfig {
    pub fn build(&self) -> Result<DeviceGraph> {
        match self {
            Self::Preset { name, topology_seed } => {
                let region = name.region_m();
                random_geometric_graph(name.devices(), region, 0.5 * region, default_link_kbps(), *topology_seed)?
                    .scaled_to_full(DEFAULT_FULL_KBPS)
            }
            Self::Random {
                devices,
                region_m,
                radius_m,
                link_kbps,
                full_kbps,
                topology_seed,
            } => {
                let g = random_geometric_graph(*devices, *region_m, *radius_m, *link_kbps, *topology_seed)?;
                match full_kbps {
                    Some(target) => g.scaled_to_full(*target),
                    None => Ok(g),
                }
            }
            Self::File { path } => DeviceGraph::load(path),
        }
    }
}

/// Battery sizes in the units the experiment table uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub uav_wh: f64,
    /// `null` in JSON means unbounded.
    #[serde(with = "unbounded")]
    pub station_kwh: f64,
    pub station_initial_kwh: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            uav_wh: 77.0,
            station_kwh: 0.77,
            station_initial_kwh: 0.385,
        }
    }
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunPreset {
    /// 500 slots, 40 training + 10 assessment episodes.
    Desk,
    /// 2000 slots, 80 training + 20 assessment episodes.
    Full,
}

impl FromStr for RunPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

impl fmt::Display for RunPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Desk => "desk",
            Self::Full => "full",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub flight: FlightParams,
    pub solar: SolarModel,
    pub battery: BatteryConfig,
    pub reward: RewardWeights,
    pub aot_norm: f64,
    pub initial_aot: InitialAot,
    pub agent: AgentHyper,
    pub episodes: usize,
    pub slots_per_episode: usize,
    pub train_episodes: usize,
    pub seed: u64,
    /// Run assessment episodes with no exploration instead of the schedule floor.
    pub greedy_eval: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            flight: FlightParams::default(),
            solar: SolarModel::default(),
            battery: BatteryConfig::default(),
            reward: RewardWeights::default(),
            aot_norm: 50.0,
            initial_aot: InitialAot::Ones,
            agent: AgentHyper::default(),
            episodes: 100,
            slots_per_episode: 2000,
            train_episodes: 80,
            seed: 0,
            greedy_eval: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn with_preset(mut self, preset: RunPreset) -> Self {
        let (episodes, slots, train) = match preset {
            RunPreset::Desk => (50, 500, 40),
            RunPreset::Full => (100, 2000, 80),
        };
        self.episodes = episodes;
        self.slots_per_episode = slots;
        self.train_episodes = train;
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.slots_per_episode == 0 {
            return Err(Error::Config("episodes and slots_per_episode must be positive".into()));
        }
        if self.train_episodes >= self.episodes {
            return Err(Error::Config(format!(
                "train_episodes ({}) must be below episodes ({})",
                self.train_episodes, self.episodes
            )));
        }
        if let NetworkConfig::File { path } = &self.network {
            if !path.is_file() {
                return Err(Error::Config(format!("graph file {} does not exist", path.display())));
            }
        }
        let b = &self.battery;
        if !(b.uav_wh.is_finite() && b.uav_wh > 0.0) {
            return Err(Error::Config("battery.uav_wh must be positive and finite".into()));
        }
        self.agent.validate()?;
        self.env_config().validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            flight: self.flight.clone(),
            uav_capacity: self.battery.uav_wh * JOULES_PER_WH,
            station_capacity: self.battery.station_kwh * JOULES_PER_KWH,
            station_initial: self.battery.station_initial_kwh * JOULES_PER_KWH,
            solar: self.solar.clone(),
            reward: self.reward,
            aot_norm: self.aot_norm,
            initial_aot: self.initial_aot,
        }
    }

    /// Environment steps over which exploration and the IS exponent anneal.
    pub fn anneal_steps(&self) -> u64 {
        (self.train_episodes * self.slots_per_episode) as u64
    }
}
