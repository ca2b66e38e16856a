//! One-UAV attestation MDP: state, energy-feasible action masking, the
//! per-slot transition and the reward.
//!
//! Devices are numbered `0..n` in ascending graph-node order (see
//! [`DeviceGraph::attestable`]); action `n` sends the UAV to the base to
//! recharge. Positions use the same numbering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{self, FlightParams};
use crate::power::{self, SolarModel, StationBattery, UavBattery, JOULES_PER_KWH, JOULES_PER_WH};
use crate::topology::{build_throughput_table, Coordinate, DeviceGraph, ThroughputTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight on the drop in average AoT.
    pub theta_age: f64,
    /// Weight on the slot's throughput in Kbps.
    pub theta_flow: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            theta_age: 10.0,
            theta_flow: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAot {
    /// Every device starts freshly attested.
    Ones,
    /// Independent uniform ages in `1..=max`, drawn from the reset seed.
    Uniform { max: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub flight: FlightParams,
    pub uav_capacity: f64,
    pub station_capacity: f64,
    pub station_initial: f64,
    pub solar: SolarModel,
    pub reward: RewardWeights,
    /// AoT value that maps to 1.0 in the observation.
    pub aot_norm: f64,
    pub initial_aot: InitialAot,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            flight: FlightParams::default(),
            uav_capacity: 77.0 * JOULES_PER_WH,
            station_capacity: 0.77 * JOULES_PER_KWH,
            station_initial: 0.385 * JOULES_PER_KWH,
            solar: SolarModel::default(),
            reward: RewardWeights::default(),
            aot_norm: 50.0,
            initial_aot: InitialAot::Ones,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.flight.validate()?;
        self.solar.validate()?;
        if !(self.uav_capacity.is_finite() && self.uav_capacity > 0.0) {
            return Err(Error::Config("UAV battery capacity must be positive and finite".into()));
        }
        // The station may be unbounded; that disables its clamp.
        if !(self.station_capacity > 0.0) {
            return Err(Error::Config("station capacity must be positive".into()));
        }
        if !(self.station_initial >= 0.0 && self.station_initial <= self.station_capacity) {
            return Err(Error::Config(format!(
                "station initial level {} outside [0, {}]",
                self.station_initial, self.station_capacity
            )));
        }
        let w = self.reward;
        if !(w.theta_age.is_finite() && w.theta_age >= 0.0 && w.theta_flow.is_finite() && w.theta_flow >= 0.0) {
            return Err(Error::Config("reward weights must be finite and non-negative".into()));
        }
        if !(self.aot_norm.is_finite() && self.aot_norm > 0.0) {
            return Err(Error::Config("aot_norm must be positive".into()));
        }
        if let InitialAot::Uniform { max } = self.initial_aot {
            if max == 0 {
                return Err(Error::Config("initial_aot.uniform.max must be at least 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

/// Feasible-action set over `0..=n` (devices, then base).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(Vec<bool>);

impl ActionMask {
    pub fn all(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn only(len: usize, action: usize) -> Self {
        let mut m = vec![false; len];
        m[action] = true;
        Self(m)
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn allows(&self, action: usize) -> bool {
        self.0.get(action).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn allowed(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub aot: Vec<u32>,
    /// `0..n` for devices, `n` for the base.
    pub position: usize,
    pub uav_level: f64,
    pub station_level: f64,
    /// Weather state; hidden from the agent's observation.
    pub solar_state: usize,
    pub slot: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    /// Source-to-gateway rate during the slot, Kbps.
    pub throughput: f64,
    /// Average AoT after the slot.
    pub avg_aot: f64,
    pub attested: Option<usize>,
    pub travel_energy: f64,
    pub charge: f64,
    pub harvested: f64,
}

pub fn average_aot(aot: &[u32]) -> Result<f64> {
    if aot.is_empty() {
        return Err(Error::Domain("average AoT of an empty device set".into()));
    }
    Ok(aot.iter().map(|&d| d as f64).sum::<f64>() / aot.len() as f64)
}

pub struct Environment {
    config: EnvConfig,
    graph: DeviceGraph,
    table: ThroughputTable,
    devices: Vec<usize>,
    /// Device coordinates followed by the base.
    positions: Vec<Coordinate>,
    degraded: Vec<f64>,
    /// Row-major hop energies between positions.
    hop: Vec<f64>,
    state: EnvState,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(graph: DeviceGraph, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let devices = graph.attestable();
        if devices.is_empty() {
            return Err(Error::Config("graph has no attestable devices".into()));
        }
        let table = build_throughput_table(&graph)?;
        let degraded = devices.iter().map(|&i| table.degraded[&i]).collect();

        let mut positions: Vec<Coordinate> = devices.iter().map(|&i| graph.coordinate(i)).collect();
        positions.push(graph.base());
        let m = positions.len();
        let mut hop = vec![0.0; m * m];
        for (a, &pa) in positions.iter().enumerate() {
            for (b, &pb) in positions.iter().enumerate() {
                kinetics::flight_speed(kinetics::travel_distance(pa, pb), &config.flight)?;
                hop[a * m + b] = kinetics::travel_energy(pa, pb, &config.flight);
            }
        }
        let base = m - 1;
        for d in 0..base {
            let round_trip = hop[base * m + d] + hop[d * m + base];
            if round_trip > config.uav_capacity {
                return Err(Error::Config(format!(
                    "device {d} needs {round_trip:.0} J for a round trip, above the {:.0} J battery",
                    config.uav_capacity
                )));
            }
        }

        let state = EnvState {
            aot: vec![1; devices.len()],
            position: base,
            uav_level: config.uav_capacity,
            station_level: config.station_initial,
            solar_state: config.solar.initial_state,
            slot: 0,
        };
        Ok(Self {
            config,
            graph,
            table,
            devices,
            positions,
            degraded,
            hop,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn graph(&self) -> &DeviceGraph {
        &self.graph
    }

    pub fn table(&self) -> &ThroughputTable {
        &self.table
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    /// Graph node index of device `d`.
    pub fn device_node(&self, d: usize) -> usize {
        self.devices[d]
    }

    pub fn action_count(&self) -> usize {
        self.devices.len() + 1
    }

    pub fn observation_dim(&self) -> usize {
        self.devices.len() + 3
    }

    pub fn base_action(&self) -> Action {
        Action(self.devices.len())
    }

    pub fn position_coordinate(&self, position: usize) -> Coordinate {
        self.positions[position]
    }

    pub fn hop_energy(&self, from: usize, to: usize) -> f64 {
        self.hop[from * self.positions.len() + to]
    }

    /// Throughput while device `d` is offline.
    pub fn degraded_throughput(&self, d: usize) -> f64 {
        self.degraded[d]
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let aot = match self.config.initial_aot {
            InitialAot::Ones => vec![1; self.devices.len()],
            InitialAot::Uniform { max } => (0..self.devices.len()).map(|_| self.rng.random_range(1..=max)).collect(),
        };
        self.state = EnvState {
            aot,
            position: self.devices.len(),
            uav_level: self.config.uav_capacity,
            station_level: self.config.station_initial,
            solar_state: self.config.solar.initial_state,
            slot: 0,
        };
        self.state.clone()
    }

    /// Device `i` is allowed when the UAV can reach it and still get home;
    /// the base is always allowed.
    pub fn feasible_actions(&self, state: &EnvState) -> ActionMask {
        let n = self.devices.len();
        let mut bits = vec![false; n + 1];
        for (i, bit) in bits.iter_mut().enumerate().take(n) {
            // Same subtraction the transition performs, so the next slot's
            // return check sees an identical level.
            let after = state.uav_level - self.hop_energy(state.position, i);
            *bit = after >= 0.0 && after >= self.hop_energy(i, n);
        }
        bits[n] = true;
        ActionMask(bits)
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let n = self.devices.len();
        let mut obs = Vec::with_capacity(n + 3);
        obs.extend(state.aot.iter().map(|&d| d as f64 / self.config.aot_norm));
        obs.push((state.position + 1) as f64 / (n + 1) as f64);
        obs.push(state.uav_level / self.config.uav_capacity);
        obs.push(if self.config.station_capacity.is_finite() {
            state.station_level / self.config.station_capacity
        } else {
            0.0
        });
        obs
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let n = self.devices.len();
        let target = action.0;
        if target > n {
            return Err(Error::Contract(format!("action {target} outside 0..={n}")));
        }
        let mask = self.feasible_actions(&self.state);
        if !mask.allows(target) {
            return Err(Error::Contract(format!("action {target} is not energy-feasible")));
        }

        let s = &self.state;
        let travel = self.hop_energy(s.position, target);
        let at_base = target == n;
        let avg_before = average_aot(&s.aot)?;

        let uav = UavBattery {
            level: s.uav_level,
            capacity: self.config.uav_capacity,
        };
        let station = StationBattery {
            level: s.station_level,
            capacity: self.config.station_capacity,
        };

        let (attested, throughput) = if at_base {
            (None, self.table.full)
        } else {
            (Some(target), self.degraded[target])
        };
        let charge = if at_base {
            power::charge_amount(uav.level - travel, uav.capacity, station.level)
        } else {
            0.0
        };

        let (solar_state, harvested) = power::solar_step(
            &self.config.solar,
            s.solar_state,
            self.config.flight.slot_seconds,
            &mut self.rng,
        );
        let station = power::station_update(station, at_base, charge, harvested)?;
        let uav = power::uav_battery_update(uav, travel, charge, at_base)?;

        let aot = s
            .aot
            .iter()
            .enumerate()
            .map(|(i, &d)| if Some(i) == attested { 1 } else { d + 1 })
            .collect::<Vec<_>>();
        let avg_after = average_aot(&aot)?;
        let w = self.config.reward;
        let reward = w.theta_flow * throughput + w.theta_age * (avg_before - avg_after);

        self.state = EnvState {
            aot,
            position: target,
            uav_level: uav.level,
            station_level: station.level,
            solar_state,
            slot: s.slot + 1,
        };
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward,
            throughput,
            avg_aot: avg_after,
            attested,
            travel_energy: travel,
            charge,
            harvested,
        })
    }
}
