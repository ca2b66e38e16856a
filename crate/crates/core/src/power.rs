//! UAV and charging-station batteries, and the Markov-modulated solar
//! harvest at the base.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JOULES_PER_WH: f64 = 3600.0;
pub const JOULES_PER_KWH: f64 = 3_600_000.0;

pub const WEATHER_STATES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weather {
    Excellent,
    Good,
    Fair,
    Poor,
}

impl Weather {
    pub const ALL: [Weather; WEATHER_STATES] = [Weather::Excellent, Weather::Good, Weather::Fair, Weather::Poor];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavBattery {
    pub level: f64,
    pub capacity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationBattery {
    pub level: f64,
    pub capacity: f64,
}

/// Four-state weather chain driving the harvest. Per-state irradiance is in
/// W/m^2, so panel area times efficiency times slot length times irradiance
/// is Joules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarModel {
    pub transition: [[f64; WEATHER_STATES]; WEATHER_STATES],
    pub mu: [f64; WEATHER_STATES],
    pub sigma: [f64; WEATHER_STATES],
    pub panel_m2: f64,
    pub efficiency: f64,
    pub initial_state: usize,
}

impl Default for SolarModel {
    /// Placeholder weather statistics: sticky chain with 0.7 self-transition.
    /// These are not measured values.
    fn default() -> Self {
        let leak = 0.3 / 3.0;
        let mut transition = [[leak; WEATHER_STATES]; WEATHER_STATES];
        for (i, row) in transition.iter_mut().enumerate() {
            row[i] = 0.7;
        }
        Self {
            transition,
            mu: [800.0, 400.0, 150.0, 25.0],
            sigma: [80.0, 60.0, 40.0, 15.0],
            panel_m2: 10.0,
            efficiency: 0.15,
            initial_state: 0,
        }
    }
}

impl SolarModel {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(Error::Config(format!("solar.transition row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("solar.transition row {i} sums to {sum}")));
            }
        }
        for j in 0..WEATHER_STATES {
            if !(self.mu[j].is_finite() && self.mu[j] >= 0.0) {
                return Err(Error::Config(format!("solar.mu[{j}] must be non-negative")));
            }
            if !(self.sigma[j].is_finite() && self.sigma[j] >= 0.0) {
                return Err(Error::Config(format!("solar.sigma[{j}] must be non-negative")));
            }
        }
        if !(self.panel_m2.is_finite() && self.panel_m2 > 0.0) {
            return Err(Error::Config("solar.panel_m2 must be positive".into()));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Config("solar.efficiency must lie in (0, 1]".into()));
        }
        if self.initial_state >= WEATHER_STATES {
            return Err(Error::Config(format!("solar.initial_state {} out of range", self.initial_state)));
        }
        Ok(())
    }

    /// Joules harvested in one slot for a given irradiance draw.
    pub fn harvest_joules(&self, irradiance: f64, slot_seconds: f64) -> f64 {
        self.panel_m2 * self.efficiency * slot_seconds * irradiance
    }
}

/// Advances the weather chain one slot and draws the slot's harvest.
///
/// The irradiance is Normal(mu_j, sigma_j) for the *new* state j, truncated
/// below at zero by rejection. Validated models have mu_j >= 0, so each
/// proposal is accepted with probability at least one half.
pub fn solar_step<R: Rng + ?Sized>(
    model: &SolarModel,
    current: usize,
    slot_seconds: f64,
    rng: &mut R,
) -> (usize, f64) {
    let row = &model.transition[current];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = WEATHER_STATES - 1;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            next = j;
            break;
        }
    }
    // Guard against rows whose float sum lands just under 1.
    while row[next] == 0.0 && next > 0 {
        next -= 1;
    }

    let (mu, sigma) = (model.mu[next], model.sigma[next]);
    let irradiance = if sigma == 0.0 {
        mu.max(0.0)
    } else {
        let normal = Normal::new(mu, sigma).expect("validated sigma");
        loop {
            let x = normal.sample(rng);
            if x >= 0.0 {
                break x;
            }
        }
    };
    (next, model.harvest_joules(irradiance, slot_seconds))
}

/// Station reserve after one slot: the UAV draws `charge_given` from the
/// pre-slot reserve, then the harvest arrives, then the capacity clamp.
pub fn station_update(
    station: StationBattery,
    at_base: bool,
    charge_given: f64,
    harvested: f64,
) -> Result<StationBattery> {
    if charge_given < 0.0 || harvested < 0.0 {
        return Err(Error::Domain(format!(
            "negative energy flow (charge {charge_given}, harvest {harvested})"
        )));
    }
    if !at_base && charge_given != 0.0 {
        return Err(Error::Contract("station charged a UAV that is away from base".into()));
    }
    if charge_given > station.level {
        return Err(Error::InsufficientReserve {
            requested: charge_given,
            available: station.level,
        });
    }
    let drawn = if at_base { charge_given } else { 0.0 };
    let level = (station.level - drawn + harvested).min(station.capacity);
    Ok(StationBattery { level, ..station })
}

/// Energy handed to the UAV during a recharge slot: as much as it can take,
/// bounded by what the station holds.
pub fn charge_amount(uav_level_after_travel: f64, uav_capacity: f64, station_level: f64) -> f64 {
    (uav_capacity - uav_level_after_travel).min(station_level).max(0.0)
}

pub fn uav_battery_update(batt: UavBattery, travel: f64, charge: f64, at_base: bool) -> Result<UavBattery> {
    if travel < 0.0 || charge < 0.0 {
        return Err(Error::Domain(format!("negative energy flow (travel {travel}, charge {charge})")));
    }
    if travel > batt.level {
        return Err(Error::EnergyViolation {
            required: travel,
            available: batt.level,
        });
    }
    let level = if at_base {
        (batt.level - travel + charge).min(batt.capacity)
    } else {
        if charge != 0.0 {
            return Err(Error::Contract("UAV charged away from base".into()));
        }
        batt.level - travel
    };
    Ok(UavBattery { level, ..batt })
}
