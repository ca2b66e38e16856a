//! Flight geometry and the rotary-wing energy-per-meter model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Coordinate;

/// Airframe and rotor constants. Defaults describe a DJI Mavic 3 class
/// quadrotor flying one hop per 300 s slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightParams {
    /// Hovering blade profile power, W.
    pub blade_profile_power: f64,
    /// Hovering induced power, W.
    pub induced_power: f64,
    /// Rotor blade tip speed, m/s.
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub hover_induced_velocity: f64,
    pub fuselage_drag_ratio: f64,
    /// kg/m^3
    pub air_density: f64,
    pub rotor_solidity: f64,
    /// m^2
    pub rotor_disc_area: f64,
    /// m/s
    pub max_speed: f64,
    /// Slot duration in seconds; every hop takes exactly one slot.
    pub slot_seconds: f64,
    /// Cruise altitude in meters. Informational: it does not enter the
    /// energy model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude: Option<f64>,
}

impl Default for FlightParams {
    fn default() -> Self {
        Self {
            blade_profile_power: 79.86,
            induced_power: 88.63,
            tip_speed: 120.0,
            hover_induced_velocity: 4.03,
            fuselage_drag_ratio: 0.6,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disc_area: 0.503,
            max_speed: 21.0,
            slot_seconds: 300.0,
            altitude: None,
        }
    }
}

impl FlightParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("blade_profile_power", self.blade_profile_power),
            ("induced_power", self.induced_power),
            ("tip_speed", self.tip_speed),
            ("hover_induced_velocity", self.hover_induced_velocity),
            ("fuselage_drag_ratio", self.fuselage_drag_ratio),
            ("air_density", self.air_density),
            ("rotor_solidity", self.rotor_solidity),
            ("rotor_disc_area", self.rotor_disc_area),
            ("max_speed", self.max_speed),
            ("slot_seconds", self.slot_seconds),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("flight.{name} must be positive, got {v}")));
            }
        }
        if self.max_speed > self.tip_speed {
            return Err(Error::Config(format!(
                "flight.max_speed {} exceeds rotor tip speed {}",
                self.max_speed, self.tip_speed
            )));
        }
        Ok(())
    }

    /// Parasite-drag coefficient: the factor multiplying v^2 in the
    /// per-meter energy.
    pub fn parasite_coefficient(&self) -> f64 {
        0.5 * self.fuselage_drag_ratio * self.air_density * self.rotor_solidity * self.rotor_disc_area
    }
}

pub fn travel_distance(a: Coordinate, b: Coordinate) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Speed needed to cover `distance` in one slot.
pub fn flight_speed(distance: f64, params: &FlightParams) -> Result<f64> {
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(Error::Domain(format!("distance {distance} must be non-negative")));
    }
    let v = distance / params.slot_seconds;
    if v > params.max_speed {
        return Err(Error::Config(format!(
            "a {distance:.1} m hop needs {v:.2} m/s, above the {} m/s limit; region too large for the slot length",
            params.max_speed
        )));
    }
    Ok(v)
}

/// Energy consumed per meter of level flight at speed `v`, J/m.
///
/// Sum of the blade-profile term, the induced-power term and the
/// parasite-drag term of the rotary-wing model.
pub fn power_per_meter(v: f64, params: &FlightParams) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("speed {v} must be positive")));
    }
    let v0 = params.tip_speed;
    let v1 = params.hover_induced_velocity;
    let blade = params.blade_profile_power * (1.0 / v + 3.0 * v / (v0 * v0));
    let v1_sq = v1 * v1;
    let inner = (v.powi(-4) + 1.0 / (4.0 * v1_sq * v1_sq)).sqrt() - 1.0 / (2.0 * v1_sq);
    let induced = params.induced_power * inner.max(0.0).sqrt();
    let parasite = params.parasite_coefficient() * v * v;
    Ok(blade + induced + parasite)
}

/// Energy for one hop between two points. A zero-length hop costs nothing:
/// the UAV stays landed.
pub fn travel_energy(a: Coordinate, b: Coordinate, params: &FlightParams) -> f64 {
    let d = travel_distance(a, b);
    if d == 0.0 {
        return 0.0;
    }
    let v = d / params.slot_seconds;
    power_per_meter(v, params).expect("positive speed for a nonzero hop") * d
}
