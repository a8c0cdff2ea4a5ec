use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Named car-flow presets. They differ only in per-approach arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sparse,
    Medium,
    Dense,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Sparse, Scenario::Medium, Scenario::Dense];

    /// Arrivals per second on each of the four approaches.
    pub fn arrival_rate(self) -> f64 {
        match self {
            Scenario::Sparse => 0.02,
            Scenario::Medium => 0.10,
            Scenario::Dense => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Sparse => "sparse",
            Scenario::Medium => "medium",
            Scenario::Dense => "dense",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_prefix("simple-").unwrap_or(&key);
        match key {
            "sparse" => Ok(Scenario::Sparse),
            "medium" => Ok(Scenario::Medium),
            "dense" => Ok(Scenario::Dense),
            _ => Err(ConfigError::UnknownScenario(s.to_string())),
        }
    }
}

/// Physical and stochastic parameters of the simulated intersection.
///
/// Every field has a default, so a config file may name any subset of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Approach length from entrance to stop line (m).
    pub lane_length: f64,
    pub vmax_default: f64,
    pub accel: f64,
    /// Comfortable deceleration used by the safe-speed rule (m/s²).
    pub decel: f64,
    pub vehicle_length: f64,
    pub min_gap: f64,
    pub amber_duration: f64,
    pub min_green: f64,
    pub time_step: f64,
    /// Poisson arrival rate per approach (veh/s).
    pub arrival_rate: f64,
    pub detection_rate: f64,
    pub wait_speed_threshold: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            lane_length: 150.0,
            vmax_default: 13.89,
            accel: 2.0,
            decel: 4.5,
            vehicle_length: 5.0,
            min_gap: 2.5,
            amber_duration: 4.0,
            min_green: 5.0,
            time_step: 1.0,
            arrival_rate: Scenario::Medium.arrival_rate(),
            detection_rate: 1.0,
            wait_speed_threshold: 0.1,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn preset(scenario: Scenario) -> Self {
        Self {
            arrival_rate: scenario.arrival_rate(),
            ..Self::default()
        }
    }

    /// Space one queued vehicle occupies on an approach.
    pub fn vehicle_spacing(&self) -> f64 {
        self.vehicle_length + self.min_gap
    }

    /// Number of vehicles that fit on one approach when queued bumper to bumper.
    pub fn lane_capacity(&self) -> usize {
        (self.lane_length / self.vehicle_spacing()).floor() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("lane_length", self.lane_length),
            ("vmax_default", self.vmax_default),
            ("accel", self.accel),
            ("decel", self.decel),
            ("vehicle_length", self.vehicle_length),
            ("min_gap", self.min_gap),
            ("amber_duration", self.amber_duration),
            ("min_green", self.min_green),
            ("time_step", self.time_step),
            ("wait_speed_threshold", self.wait_speed_threshold),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, format!("must be > 0, got {value}")));
            }
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(ConfigError::invalid(
                "arrival_rate",
                format!("must be >= 0, got {}", self.arrival_rate),
            ));
        }
        if !(0.0..=1.0).contains(&self.detection_rate) {
            return Err(ConfigError::invalid(
                "detection_rate",
                format!("must lie in [0, 1], got {}", self.detection_rate),
            ));
        }
        if self.lane_capacity() == 0 {
            return Err(ConfigError::invalid("lane_length", "shorter than one vehicle spacing"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_vary_only_flow() {
        let sparse = SimConfig::preset(Scenario::Sparse);
        let medium = SimConfig::preset(Scenario::Medium);
        let dense = SimConfig::preset(Scenario::Dense);
        assert_eq!(sparse.arrival_rate, 0.02);
        assert_eq!(medium.arrival_rate, 0.10);
        assert_eq!(dense.arrival_rate, 0.25);
        for cfg in [&medium, &dense] {
            assert_eq!(
                SimConfig { arrival_rate: sparse.arrival_rate, ..cfg.clone() },
                sparse
            );
        }
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("simple-dense".parse::<Scenario>().unwrap(), Scenario::Dense);
        assert_eq!("Medium".parse::<Scenario>().unwrap(), Scenario::Medium);
        assert!("rush".parse::<Scenario>().is_err());
    }

    #[test]
    fn default_lane_capacity() {
        assert_eq!(SimConfig::default().lane_capacity(), 20);
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = SimConfig { detection_rate: 1.5, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { time_step: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }
}
