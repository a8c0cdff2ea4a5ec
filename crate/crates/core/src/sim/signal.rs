use serde::{Deserialize, Serialize};

use super::{Axis, SimConfig};

/// The two green phases of the signal. Amber is tracked separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    NsGreen,
    EwGreen,
}

impl Phase {
    pub fn axis(self) -> Axis {
        match self {
            Phase::NsGreen => Axis::NorthSouth,
            Phase::EwGreen => Axis::EastWest,
        }
    }

    pub fn opposite(self) -> Phase {
        match self {
            Phase::NsGreen => Phase::EwGreen,
            Phase::EwGreen => Phase::NsGreen,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Phase::NsGreen => 0,
            Phase::EwGreen => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalCommand {
    Keep,
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalState {
    /// Green phase currently shown, or the one being left while in amber.
    pub phase: Phase,
    pub in_amber: bool,
    /// Seconds since this phase was entered. Keeps counting through amber.
    pub phase_elapsed: f64,
    /// Seconds since amber was entered, zero outside amber.
    pub amber_elapsed: f64,
}

impl Default for SignalState {
    fn default() -> Self {
        Self {
            phase: Phase::NsGreen,
            in_amber: false,
            phase_elapsed: 0.0,
            amber_elapsed: 0.0,
        }
    }
}

impl SignalState {
    /// Whether vehicles on `axis` may cross the stop line.
    pub fn is_green(&self, axis: Axis) -> bool {
        !self.in_amber && self.phase.axis() == axis
    }

    /// Advances the signal by one time step under `command`.
    ///
    /// Amber ignores commands and completes on its own; a switch request is
    /// honoured only once the current green has lasted `min_green`.
    pub fn step(&mut self, command: SignalCommand, config: &SimConfig) {
        let dt = config.time_step;
        if self.in_amber {
            self.amber_elapsed += dt;
            self.phase_elapsed += dt;
            if self.amber_elapsed >= config.amber_duration {
                self.phase = self.phase.opposite();
                self.in_amber = false;
                self.phase_elapsed = 0.0;
                self.amber_elapsed = 0.0;
            }
        } else if command == SignalCommand::Switch && self.phase_elapsed >= config.min_green {
            self.in_amber = true;
            self.amber_elapsed = 0.0;
        } else {
            self.phase_elapsed += dt;
        }
    }
}
