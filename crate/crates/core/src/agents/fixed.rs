use super::AgentConfig;
use crate::env::{Action, Observation};

/// Non-adaptive controller: switches once the current phase has been green
/// for `fixed_time_green` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTimeAgent {
    config: AgentConfig,
}

impl FixedTimeAgent {
    pub fn new(config: AgentConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn act(&self, obs: &Observation) -> Action {
        if obs.phase_time >= self.config.fixed_time_green {
            Action::Switch
        } else {
            Action::Keep
        }
    }
}
