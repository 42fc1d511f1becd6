use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::footstep::GaitParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fault {
    /// The transition leaving `layer` reports failure when playback ends.
    TransitionFailure { layer: usize },
}

impl FromStr for Fault {
    type Err = Error;

    /// Parses `transition-failure@LAYER`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown fault {s:?}, expected transition-failure@LAYER"));
        let (kind, layer) = s.split_once('@').ok_or_else(bad)?;
        match kind {
            "transition-failure" => Ok(Fault::TransitionFailure {
                layer: layer.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::TransitionFailure { layer } => write!(f, "transition-failure@{layer}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Tick budget; the run halts when it is exhausted.
    pub max_ticks: u64,
    pub seed: u64,
    pub noise_sigma: f64,
    /// First-order lag on the applied base velocity.
    pub lag: bool,
    pub lag_time_constant: f64,
    pub faults: Vec<Fault>,
    pub gait: GaitParams,
    pub gamma: [f64; 2],
    /// Height of the perception frame above the layer.
    pub camera_height: f64,
    /// Gait hold duration after which the planner is declared stuck.
    pub stuck_after: f64,
    /// Largest hip-to-stance-foot distance; the base command is scaled down
    /// so that no stance foot ends a tick farther than this.
    pub stance_reach: f64,
    /// Shrink and sample count of the intermediate-motion CoM guard.
    pub com_shrink: f64,
    pub com_samples: usize,
    /// Optional paths, relative to the sim file, used by the CLI when the
    /// world or mission is not given on the command line.
    pub world: Option<String>,
    pub mission: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_ticks: 60_000,
            seed: 7,
            noise_sigma: 0.01,
            lag: false,
            lag_time_constant: 0.1,
            faults: Vec::new(),
            gait: GaitParams::default(),
            gamma: [1.0, 1.0],
            camera_height: 0.3,
            stuck_after: 20.0,
            stance_reach: 0.25,
            com_shrink: 0.02,
            com_samples: 21,
            world: None,
            mission: None,
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return err("dt must be positive");
        }
        if self.max_ticks == 0 {
            return err("max_ticks must be positive");
        }
        if !(self.noise_sigma >= 0.0) {
            return err("noise_sigma must be non-negative");
        }
        if self.lag && !(self.lag_time_constant > 0.0) {
            return err("lag_time_constant must be positive");
        }
        if !(self.gamma[0] > 0.0 && self.gamma[1] > 0.0) {
            return err("gamma must be positive");
        }
        if !(self.stance_reach >= self.gait.reach) {
            return err("stance_reach must be at least the gait reach");
        }
        if !(self.stuck_after > 0.0) || !(self.com_shrink >= 0.0) || self.com_samples < 2 {
            return err("stuck_after, com_shrink or com_samples out of range");
        }
        self.gait.validate()
    }

    pub fn transition_fails(&self, layer: usize) -> bool {
        self.faults
            .iter()
            .any(|f| matches!(f, Fault::TransitionFailure { layer: l } if *l == layer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_round_trip() {
        let f: Fault = "transition-failure@2".parse().unwrap();
        assert_eq!(f, Fault::TransitionFailure { layer: 2 });
        assert_eq!(f.to_string(), "transition-failure@2");
        assert!("transition-failure".parse::<Fault>().is_err());
        assert!("bogus@1".parse::<Fault>().is_err());
    }

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        let c: SimConfig =
            serde_json::from_str(r#"{"seed": 3, "faults": [{"kind": "transition-failure", "layer": 1}]}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.transition_fails(1));
        assert!(!c.transition_fails(2));
        assert!(serde_json::from_str::<SimConfig>(r#"{"dt": 0.0}"#)
            .unwrap()
            .validate()
            .is_err());
    }
}
