//! Prerecorded joint trajectories for transitions, stored as JSON knots.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKnot {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

/// Knots sorted by strictly increasing time, linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajectoryKnot>", into = "Vec<TrajectoryKnot>")]
pub struct JointTrajectory {
    knots: Vec<TrajectoryKnot>,
}

impl TryFrom<Vec<TrajectoryKnot>> for JointTrajectory {
    type Error = Error;

    fn try_from(knots: Vec<TrajectoryKnot>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<JointTrajectory> for Vec<TrajectoryKnot> {
    fn from(t: JointTrajectory) -> Self {
        t.knots
    }
}

impl JointTrajectory {
    pub fn new(knots: Vec<TrajectoryKnot>) -> Result<Self> {
        let Some(first) = knots.first() else {
            return Err(Error::Config("trajectory has no knots".into()));
        };
        let n = first.q.len();
        for k in &knots {
            if k.q.len() != n || k.qd.len() != n {
                return Err(Error::Config(format!("knot at t={} has inconsistent size", k.t)));
            }
            if !k.t.is_finite() || k.q.iter().chain(&k.qd).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("knot at t={} is not finite", k.t)));
            }
        }
        if knots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Config("knot times must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn knots(&self) -> &[TrajectoryKnot] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots[0].q.len()
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.knots[self.knots.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// `(q, qd)` at time `t`, held constant outside the knot range.
    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let k = &self.knots;
        let idx = k.partition_point(|knot| knot.t <= t);
        if idx == 0 {
            return (
                DVector::from_column_slice(&k[0].q),
                DVector::from_column_slice(&k[0].qd),
            );
        }
        if idx == k.len() {
            let last = &k[k.len() - 1];
            return (
                DVector::from_column_slice(&last.q),
                DVector::from_column_slice(&last.qd),
            );
        }
        let (a, b) = (&k[idx - 1], &k[idx]);
        let s = (t - a.t) / (b.t - a.t);
        let lerp = |x: &[f64], y: &[f64]| DVector::from_fn(x.len(), |i, _| x[i] + s * (y[i] - x[i]));
        (lerp(&a.q, &b.q), lerp(&a.qd, &b.qd))
    }
}
