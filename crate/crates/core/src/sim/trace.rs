//! Per-tick trace rows and the JSON Lines side files written next to them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::footstep::FootEvent;
use crate::geometry::WorldConfig;
use crate::mission::TransitionRecord;
use crate::perception::MeasurementRecord;

pub const TRACE_HEADER: &str =
    "tick,node,layer,x,y,yaw,vx,vy,h1,h2,filter,fl_x,fl_y,fr_x,fr_y,bl_x,bl_y,br_x,br_y,swing,zone";

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TRANSITIONS_FILE: &str = "transitions.jsonl";
pub const PERCEPTION_FILE: &str = "perception.jsonl";
pub const WORLD_FILE: &str = "world.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub node: String,
    pub layer: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub h1: f64,
    pub h2: f64,
    pub filter: u8,
    pub fl_x: f64,
    pub fl_y: f64,
    pub fr_x: f64,
    pub fr_y: f64,
    pub bl_x: f64,
    pub bl_y: f64,
    pub br_x: f64,
    pub br_y: f64,
    pub swing: String,
    pub zone: String,
}

impl TraceRecord {
    pub fn feet(&self) -> [[f64; 2]; 4] {
        [
            [self.fl_x, self.fl_y],
            [self.fr_x, self.fr_y],
            [self.bl_x, self.bl_y],
            [self.br_x, self.br_y],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum SimEvent {
    Foot {
        tick: u64,
        layer: usize,
        #[serde(flatten)]
        foot: FootEventRecord,
    },
    Perception {
        tick: u64,
        layer: usize,
        outcome: String,
        detail: String,
    },
    ContactPlan {
        tick: u64,
        node: String,
        pattern: Vec<Vec<i64>>,
        objective: f64,
        com_guard: bool,
    },
    Transition {
        tick: u64,
        from_layer: usize,
        outcome: String,
    },
}

/// Owned, deserializable mirror of [`FootEvent`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootEventRecord {
    pub kind: String,
    pub leg: String,
    pub position: [f64; 2],
    pub nominal: [f64; 2],
    pub reason: String,
}

impl From<&FootEvent> for FootEventRecord {
    fn from(e: &FootEvent) -> Self {
        let tag = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        Self {
            kind: tag(serde_json::to_value(e.kind).unwrap_or_default()),
            leg: e.leg.name().to_string(),
            position: e.position,
            nominal: e.nominal,
            reason: tag(serde_json::to_value(e.reason).unwrap_or_default()),
        }
    }
}

/// World geometry used while planning: the configured truth plus every
/// perceived replacement with the tick it took effect.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldRecord {
    pub truth: WorldConfig,
    pub planning: Vec<PlanningWorld>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanningWorld {
    pub tick: u64,
    pub world: WorldConfig,
}

impl WorldRecord {
    /// Planning world in effect at `tick`.
    pub fn at(&self, tick: u64) -> &WorldConfig {
        self.planning
            .iter()
            .rev()
            .find(|p| p.tick <= tick)
            .map(|p| &p.world)
            .unwrap_or(&self.truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub final_node: String,
    pub halt_reason: Option<String>,
    pub ticks: u64,
    pub sim_time: f64,
    pub start_layer: usize,
    pub final_layer: usize,
    pub layer_changes: usize,
    pub footholds: usize,
    pub transitions: usize,
    pub min_h1_filter: Option<f64>,
    pub min_h2_filter: Option<f64>,
}

fn jsonl<T: Serialize>(w: &mut impl Write, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Streams every output file of a run into one directory.
pub struct TraceWriter {
    trace: csv::Writer<BufWriter<File>>,
    events: BufWriter<File>,
    transitions: BufWriter<File>,
    perception: BufWriter<File>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("trace csv: {other:?}")),
    }
}

impl TraceWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        Ok(Self {
            trace: csv::Writer::from_writer(open(TRACE_FILE)?),
            events: open(EVENTS_FILE)?,
            transitions: open(TRANSITIONS_FILE)?,
            perception: open(PERCEPTION_FILE)?,
        })
    }

    pub fn row(&mut self, r: &TraceRecord) -> Result<()> {
        self.trace.serialize(r).map_err(csv_err)
    }

    pub fn event(&mut self, e: &SimEvent) -> Result<()> {
        jsonl(&mut self.events, e)
    }

    pub fn transition(&mut self, t: &TransitionRecord) -> Result<()> {
        jsonl(&mut self.transitions, t)
    }

    pub fn measurement(&mut self, m: &MeasurementRecord) -> Result<()> {
        jsonl(&mut self.perception, m)
    }

    pub fn finish(mut self, dir: &Path, world: &WorldRecord, summary: &Summary) -> Result<()> {
        self.trace.flush()?;
        self.events.flush()?;
        self.transitions.flush()?;
        self.perception.flush()?;
        std::fs::write(dir.join(WORLD_FILE), serde_json::to_string_pretty(world)? + "\n")?;
        std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(summary)? + "\n")?;
        Ok(())
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(Error::Config(format!("unexpected trace header {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
