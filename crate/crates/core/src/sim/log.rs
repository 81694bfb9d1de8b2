use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::dynamics::{Action, AgentState};
use super::env::TerminalCause;
use crate::Result;

/// Belief overlay as plain arrays: weights `K`, means and stddevs `K x 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub stds: Vec<[f64; 2]>,
}

/// One line of a trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: u32,
    pub pursuer: AgentState,
    pub evader: AgentState,
    pub actions: [Action; 2],
    pub rewards: [f64; 2],
    pub visible: [bool; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub terminal: Option<TerminalCause>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub belief: Option<MixtureRecord>,
}

pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses one record per line; blank lines and `#` comments are skipped.
pub fn read_trajectory(input: impl BufRead) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() && !line.starts_with('#') {
            out.push(serde_json::from_str(line)?);
        }
    }
    Ok(out)
}
