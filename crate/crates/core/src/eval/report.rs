use std::io::Write;

use serde::{Deserialize, Serialize};

use super::matches::CaptureStats;
use super::ztest::{two_proportion_ztest, SIGNIFICANCE};
use crate::stamp::Stamp;
use crate::Result;

/// Pursuer-by-evader results. Rows are evaders, columns pursuers, as in the
/// printed tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub pursuers: Vec<String>,
    pub evaders: Vec<String>,
    /// `cells[evader][pursuer]`; `None` for pairs that were not played.
    pub cells: Vec<Vec<Option<CaptureStats>>>,
}

impl MatchTable {
    pub fn new(pursuers: Vec<String>, evaders: Vec<String>) -> Self {
        let cells = vec![vec![None; pursuers.len()]; evaders.len()];
        Self {
            pursuers,
            evaders,
            cells,
        }
    }

    pub fn get(&self, evader: usize, pursuer: usize) -> Option<&CaptureStats> {
        self.cells[evader][pursuer].as_ref()
    }

    pub fn set(&mut self, evader: usize, pursuer: usize, stats: CaptureStats) {
        self.cells[evader][pursuer] = Some(stats);
    }

    /// Per row, the pursuers whose capture rate is not significantly below
    /// the row's best.
    pub fn strongest(&self) -> Result<Vec<Vec<bool>>> {
        self.cells
            .iter()
            .map(|row| {
                let best = row
                    .iter()
                    .flatten()
                    .max_by(|a, b| a.rate.total_cmp(&b.rate))
                    .copied();
                row.iter()
                    .map(|cell| match (cell, best) {
                        (Some(c), Some(b)) => {
                            if c.episodes == 0 || b.episodes == 0 {
                                return Ok(false);
                            }
                            let t = two_proportion_ztest(
                                c.captures as u64,
                                c.episodes as u64,
                                b.captures as u64,
                                b.episodes as u64,
                            )?;
                            Ok(t.p > SIGNIFICANCE)
                        }
                        _ => Ok(false),
                    })
                    .collect()
            })
            .collect()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_field(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Writes the table as CSV (one line per played pair) and as a Markdown
/// grid in the layout `mean (σ=std) / rate`, bolding each row's
/// statistically tied strongest pursuers.
pub fn emit_report<C: Write, M: Write>(
    table: &MatchTable,
    stamp: Option<&Stamp>,
    csv: &mut C,
    md: &mut M,
) -> Result<()> {
    let bold = table.strongest()?;
    if let Some(s) = stamp {
        writeln!(csv, "{}", s.comment())?;
        writeln!(md, "<!-- {} -->", s.fields())?;
    }
    writeln!(
        csv,
        "evader,pursuer,episodes,captures,rate,timeout_rate,mean_time,std_time,strongest"
    )?;
    let mut header = String::from("| Evader |");
    let mut rule = String::from("|---|");
    for p in &table.pursuers {
        header.push_str(&format!(" {} |", md_field(p)));
        rule.push_str("---|");
    }
    writeln!(md, "{header}")?;
    writeln!(md, "{rule}")?;
    for (e, row) in table.cells.iter().enumerate() {
        let mut line = format!("| {} |", md_field(&table.evaders[e]));
        for (p, cell) in row.iter().enumerate() {
            match cell {
                Some(c) => {
                    writeln!(
                        csv,
                        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                        csv_field(&table.evaders[e]),
                        csv_field(&table.pursuers[p]),
                        c.episodes,
                        c.captures,
                        c.rate,
                        c.timeout_rate(),
                        c.mean_time,
                        c.std_time,
                        bold[e][p]
                    )?;
                    let text = format!("{:.2} (σ={:.2}) / {:.2}", c.mean_time, c.std_time, c.rate);
                    if bold[e][p] {
                        line.push_str(&format!(" **{text}** |"));
                    } else {
                        line.push_str(&format!(" {text} |"));
                    }
                }
                None => line.push_str(" - |"),
            }
        }
        writeln!(md, "{line}")?;
    }
    Ok(())
}
