//! Minimax time-to-capture on a grid for the fully observable pursuit game
//! in relative coordinates with velocity-controlled (single-integrator)
//! players.
//!
//! The relative state is `r = evader - pursuer`; one step of length `dt`
//! maps it to `r + dt * (v_e * u_e - v_p * u_p)`, clamped to the grid box.
//! The Bellman update lets the pursuer commit first:
//! `V'(s) = dt + min_{u_p} max_{u_e} V(f(s, u_p, u_e))`, with multilinear
//! interpolation between nodes.

use std::io::Write;

use pposg_nn::{Checkpoint, Tensor};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stand-in for an infinite time to capture.
pub const SENTINEL: f64 = 1e6;

/// One grid axis: `nodes` evenly spaced points covering `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Axis {
    /// Axis `[-half, half]` with the given spacing; `2 * half / cell` must be
    /// (close to) an integer.
    pub fn symmetric(half: f64, cell: f64) -> Self {
        let nodes = (2.0 * half / cell).round() as usize + 1;
        Self {
            min: -half,
            max: half,
            nodes,
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }
}

/// Discretized game: relative-state box, action sets, speeds, step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameGrid {
    pub axes: Vec<Axis>,
    /// Unit-magnitude (or zero) directions; index 0 should be the zero action.
    pub pursuer_actions: Vec<Vec<f64>>,
    pub evader_actions: Vec<Vec<f64>>,
    pub pursuer_speed: f64,
    pub evader_speed: f64,
    pub dt: f64,
    pub capture_radius: f64,
    /// Stop once `iterations * dt` exceeds this many seconds.
    pub horizon: f64,
}

/// Zero plus the eight compass directions at unit magnitude.
pub fn compass_actions() -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0, 0.0]];
    for k in 0..8 {
        let a = k as f64 * std::f64::consts::FRAC_PI_4;
        // Snap so axis-aligned moves are exact.
        let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
        out.push(vec![snap(a.cos()), snap(a.sin())]);
    }
    out
}

/// Zero, forward, backward on a line.
pub fn line_actions() -> Vec<Vec<f64>> {
    vec![vec![0.0], vec![1.0], vec![-1.0]]
}

impl GameGrid {
    /// Planar relative game on `[-half, half]^2` with compass actions.
    pub fn planar(
        half: f64,
        cell: f64,
        pursuer_speed: f64,
        evader_speed: f64,
        dt: f64,
        capture_radius: f64,
    ) -> Self {
        let axis = Axis::symmetric(half, cell);
        Self {
            axes: vec![axis, axis],
            pursuer_actions: compass_actions(),
            evader_actions: compass_actions(),
            pursuer_speed,
            evader_speed,
            dt,
            capture_radius,
            horizon: default_horizon(half, pursuer_speed, evader_speed),
        }
    }

    /// Head-on game along a line on `[-half, half]`.
    pub fn line(
        half: f64,
        cell: f64,
        pursuer_speed: f64,
        evader_speed: f64,
        dt: f64,
        capture_radius: f64,
    ) -> Self {
        Self {
            axes: vec![Axis::symmetric(half, cell)],
            pursuer_actions: line_actions(),
            evader_actions: line_actions(),
            pursuer_speed,
            evader_speed,
            dt,
            capture_radius,
            horizon: default_horizon(half, pursuer_speed, evader_speed),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("game grid: {m}")));
        if self.axes.is_empty() || self.axes.len() > 3 {
            return bad("1 to 3 axes supported");
        }
        if self.axes.iter().any(|a| a.nodes < 2 || !(a.min < a.max)) {
            return bad("each axis needs at least 2 nodes and min < max");
        }
        for set in [&self.pursuer_actions, &self.evader_actions] {
            if set.is_empty() || set.iter().any(|u| u.len() != self.dim()) {
                return bad("action sets must be non-empty with one entry per axis");
            }
            if !set.iter().any(|u| u.iter().all(|&x| x == 0.0)) {
                return bad("action sets must contain the zero action");
            }
        }
        if !(self.dt > 0.0 && self.capture_radius >= 0.0 && self.horizon > 0.0) {
            return bad("dt and horizon must be positive, capture radius non-negative");
        }
        if !(self.pursuer_speed >= 0.0 && self.evader_speed >= 0.0) {
            return bad("speeds must be non-negative");
        }
        Ok(())
    }

    /// Relative state after one step, clamped to the box.
    pub fn successor(&self, s: &[f64], up: &[f64], ue: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(up.iter().zip(ue))
            .zip(&self.axes)
            .map(|((x, (p, e)), ax)| {
                (x + self.dt * (self.evader_speed * e - self.pursuer_speed * p))
                    .clamp(ax.min, ax.max)
            })
            .collect()
    }

    fn node_coords(&self, mut flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let n = self.axes[d].nodes;
            out[d] = self.axes[d].coord(flat % n);
            flat /= n;
        }
        out
    }

    fn is_capture(&self, s: &[f64]) -> bool {
        s.iter().map(|x| x * x).sum::<f64>().sqrt() <= self.capture_radius
    }
}

fn default_horizon(half: f64, vp: f64, ve: f64) -> f64 {
    let closing = (vp - ve).max(1e-3);
    // Long enough for any capturable start inside the box.
    2.0 * half * std::f64::consts::SQRT_2 / closing + 1.0
}

/// Multilinear interpolation weights of a point: `(flat node index, weight)`.
fn stencil(axes: &[Axis], x: &[f64]) -> Vec<(usize, f64)> {
    let mut out = vec![(0usize, 1.0f64)];
    for (ax, &xi) in axes.iter().zip(x) {
        let h = ax.spacing();
        let t = ((xi.clamp(ax.min, ax.max) - ax.min) / h).max(0.0);
        let i = (t.floor() as usize).min(ax.nodes - 2);
        let f = (t - i as f64).clamp(0.0, 1.0);
        let mut next = Vec::with_capacity(out.len() * 2);
        for (idx, w) in out {
            next.push((idx * ax.nodes + i, w * (1.0 - f)));
            next.push((idx * ax.nodes + i + 1, w * f));
        }
        out = next;
    }
    out
}

/// Interpolates `values`. Sentinel nodes blend in like any other value, so
/// unsolved neighbours pull the estimate up until the front reaches them.
fn interp(values: &[f64], st: &[(usize, f64)]) -> f64 {
    st.iter().map(|&(i, w)| w * values[i]).sum()
}

/// Solved time-to-capture grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub grid: GameGrid,
    /// Seconds to capture per node; anything past the horizon means escape.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// False when the horizon ran out before the update settled.
    pub converged: bool,
    /// Largest per-sweep change at the final iteration.
    pub last_change: f64,
}

/// Per-sweep monitor: called with the iteration number and the largest
/// increase of any node (positive means monotonicity broke).
pub type SweepObserver<'a> = &'a mut dyn FnMut(usize, f64);

/// Backward induction from `V = 0` on the capture set and the sentinel
/// elsewhere.
pub fn value_iteration(grid: &GameGrid) -> Result<ValueGrid> {
    value_iteration_observed(grid, &mut |_, _| {})
}

pub fn value_iteration_observed(grid: &GameGrid, observe: SweepObserver<'_>) -> Result<ValueGrid> {
    grid.validate()?;
    let n = grid.node_count();
    let coords: Vec<Vec<f64>> = (0..n).map(|i| grid.node_coords(i)).collect();
    let capture: Vec<bool> = coords.iter().map(|c| grid.is_capture(c)).collect();
    // Stencils depend only on (node, u_p, u_e); compute once.
    let (np, ne) = (grid.pursuer_actions.len(), grid.evader_actions.len());
    let mut stencils = Vec::with_capacity(n * np * ne);
    for c in &coords {
        for up in &grid.pursuer_actions {
            for ue in &grid.evader_actions {
                stencils.push(stencil(&grid.axes, &grid.successor(c, up, ue)));
            }
        }
    }
    let mut v: Vec<f64> = capture
        .iter()
        .map(|&c| if c { 0.0 } else { SENTINEL })
        .collect();
    let mut next = v.clone();
    let tol = 1e-6 * grid.dt;
    let max_iter = (grid.horizon / grid.dt).ceil() as usize;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        change = 0.0;
        let mut rise = f64::NEG_INFINITY;
        for s in 0..n {
            if capture[s] {
                next[s] = 0.0;
                continue;
            }
            let base = s * np * ne;
            let mut best = f64::INFINITY;
            for p in 0..np {
                let mut worst = f64::NEG_INFINITY;
                for e in 0..ne {
                    worst = worst.max(interp(&v, &stencils[base + p * ne + e]));
                }
                best = best.min(worst);
            }
            let val = (grid.dt + best).min(SENTINEL);
            rise = rise.max(val - v[s]);
            change = change.max((val - v[s]).abs());
            next[s] = val;
        }
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        observe(iterations, rise);
        if change < tol {
            break;
        }
    }
    let converged = change < tol;
    if !converged {
        log::warn!("value iteration stopped at the horizon after {iterations} sweeps (last change {change})");
    }
    Ok(ValueGrid {
        grid: grid.clone(),
        values: v,
        iterations,
        converged,
        last_change: change,
    })
}

/// Equilibrium actions at a state, as indices into the grid's action sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyChoice {
    pub pursuer: usize,
    pub evader: usize,
}

impl ValueGrid {
    /// Interpolated time to capture; `f64::INFINITY` in the escape region.
    pub fn value_at(&self, s: &[f64]) -> f64 {
        if self.grid.is_capture(s) {
            return 0.0;
        }
        let v = interp(&self.values, &stencil(&self.grid.axes, s));
        if self.escapes(v) {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Values past the horizon cannot be capture times.
    fn escapes(&self, v: f64) -> bool {
        v > self.grid.horizon
    }

    fn lookahead(&self, s: &[f64], up: &[f64], ue: &[f64]) -> f64 {
        let next = self.grid.successor(s, up, ue);
        if self.grid.is_capture(&next) {
            return 0.0;
        }
        interp(&self.values, &stencil(&self.grid.axes, &next))
    }

    /// Pursuer minimizes the worst case one step ahead; the evader then best
    /// responds. Ties go to the zero action, then the lowest index.
    pub fn extract_policy(&self, s: &[f64]) -> PolicyChoice {
        let g = &self.grid;
        let order = |set: &[Vec<f64>]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..set.len()).collect();
            idx.sort_by_key(|&i| (!set[i].iter().all(|&x| x == 0.0), i));
            idx
        };
        let p_order = order(&g.pursuer_actions);
        let e_order = order(&g.evader_actions);
        let best_response = |p: usize| -> (usize, f64) {
            let mut best = (e_order[0], f64::NEG_INFINITY);
            for &e in &e_order {
                let v = self.lookahead(s, &g.pursuer_actions[p], &g.evader_actions[e]);
                if v > best.1 {
                    best = (e, v);
                }
            }
            best
        };
        let mut choice = (p_order[0], best_response(p_order[0]));
        for &p in &p_order[1..] {
            let r = best_response(p);
            if r.1 < choice.1 .1 {
                choice = (p, r);
            }
        }
        PolicyChoice {
            pursuer: choice.0,
            evader: choice.1 .0,
        }
    }

    /// Largest gap between the pursuer-first (min-max) and evader-first
    /// (max-min) one-step values over non-sentinel nodes.
    pub fn minmax_gap(&self) -> f64 {
        let g = &self.grid;
        let mut gap: f64 = 0.0;
        for s in 0..self.values.len() {
            let c = g.node_coords(s);
            if g.is_capture(&c) || self.escapes(self.values[s]) {
                continue;
            }
            let table: Vec<Vec<f64>> = g
                .pursuer_actions
                .iter()
                .map(|up| {
                    g.evader_actions
                        .iter()
                        .map(|ue| self.lookahead(&c, up, ue))
                        .collect()
                })
                .collect();
            let minmax = table
                .iter()
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min);
            let maxmin = (0..g.evader_actions.len())
                .map(|e| table.iter().map(|row| row[e]).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            if !self.escapes(minmax) {
                gap = gap.max(minmax - maxmin);
            }
        }
        gap
    }

    /// Values as a checkpoint: tensor `value` shaped by the axes, grid
    /// descriptor in the metadata.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "grid": self.grid,
            "iterations": self.iterations,
            "converged": self.converged,
            "sentinel": SENTINEL,
        });
        let mut ck = Checkpoint::new(meta);
        let shape: Vec<usize> = self.grid.axes.iter().map(|a| a.nodes).collect();
        let data: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        ck.insert("value", Tensor::from_vec(&shape, data)?);
        Ok(ck)
    }

    /// CSV of the slice through the origin along the first axis (and, for
    /// planar grids, every node when `full` is set).
    pub fn write_csv<W: Write>(&self, out: &mut W, full: bool) -> Result<()> {
        let g = &self.grid;
        let names = ["x", "y", "z"];
        writeln!(out, "{},value", names[..g.dim()].join(","))?;
        for s in 0..self.values.len() {
            let c = g.node_coords(s);
            if !full && c[1..].iter().any(|x| x.abs() > 1e-9) {
                continue;
            }
            let v = self.values[s];
            let cells: Vec<String> = c.iter().map(|x| format!("{x:.6}")).collect();
            if self.escapes(v) {
                writeln!(out, "{},inf", cells.join(","))?;
            } else {
                writeln!(out, "{},{v:.6}", cells.join(","))?;
            }
        }
        Ok(())
    }
}

/// Closed-form head-on capture time for simple motion.
pub fn analytic_capture_time(gap: f64, pursuer_speed: f64, evader_speed: f64, radius: f64) -> f64 {
    if gap <= radius {
        0.0
    } else if pursuer_speed > evader_speed {
        (gap - radius) / (pursuer_speed - evader_speed)
    } else {
        f64::INFINITY
    }
}
