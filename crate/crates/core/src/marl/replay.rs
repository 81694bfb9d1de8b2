use pposg_nn::Tensor;
use rand::Rng;

use crate::belief::HistoryWindow;
use crate::{Error, Result};

/// Joint transition. Index 0 is the pursuer, 1 the evader.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Actor inputs: stacked observations plus belief features.
    pub inputs: [Vec<f32>; 2],
    pub actions: [[f32; 2]; 2],
    pub rewards: [f32; 2],
    pub next_inputs: [Vec<f32>; 2],
    pub terminal: bool,
}

/// Minibatch as row-major tensors, one row per transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: [Tensor<f32>; 2],
    pub actions: [Tensor<f32>; 2],
    /// `n x 1` per agent.
    pub rewards: [Tensor<f32>; 2],
    pub next_inputs: [Tensor<f32>; 2],
    /// `n x 1`, 1 for terminal transitions.
    pub terminal: Tensor<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.terminal.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-capacity FIFO ring of transitions with flat storage.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    widths: [usize; 2],
    inputs: [Vec<f32>; 2],
    next_inputs: [Vec<f32>; 2],
    actions: Vec<f32>,
    rewards: Vec<f32>,
    terminal: Vec<f32>,
    len: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, widths: [usize; 2]) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            widths,
            inputs: [Vec::new(), Vec::new()],
            next_inputs: [Vec::new(), Vec::new()],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
            len: 0,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Slot the next push writes to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn widths(&self) -> [usize; 2] {
        self.widths
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        for i in 0..2 {
            if t.inputs[i].len() != self.widths[i] || t.next_inputs[i].len() != self.widths[i] {
                return Err(Error::Contract(format!(
                    "transition width {} / {} for agent {i}, buffer holds {}",
                    t.inputs[i].len(),
                    t.next_inputs[i].len(),
                    self.widths[i]
                )));
            }
        }
        let slot = self.cursor;
        let put = |store: &mut Vec<f32>, width: usize, row: &[f32]| {
            if slot * width == store.len() {
                store.extend_from_slice(row);
            } else {
                store[slot * width..(slot + 1) * width].copy_from_slice(row);
            }
        };
        for i in 0..2 {
            put(&mut self.inputs[i], self.widths[i], &t.inputs[i]);
            put(&mut self.next_inputs[i], self.widths[i], &t.next_inputs[i]);
        }
        let acts = [
            t.actions[0][0],
            t.actions[0][1],
            t.actions[1][0],
            t.actions[1][1],
        ];
        put(&mut self.actions, 4, &acts);
        put(&mut self.rewards, 2, &t.rewards);
        put(&mut self.terminal, 1, &[if t.terminal { 1.0 } else { 0.0 }]);
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition {
        let row = |v: &[f32], w: usize| v[i * w..(i + 1) * w].to_vec();
        let a = &self.actions[i * 4..i * 4 + 4];
        Transition {
            inputs: [
                row(&self.inputs[0], self.widths[0]),
                row(&self.inputs[1], self.widths[1]),
            ],
            actions: [[a[0], a[1]], [a[2], a[3]]],
            rewards: [self.rewards[2 * i], self.rewards[2 * i + 1]],
            next_inputs: [
                row(&self.next_inputs[0], self.widths[0]),
                row(&self.next_inputs[1], self.widths[1]),
            ],
            terminal: self.terminal[i] != 0.0,
        }
    }

    /// `n` slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.len)).collect()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let n = idx.len();
        let gather = |v: &[f32], w: usize| -> Result<Tensor<f32>> {
            let mut out = Vec::with_capacity(n * w);
            for &i in idx {
                out.extend_from_slice(&v[i * w..(i + 1) * w]);
            }
            Ok(Tensor::from_vec(&[n, w], out)?)
        };
        let col = |v: &[f32], w: usize, c: usize| -> Result<Tensor<f32>> {
            Ok(Tensor::from_vec(
                &[n, 1],
                idx.iter().map(|&i| v[i * w + c]).collect(),
            )?)
        };
        let acts = |agent: usize| -> Result<Tensor<f32>> {
            let mut out = Vec::with_capacity(2 * n);
            for &i in idx {
                out.extend_from_slice(&self.actions[i * 4 + 2 * agent..i * 4 + 2 * agent + 2]);
            }
            Ok(Tensor::from_vec(&[n, 2], out)?)
        };
        Ok(Batch {
            inputs: [
                gather(&self.inputs[0], self.widths[0])?,
                gather(&self.inputs[1], self.widths[1])?,
            ],
            actions: [acts(0)?, acts(1)?],
            rewards: [col(&self.rewards, 2, 0)?, col(&self.rewards, 2, 1)?],
            next_inputs: [
                gather(&self.next_inputs[0], self.widths[0])?,
                gather(&self.next_inputs[1], self.widths[1])?,
            ],
            terminal: col(&self.terminal, 1, 0)?,
        })
    }

    /// Stored rows as tensors, in slot order.
    pub fn to_tensors(&self) -> Result<Vec<(&'static str, Tensor<f32>)>> {
        let n = self.len;
        let t = |v: &[f32], w: usize| Tensor::from_vec(&[n, w], v.to_vec());
        Ok(vec![
            ("inputs.0", t(&self.inputs[0], self.widths[0])?),
            ("inputs.1", t(&self.inputs[1], self.widths[1])?),
            ("next_inputs.0", t(&self.next_inputs[0], self.widths[0])?),
            ("next_inputs.1", t(&self.next_inputs[1], self.widths[1])?),
            ("actions", t(&self.actions, 4)?),
            ("rewards", t(&self.rewards, 2)?),
            ("terminal", t(&self.terminal, 1)?),
        ])
    }

    /// Rebuilds a buffer from [`Self::to_tensors`] output.
    pub fn from_tensors(
        capacity: usize,
        widths: [usize; 2],
        cursor: usize,
        get: &dyn Fn(&str) -> Result<Tensor<f32>>,
    ) -> Result<Self> {
        let take = |name: &str, w: usize| -> Result<(Vec<f32>, usize)> {
            let t = get(name)?;
            if t.cols() != w {
                return Err(Error::Contract(format!(
                    "replay tensor {name} has width {}, expected {w}",
                    t.cols()
                )));
            }
            let rows = t.rows();
            Ok((t.into_data(), rows))
        };
        let (i0, len) = take("inputs.0", widths[0])?;
        let mut parts = Vec::new();
        for (name, w) in [
            ("inputs.1", widths[1]),
            ("next_inputs.0", widths[0]),
            ("next_inputs.1", widths[1]),
            ("actions", 4),
            ("rewards", 2),
            ("terminal", 1),
        ] {
            let (d, rows) = take(name, w)?;
            if rows != len {
                return Err(Error::Contract(format!(
                    "replay tensor {name} has {rows} rows, expected {len}"
                )));
            }
            parts.push(d);
        }
        if len > capacity || cursor >= capacity || (len < capacity && cursor != len) {
            return Err(Error::Contract(format!(
                "replay cursor {cursor} / length {len} / capacity {capacity}"
            )));
        }
        let mut it = parts.into_iter();
        let mut next = || it.next().expect("six parts");
        let i1 = next();
        let (n0, n1, actions, rewards, terminal) = (next(), next(), next(), next(), next());
        Ok(Self {
            capacity,
            widths,
            inputs: [i0, i1],
            next_inputs: [n0, n1],
            actions,
            rewards,
            terminal,
            len,
            cursor,
        })
    }
}

/// Per-agent ring of (history window, true opponent position) pairs for
/// supervised BiMDN training.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefBuffer {
    capacity: usize,
    windows: Vec<HistoryWindow>,
    targets: Vec<[f32; 2]>,
    cursor: usize,
}

impl BeliefBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            windows: Vec::new(),
            targets: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, window: HistoryWindow, target: [f32; 2]) {
        if self.windows.len() < self.capacity {
            self.windows.push(window);
            self.targets.push(target);
        } else {
            self.windows[self.cursor] = window;
            self.targets[self.cursor] = target;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> (Vec<&HistoryWindow>, Vec<[f32; 2]>) {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len())).collect();
        (
            idx.iter().map(|&i| &self.windows[i]).collect(),
            idx.iter().map(|&i| self.targets[i]).collect(),
        )
    }

    /// Windows zero-padded to a common length, their lengths, and targets.
    pub fn to_tensors(&self, width: usize, max_len: usize) -> Result<[Tensor<f32>; 3]> {
        let n = self.len();
        let mut data = vec![0.0f32; n * max_len * width];
        for (i, w) in self.windows.iter().enumerate() {
            if w.width != width || w.len > max_len {
                return Err(Error::Contract(
                    "belief window does not fit the buffer layout".into(),
                ));
            }
            data[i * max_len * width..i * max_len * width + w.data.len()].copy_from_slice(&w.data);
        }
        Ok([
            Tensor::from_vec(&[n, max_len * width], data)?,
            Tensor::from_vec(&[n, 1], self.windows.iter().map(|w| w.len as f32).collect())?,
            Tensor::from_vec(&[n, 2], self.targets.iter().flatten().copied().collect())?,
        ])
    }

    pub fn from_tensors(
        capacity: usize,
        cursor: usize,
        width: usize,
        parts: [&Tensor<f32>; 3],
    ) -> Result<Self> {
        let [data, lens, targets] = parts;
        let n = lens.rows();
        if data.rows() != n || targets.rows() != n || n > capacity || cursor >= capacity {
            return Err(Error::Contract("belief buffer tensors disagree".into()));
        }
        let stride = data.cols();
        let mut windows = Vec::with_capacity(n);
        for i in 0..n {
            let len = lens.row(i)[0] as usize;
            if len == 0 || len * width > stride {
                return Err(Error::Contract("belief window length out of range".into()));
            }
            windows.push(HistoryWindow {
                data: data.row(i)[..len * width].to_vec(),
                len,
                width,
            });
        }
        Ok(Self {
            capacity,
            windows,
            targets: (0..n)
                .map(|i| [targets.row(i)[0], targets.row(i)[1]])
                .collect(),
            cursor,
        })
    }
}
