use std::collections::VecDeque;

use pposg_nn::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rolling record of the last `capacity` raw observations, read back every
/// `stride`-th frame counting from the newest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationHistory {
    frames: VecDeque<Vec<f32>>,
    width: usize,
    capacity: usize,
    stride: usize,
}

/// Downsampled frames ordered oldest to newest, `len * width` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub data: Vec<f32>,
    pub len: usize,
    pub width: usize,
}

impl HistoryWindow {
    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn last(&self) -> &[f32] {
        self.frame(self.len - 1)
    }
}

impl ObservationHistory {
    /// 200 frames downsampled by 10.
    pub fn standard(width: usize) -> Self {
        Self::new(width, 200, 10)
    }

    pub fn new(width: usize, capacity: usize, stride: usize) -> Self {
        assert!(width > 0 && capacity > 0 && stride > 0);
        Self {
            frames: VecDeque::with_capacity(capacity),
            width,
            capacity,
            stride,
        }
    }

    /// Most frames a window can hold.
    pub fn max_len(&self) -> usize {
        self.capacity.div_ceil(self.stride)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, obs: &[f32]) {
        assert_eq!(obs.len(), self.width, "history frame width");
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(obs.to_vec());
    }

    /// Frames at offsets `0, stride, 2*stride, ...` back from the newest,
    /// returned oldest first.
    pub fn window(&self) -> Result<HistoryWindow> {
        let n = self.frames.len();
        if n == 0 {
            return Err(Error::Contract(
                "history window requested before any observation".into(),
            ));
        }
        let len = ((n - 1) / self.stride + 1).min(self.max_len());
        let mut data = Vec::with_capacity(len * self.width);
        for j in (0..len).rev() {
            data.extend_from_slice(&self.frames[n - 1 - j * self.stride]);
        }
        Ok(HistoryWindow {
            data,
            len,
            width: self.width,
        })
    }
}

/// Packs windows into a time-major `L*B x width` tensor, zero-padding each
/// window after its last valid frame. Returns the tensor and lengths.
pub fn pack_windows<F: Scalar>(windows: &[&HistoryWindow]) -> Result<(Tensor<F>, Vec<usize>)> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Contract("empty window batch".into()))?;
    let width = first.width;
    let steps = windows.iter().map(|w| w.len).max().unwrap_or(0);
    if steps == 0 || windows.iter().any(|w| w.width != width || w.len == 0) {
        return Err(Error::Contract(
            "windows must be non-empty with equal widths".into(),
        ));
    }
    let b = windows.len();
    let mut data = vec![F::zero(); steps * b * width];
    for (i, w) in windows.iter().enumerate() {
        for t in 0..w.len {
            let dst = &mut data[(t * b + i) * width..(t * b + i + 1) * width];
            for (d, &s) in dst.iter_mut().zip(w.frame(t)) {
                *d = F::lit(s as f64);
            }
        }
    }
    let lengths = windows.iter().map(|w| w.len).collect();
    Ok((Tensor::from_vec(&[steps * b, width], data)?, lengths))
}
