use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::sim::{Bounds, MixtureRecord};
use crate::{Error, Result};

/// Smallest per-axis standard deviation admitted by the likelihood.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Diagonal Gaussian mixture over a 2-D position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub stds: Vec<[f64; 2]>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<[f64; 2]>, stds: Vec<[f64; 2]>) -> Result<Self> {
        let m = Self {
            weights,
            means,
            stds,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn single(mean: [f64; 2], std: [f64; 2]) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            stds: vec![std],
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stds.len() != k {
            return Err(Error::Contract(format!(
                "mixture needs matching non-empty components (weights {k}, means {}, stds {})",
                self.means.len(),
                self.stds.len()
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "weights {:?} are not on the simplex",
                self.weights
            )));
        }
        if self
            .stds
            .iter()
            .flatten()
            .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::Contract(
                "standard deviations must be positive".into(),
            ));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("mixture mean".into()));
        }
        Ok(())
    }

    /// Per-component log density `log N(x; M_k, diag(S_k^2))`.
    pub fn component_log_density(&self, k: usize, x: [f64; 2]) -> f64 {
        (0..2)
            .map(|a| {
                let s = self.stds[k][a].max(SIGMA_FLOOR);
                let z = (x[a] - self.means[k][a]) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// Negative log-likelihood of `x`, stabilized with log-sum-exp.
    pub fn nll(&self, x: [f64; 2]) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, x))
            .collect();
        -log_sum_exp(&terms)
    }

    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m[0] += w * mu[0];
            m[1] += w * mu[1];
        }
        m
    }

    /// Draws a component by weight, then each axis independently.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        self.sample_with_components(n, rng)
            .into_iter()
            .map(|(_, p)| p)
            .collect()
    }

    /// Like [`sample`](Self::sample), also returning the drawn component.
    pub fn sample_with_components<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Vec<(usize, [f64; 2])> {
        let pick = WeightedIndex::new(&self.weights).expect("validated weights");
        (0..n)
            .map(|_| {
                let k = pick.sample(rng);
                let p = std::array::from_fn(|a| {
                    let d = Normal::new(self.means[k][a], self.stds[k][a]).expect("positive std");
                    d.sample(rng)
                });
                (k, p)
            })
            .collect()
    }

    /// Maps a mixture in normalized `[-1, 1]` coordinates to workspace meters.
    pub fn denormalized(&self, bounds: &Bounds) -> Self {
        let (hx, hy) = bounds.half_extents();
        Self {
            weights: self.weights.clone(),
            means: self
                .means
                .iter()
                .map(|m| {
                    let (x, y) = bounds.denormalize(m[0], m[1]);
                    [x, y]
                })
                .collect(),
            stds: self.stds.iter().map(|s| [s[0] * hx, s[1] * hy]).collect(),
        }
    }

    pub fn to_record(&self) -> MixtureRecord {
        MixtureRecord {
            weights: self.weights.clone(),
            means: self.means.clone(),
            stds: self.stds.clone(),
        }
    }
}
