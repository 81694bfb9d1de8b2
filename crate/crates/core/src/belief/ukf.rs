//! Unscented Kalman filter over the opponent's position and velocity with
//! a constant-velocity motion model and a direct state measurement.

use serde::{Deserialize, Serialize};

pub const N: usize = 4;
type Vec4 = [f64; N];
type Mat4 = [[f64; N]; N];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Isotropic process noise variance.
    pub process_noise: f64,
    /// Isotropic measurement noise variance.
    pub measurement_noise: f64,
    /// Isotropic initial covariance.
    pub initial_cov: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            kappa: 1.0,
            process_noise: 0.1,
            measurement_noise: 0.1,
            initial_cov: 0.1,
        }
    }
}

impl UkfParams {
    /// `alpha^2 (n + kappa) - n`.
    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (N as f64 + self.kappa) - N as f64
    }

    pub fn sigma_point_count(&self) -> usize {
        2 * N + 1
    }

    /// Mean and covariance weights of the sigma points.
    pub fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.lambda();
        let c = N as f64 + l;
        let mut wm = vec![0.5 / c; 2 * N + 1];
        let mut wc = wm.clone();
        wm[0] = l / c;
        wc[0] = l / c + (1.0 - self.alpha * self.alpha + self.beta);
        (wm, wc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UkfBelief {
    pub mean: Vec4,
    pub cov: Mat4,
}

/// Result of one filter step. `reinitialized` reports that the covariance
/// lost positive definiteness and was reset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UkfStep {
    pub belief: UkfBelief,
    pub reinitialized: bool,
}

fn diag(v: f64) -> Mat4 {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = v;
    }
    m
}

/// Lower Cholesky factor, or `None` when not positive definite.
pub fn cholesky(a: &Mat4) -> Option<Mat4> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
fn spd_solve(a: &Mat4, b: &Mat4) -> Option<Mat4> {
    let l = cholesky(a)?;
    let mut x = [[0.0; N]; N];
    for col in 0..N {
        let mut y = [0.0; N];
        for i in 0..N {
            let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = (b[i][col] - s) / l[i][i];
        }
        for i in (0..N).rev() {
            let s: f64 = (i + 1..N).map(|k| l[k][i] * x[k][col]).sum();
            x[i][col] = (y[i] - s) / l[i][i];
        }
    }
    Some(x)
}

fn symmetrize(m: &mut Mat4) {
    for i in 0..N {
        for j in 0..i {
            let v = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
}

fn transition(x: &Vec4, dt: f64) -> Vec4 {
    [x[0] + dt * x[2], x[1] + dt * x[3], x[2], x[3]]
}

impl UkfBelief {
    pub fn new(mean: Vec4, params: &UkfParams) -> Self {
        Self {
            mean,
            cov: diag(params.initial_cov),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..N).map(|i| self.cov[i][i]).sum()
    }

    fn sigma_points(&self, params: &UkfParams) -> Option<Vec<Vec4>> {
        let c = N as f64 + params.lambda();
        let mut scaled = self.cov;
        scaled.iter_mut().flatten().for_each(|x| *x *= c);
        let l = cholesky(&scaled)?;
        let mut pts = vec![self.mean];
        for sign in [1.0, -1.0] {
            for j in 0..N {
                let mut p = self.mean;
                for (i, pi) in p.iter_mut().enumerate() {
                    *pi += sign * l[i][j];
                }
                pts.push(p);
            }
        }
        Some(pts)
    }

    /// Predicts through the motion model and, when a measurement is given,
    /// applies the unscented update.
    pub fn step(&self, measurement: Option<Vec4>, dt: f64, params: &UkfParams) -> UkfStep {
        match self.try_step(measurement, dt, params) {
            Some(belief) => UkfStep {
                belief,
                reinitialized: false,
            },
            None => {
                log::warn!("UKF covariance lost positive definiteness; reinitializing");
                let mean = measurement.unwrap_or_else(|| transition(&self.mean, dt));
                UkfStep {
                    belief: UkfBelief::new(mean, params),
                    reinitialized: true,
                }
            }
        }
    }

    fn try_step(
        &self,
        measurement: Option<Vec4>,
        dt: f64,
        params: &UkfParams,
    ) -> Option<UkfBelief> {
        let (wm, wc) = params.weights();
        let pts: Vec<Vec4> = self
            .sigma_points(params)?
            .iter()
            .map(|p| transition(p, dt))
            .collect();
        let mut mean = [0.0; N];
        for (w, p) in wm.iter().zip(&pts) {
            for i in 0..N {
                mean[i] += w * p[i];
            }
        }
        let mut cov = diag(params.process_noise);
        for (w, p) in wc.iter().zip(&pts) {
            for i in 0..N {
                for j in 0..N {
                    cov[i][j] += w * (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        symmetrize(&mut cov);
        let predicted = UkfBelief { mean, cov };
        let Some(z) = measurement else {
            cholesky(&predicted.cov)?;
            return Some(predicted);
        };

        // Measurement is the state itself; sigma points are redrawn around
        // the prediction.
        let pts = predicted.sigma_points(params)?;
        let mut z_mean = [0.0; N];
        for (w, p) in wm.iter().zip(&pts) {
            for i in 0..N {
                z_mean[i] += w * p[i];
            }
        }
        let mut s = diag(params.measurement_noise);
        let mut cross = [[0.0; N]; N];
        for (w, p) in wc.iter().zip(&pts) {
            for i in 0..N {
                for j in 0..N {
                    s[i][j] += w * (p[i] - z_mean[i]) * (p[j] - z_mean[j]);
                    cross[i][j] += w * (p[i] - predicted.mean[i]) * (p[j] - z_mean[j]);
                }
            }
        }
        symmetrize(&mut s);
        // K = C S^-1, computed as (S^-1 C^T)^T since S is symmetric.
        let mut ct = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                ct[i][j] = cross[j][i];
            }
        }
        let kt = spd_solve(&s, &ct)?;
        let mut gain = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                gain[i][j] = kt[j][i];
            }
        }
        let innov: Vec4 = std::array::from_fn(|i| z[i] - z_mean[i]);
        let mut mean = predicted.mean;
        for i in 0..N {
            mean[i] += (0..N).map(|j| gain[i][j] * innov[j]).sum::<f64>();
        }
        // P - K S K^T
        let mut cov = predicted.cov;
        for i in 0..N {
            for j in 0..N {
                let mut acc = 0.0;
                for a in 0..N {
                    for b in 0..N {
                        acc += gain[i][a] * s[a][b] * gain[j][b];
                    }
                }
                cov[i][j] -= acc;
            }
        }
        symmetrize(&mut cov);
        cholesky(&cov)?;
        Some(UkfBelief { mean, cov })
    }
}
