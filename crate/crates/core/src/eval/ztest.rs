use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Significance level for calling two capture rates different.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    /// Two-sided p-value under the normal approximation.
    pub p: f64,
}

impl ZTest {
    pub fn significant(&self) -> bool {
        self.p <= SIGNIFICANCE
    }
}

/// Pooled two-proportion z-test of `x1 / n1` against `x2 / n2`.
pub fn two_proportion_ztest(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::Contract(format!(
            "invalid proportions {x1}/{n1}, {x2}/{n2}"
        )));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = x1 as f64 / n1f;
    let p2 = x2 as f64 / n2f;
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        // Pooled rate 0 or 1: both groups are identical.
        return Ok(ZTest { z: 0.0, p: 1.0 });
    }
    let z = (p1 - p2) / se;
    Ok(ZTest {
        z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2),
    })
}
