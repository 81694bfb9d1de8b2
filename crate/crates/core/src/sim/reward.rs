use super::config::RewardCoeffs;

/// Zero-sum step rewards `(pursuer, evader)`. Capture wins over timeout
/// when both happen on the same decision.
pub fn reward(distance: f64, captured: bool, timed_out: bool, c: &RewardCoeffs) -> (f64, f64) {
    let rp = if captured {
        c.capture
    } else if timed_out {
        -c.capture
    } else {
        -(c.time + c.distance * distance)
    };
    (rp, -rp)
}
