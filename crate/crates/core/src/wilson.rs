//! Wilson score interval for a binomial proportion, and its inversion from a
//! bound back to the deviation score `z` that produces it.

use serde::{Deserialize, Serialize};

use crate::dataset::SubsetStats;
use crate::error::{CalibError, Result};

/// Predicted means are clamped into `[P_HAT_FLOOR, 1 - P_HAT_FLOOR]` before solving.
pub const P_HAT_FLOOR: f64 = 1e-9;
/// Upper limit on the deviation score returned by [`solve_deviation`].
pub const Z_CAP: f64 = 1e6;
const RESIDUAL_TOL: f64 = 1e-10;
const BRACKET_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

/// Non-negative Wilson deviation score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DeviationScore(f64);

impl DeviationScore {
    pub const ZERO: DeviationScore = DeviationScore(0.0);

    pub fn new(z: f64) -> Result<Self> {
        if z.is_nan() || z < 0.0 {
            return Err(CalibError::Domain(format!("deviation score must be >= 0, got {z}")));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Lower and upper Wilson bounds for observed rate `p` over `n` trials.
pub fn wilson_interval(p: f64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(CalibError::Domain("Wilson interval needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CalibError::Domain(format!("rate {p} outside [0, 1]")));
    }
    if z.is_nan() || z < 0.0 {
        return Err(CalibError::Domain(format!("deviation score must be >= 0, got {z}")));
    }
    Ok(interval_unchecked(p, n as f64, z))
}

fn interval_unchecked(p: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // Rounding can push a bound a few ulps across p or the unit interval.
    let lower = (center - half).clamp(0.0, p);
    let upper = (center + half).clamp(p, 1.0);
    (lower, upper)
}

/// Finds `z` such that the Wilson bound on the side of `p_hat` equals `p_hat`.
///
/// The upper bound is used when the subset is over-predicted (`p_hat > p`),
/// the lower bound otherwise. `p_hat` is clamped into
/// `[P_HAT_FLOOR, 1 - P_HAT_FLOOR]` first. The search doubles an upper
/// bracket from 1 and then bisects until the bracket is narrower than 1e-12
/// or the residual vanishes. Targets that are not reached before [`Z_CAP`]
/// return the cap.
pub fn solve_deviation(stats: &SubsetStats) -> Result<DeviationScore> {
    let SubsetStats { n, p, p_hat, .. } = *stats;
    if n == 0 {
        return Err(CalibError::Domain("cannot solve deviation for an empty subset".into()));
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&p_hat) {
        return Err(CalibError::Domain(format!("rates outside [0, 1]: p={p}, p_hat={p_hat}")));
    }
    if p_hat == p {
        return Ok(DeviationScore::ZERO);
    }
    let upper = p_hat > p;
    let target = p_hat.clamp(P_HAT_FLOOR, 1.0 - P_HAT_FLOOR);
    if (upper && target <= p) || (!upper && target >= p) {
        return Ok(DeviationScore::ZERO);
    }
    let n = n as f64;
    // Signed distance of the bound from the target: negative while z is too small.
    let gap = |z: f64| {
        let (lo, hi) = interval_unchecked(p, n, z);
        if upper {
            hi - target
        } else {
            target - lo
        }
    };

    let mut hi = 1.0;
    while gap(hi) < 0.0 {
        if hi >= Z_CAP {
            return Ok(DeviationScore(Z_CAP));
        }
        hi = (hi * 2.0).min(Z_CAP);
    }
    let mut lo = 0.0;
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid);
        if g == 0.0 {
            return Ok(DeviationScore(mid));
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BRACKET_TOL {
            return Ok(DeviationScore(0.5 * (lo + hi)));
        }
    }
    let mid = 0.5 * (lo + hi);
    if gap(mid).abs() <= RESIDUAL_TOL {
        Ok(DeviationScore(mid))
    } else {
        Err(CalibError::Solver { lo, hi })
    }
}
