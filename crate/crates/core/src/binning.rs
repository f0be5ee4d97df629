//! Equal-frequency binning over sorted predictions, shared by the field-wise
//! calibrator and histogram binning.

use std::ops::Range;

use crate::metrics::bin_sizes;

/// Splits `sorted` (ascending) into at most `bins` equal-frequency runs.
///
/// A boundary never separates equal predictions: it is pushed right past any
/// tie, and boundaries that collapse are dropped, so fewer than `bins` runs
/// may come back. The bin count is also capped at `sorted.len()`.
pub fn equal_frequency(sorted: &[f64], bins: usize) -> Vec<Range<usize>> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let bins = bins.clamp(1, n);
    let mut ranges = Vec::with_capacity(bins);
    let mut start = 0;
    let mut target = 0;
    for size in bin_sizes(n, bins).take(bins - 1) {
        target += size;
        let mut cut = target.max(start + 1);
        while cut < n && sorted[cut - 1] == sorted[cut] {
            cut += 1;
        }
        if cut >= n {
            break;
        }
        ranges.push(start..cut);
        start = cut;
    }
    ranges.push(start..n);
    ranges
}

/// Midpoints between the last value of each run and the first of the next.
pub fn midpoint_edges(sorted: &[f64], ranges: &[Range<usize>]) -> Vec<f64> {
    ranges
        .windows(2)
        .map(|w| 0.5 * (sorted[w[0].end - 1] + sorted[w[1].start]))
        .collect()
}

/// Index of the bin containing `x`; values on an edge belong to the upper bin
/// and values outside the edges clamp to the end bins.
pub fn locate(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}
