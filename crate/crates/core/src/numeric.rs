//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how work was split between threads.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Median with the usual midpoint convention for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

/// Static range-minimum / range-maximum table over a slice.
pub struct RangeExtrema {
    mins: Vec<Vec<f64>>,
    maxs: Vec<Vec<f64>>,
}

impl RangeExtrema {
    pub fn new(values: &[f64]) -> Self {
        let mut mins = vec![values.to_vec()];
        let mut maxs = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev_min = mins.last().unwrap();
            let prev_max = maxs.last().unwrap();
            let len = values.len() + 1 - 2 * width;
            let next_min = (0..len)
                .map(|i| prev_min[i].min(prev_min[i + width]))
                .collect();
            let next_max = (0..len)
                .map(|i| prev_max[i].max(prev_max[i + width]))
                .collect();
            mins.push(next_min);
            maxs.push(next_max);
            width *= 2;
        }
        Self { mins, maxs }
    }

    /// (min, max) over the inclusive index range `lo..=hi`.
    pub fn query(&self, lo: usize, hi: usize) -> (f64, f64) {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        let level = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let width = 1 << level;
        let mins = &self.mins[level];
        let maxs = &self.maxs[level];
        (
            mins[lo].min(mins[hi + 1 - width]),
            maxs[lo].max(maxs[hi + 1 - width]),
        )
    }
}
