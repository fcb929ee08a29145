//! Kendall's tau in `O(m log m)` by counting inversions with a merge sort.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Concordance counts for one pair of columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KendallCounts {
    /// Σ_{i<j} sign((x_i − x_j)(y_i − y_j)).
    pub score: i64,
    /// Pairs tied in x or y (they contribute 0 to the score).
    pub tied_pairs: u64,
    pub total_pairs: u64,
}

impl KendallCounts {
    /// `2·score / (m(m−1))`.
    pub fn tau(&self) -> f64 {
        if self.total_pairs == 0 {
            return 0.0;
        }
        self.score as f64 / self.total_pairs as f64
    }
}

pub fn kendall_tau_pair(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(kendall_counts(x, y)?.tau())
}

pub fn kendall_counts(x: &[f64], y: &[f64]) -> Result<KendallCounts> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Kendall input".into()));
    }
    Ok(counts_from_ranks(&dense_ranks(x), &dense_ranks(y)))
}

/// Dense integer ranks (ties share a rank). Strictly increasing maps leave these unchanged.
pub fn dense_ranks(x: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0u32; x.len()];
    let mut rank = 0u32;
    for w in 0..order.len() {
        if w > 0 && x[order[w]] != x[order[w - 1]] {
            rank += 1;
        }
        ranks[order[w]] = rank;
    }
    ranks
}

fn tied_pairs_in_runs<I: Iterator<Item = bool>>(same_as_prev: I) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for same in same_as_prev {
        if same {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Knight's algorithm on precomputed ranks.
pub fn counts_from_ranks(rx: &[u32], ry: &[u32]) -> KendallCounts {
    let m = rx.len();
    let n0 = (m as u64) * (m as u64 - 1) / 2;

    let mut pairs: Vec<(u32, u32)> = rx.iter().copied().zip(ry.iter().copied()).collect();
    pairs.sort_unstable();

    let tied_x = tied_pairs_in_runs(pairs.windows(2).map(|w| w[0].0 == w[1].0));
    let tied_xy = tied_pairs_in_runs(pairs.windows(2).map(|w| w[0] == w[1]));

    let mut ys: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    let discordant = count_inversions(&mut ys);

    let mut sorted_y = ys;
    sorted_y.sort_unstable();
    let tied_y = tied_pairs_in_runs(sorted_y.windows(2).map(|w| w[0] == w[1]));

    let score = n0 as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * discordant as i64;
    KendallCounts {
        score,
        tied_pairs: tied_x + tied_y - tied_xy,
        total_pairs: n0,
    }
}

/// Bottom-up merge sort counting strict inversions; equal values are not inversions.
fn count_inversions(v: &mut [u32]) -> u64 {
    let n = v.len();
    let mut buf = vec![0u32; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[i] <= v[j] {
                    buf[k] = v[i];
                    i += 1;
                } else {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}
