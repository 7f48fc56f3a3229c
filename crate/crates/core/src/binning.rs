//! Turn timestamp streams into binned d x d coincidence matrices.
//!
//! Coincidences are identified by greedy nearest-neighbor pairing within a
//! configurable window, each tag consumed at most once. Bin indices are
//! computed modulo the frame length `n_bins * tau` from a global frame
//! origin; with a CW pump the frame has no sync signal, so the origin is an
//! arbitrary (configurable) offset and correlations appear on or near the
//! matrix diagonal regardless of its value.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BasisPair, CoincidenceMatrix};
use crate::tags::TagStream;

/// Discretization parameters for one basis pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    /// Bin width in picoseconds.
    pub tau_ps: u64,
    /// Number of bins per frame.
    pub n_bins: usize,
    /// Global time offset of the frame grid, picoseconds.
    #[serde(default)]
    pub frame_origin_ps: i64,
    /// Maximum |t_A - t_B| for coincidence pairing, picoseconds.
    pub pairing_window_ps: u64,
}

impl BinningConfig {
    pub fn new(
        tau_ps: u64,
        n_bins: usize,
        frame_origin_ps: i64,
        pairing_window_ps: u64,
    ) -> Result<Self> {
        let cfg = BinningConfig {
            tau_ps,
            n_bins,
            frame_origin_ps,
            pairing_window_ps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_ps == 0 {
            return Err(Error::config("bin width tau must be positive"));
        }
        if self.n_bins < 2 {
            return Err(Error::config("need at least 2 bins per frame"));
        }
        if self.pairing_window_ps > self.frame_ps() {
            return Err(Error::config(
                "pairing window must not exceed the frame length n_bins * tau",
            ));
        }
        Ok(())
    }

    /// Frame length `n_bins * tau` in picoseconds.
    pub fn frame_ps(&self) -> u64 {
        self.tau_ps * self.n_bins as u64
    }

    fn bin_index(&self, t: u64) -> usize {
        let frame = self.frame_ps() as i128;
        let rel = (t as i128 - self.frame_origin_ps as i128).rem_euclid(frame);
        (rel as u64 / self.tau_ps) as usize
    }
}

/// Greedy nearest-neighbor pairing: walk Alice's tags in order, match each
/// to the nearest unconsumed Bob tag within the window (ties to the earlier
/// tag), and consume both.
pub fn pair_coincidences(a: &TagStream, b: &TagStream, window_ps: u64) -> Vec<(u64, u64)> {
    let ta = a.tags();
    let tb = b.tags();
    let mut pairs = Vec::new();
    let mut used = vec![false; tb.len()];
    // First b index that can still pair with the current or any later a tag.
    let mut lo = 0usize;
    for &t in ta {
        while lo < tb.len() && (used[lo] || tb[lo] + window_ps < t) {
            lo += 1;
        }
        let mut best: Option<(u64, usize)> = None;
        let mut j = lo;
        while j < tb.len() && tb[j] <= t.saturating_add(window_ps) {
            if !used[j] {
                let dist = tb[j].abs_diff(t);
                match best {
                    Some((d, _)) if d <= dist => {}
                    _ => best = Some((dist, j)),
                }
            }
            j += 1;
        }
        if let Some((_, j)) = best {
            used[j] = true;
            pairs.push((t, tb[j]));
        }
    }
    pairs
}

fn check_same_acquisition(a: &TagStream, b: &TagStream) -> Result<()> {
    if a.duration_ps() != b.duration_ps() {
        return Err(Error::data(
            "streams have different acquisition durations; expected the same acquisition",
        ));
    }
    Ok(())
}

/// Bin paired coincidences into the full `n_bins x n_bins` frame matrix.
pub fn bin_full_frame(
    a: &TagStream,
    b: &TagStream,
    cfg: &BinningConfig,
) -> Result<CoincidenceMatrix> {
    cfg.validate()?;
    check_same_acquisition(a, b)?;
    let basis_pair = BasisPair::of(a.channel(), b.channel())?;
    let n = cfg.n_bins;
    let mut counts = Array2::<u64>::zeros((n, n));
    for (ta, tb) in pair_coincidences(a, b, cfg.pairing_window_ps) {
        let i = cfg.bin_index(ta);
        let j = cfg.bin_index(tb);
        counts[(i, j)] += 1;
    }
    CoincidenceMatrix::new(counts, basis_pair, a.duration_ps())
}

/// Bin timestamp streams and select the maximal-count d x d subspace.
pub fn bin_timestamps(
    a: &TagStream,
    b: &TagStream,
    cfg: &BinningConfig,
    d: usize,
) -> Result<CoincidenceMatrix> {
    if d > cfg.n_bins {
        return Err(Error::config(format!(
            "requested dimension {d} exceeds the number of bins {}",
            cfg.n_bins
        )));
    }
    let full = bin_full_frame(a, b, cfg)?;
    subspace_extract(&full, d)
}

/// Start index of the contiguous d x d window (same window on both axes)
/// with the maximal total count; ties break to the smallest start index.
pub fn subspace_window(full: &CoincidenceMatrix, d: usize) -> Result<usize> {
    let n = full.d();
    if d < 2 {
        return Err(Error::config("subspace dimension must be at least 2"));
    }
    if d > n {
        return Err(Error::config(format!(
            "subspace dimension {d} exceeds matrix dimension {n}"
        )));
    }
    // 2-D prefix sums make each window total O(1).
    let counts = full.counts();
    let mut prefix = Array2::<u64>::zeros((n + 1, n + 1));
    for i in 0..n {
        for j in 0..n {
            prefix[(i + 1, j + 1)] =
                counts[(i, j)] + prefix[(i, j + 1)] + prefix[(i + 1, j)] - prefix[(i, j)];
        }
    }
    let window_total = |s: usize| -> u64 {
        let e = s + d;
        prefix[(e, e)] + prefix[(s, s)] - prefix[(s, e)] - prefix[(e, s)]
    };
    let mut best = 0usize;
    let mut best_total = window_total(0);
    for s in 1..=(n - d) {
        let t = window_total(s);
        if t > best_total {
            best_total = t;
            best = s;
        }
    }
    Ok(best)
}

/// Extract the maximal-count contiguous d x d submatrix of a full-frame
/// matrix, using the same bin window on both axes.
pub fn subspace_extract(full: &CoincidenceMatrix, d: usize) -> Result<CoincidenceMatrix> {
    let s = subspace_window(full, d)?;
    let sub = full
        .counts()
        .slice(ndarray::s![s..s + d, s..s + d])
        .to_owned();
    CoincidenceMatrix::new(sub, full.basis_pair(), full.duration_ps())
}

/// Pairing window used by the correlation-peak diagnostic. Generous enough
/// to cover dispersion-broadened peaks while staying far below typical
/// inter-event gaps.
const FWHM_PAIRING_WINDOW_PS: u64 = 50_000;

/// FWHM of the t_A - t_B coincidence difference histogram, in picoseconds,
/// with linear interpolation at half maximum.
pub fn peak_fwhm(a: &TagStream, b: &TagStream, resolution_ps: u64) -> Result<f64> {
    if resolution_ps == 0 {
        return Err(Error::config("histogram resolution must be positive"));
    }
    check_same_acquisition(a, b)?;
    let pairs = pair_coincidences(a, b, FWHM_PAIRING_WINDOW_PS);
    if pairs.len() < 100 {
        return Err(Error::data(format!(
            "need at least 100 coincidences for a FWHM estimate, got {}",
            pairs.len()
        )));
    }
    let res = resolution_ps as i64;
    let deltas: Vec<i64> = pairs
        .iter()
        .map(|&(ta, tb)| ta as i64 - tb as i64)
        .collect();
    let lo_bin = deltas.iter().map(|d| d.div_euclid(res)).min().unwrap();
    let hi_bin = deltas.iter().map(|d| d.div_euclid(res)).max().unwrap();
    let n_bins = (hi_bin - lo_bin + 1) as usize;
    let mut hist = vec![0u64; n_bins];
    for d in &deltas {
        hist[(d.div_euclid(res) - lo_bin) as usize] += 1;
    }

    let (peak_idx, &peak) = hist.iter().enumerate().max_by_key(|&(_, c)| *c).unwrap();
    let half = peak as f64 / 2.0;
    let center = |i: isize| ((lo_bin + i as i64) as f64 + 0.5) * resolution_ps as f64;
    // Bins beyond the histogram count as zero.
    let value = |i: isize| -> f64 {
        if i < 0 || i as usize >= n_bins {
            0.0
        } else {
            hist[i as usize] as f64
        }
    };
    // Walk outward from the peak to the half-maximum crossings and place
    // each crossing by linear interpolation between the two bin centers.
    let mut left = peak_idx as isize;
    while value(left) > half {
        left -= 1;
    }
    let mut right = peak_idx as isize;
    while value(right) > half {
        right += 1;
    }
    let interp = |inside: isize, outside: isize| -> f64 {
        let vi = value(inside);
        let vo = value(outside);
        if (vi - vo).abs() < f64::EPSILON {
            center(inside)
        } else {
            center(inside) + (center(outside) - center(inside)) * (vi - half) / (vi - vo)
        }
    };
    let left_cross = interp(left + 1, left);
    let right_cross = interp(right - 1, right);
    Ok(right_cross - left_cross)
}
