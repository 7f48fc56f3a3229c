//! Coincidence matrices and their normalized joint distributions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{Basis, Channel, Party};

/// Which pair of local bases a coincidence matrix was measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisPair {
    TT,
    FF,
    TF,
    FT,
}

impl BasisPair {
    /// Basis pair for an (Alice, Bob) channel combination.
    pub fn of(a: Channel, b: Channel) -> Result<BasisPair> {
        if a.party != Party::Alice || b.party != Party::Bob {
            return Err(Error::data(
                "coincidence matrices pair an Alice stream with a Bob stream",
            ));
        }
        Ok(match (a.basis, b.basis) {
            (Basis::Time, Basis::Time) => BasisPair::TT,
            (Basis::Frequency, Basis::Frequency) => BasisPair::FF,
            (Basis::Time, Basis::Frequency) => BasisPair::TF,
            (Basis::Frequency, Basis::Time) => BasisPair::FT,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            BasisPair::TT => "TT",
            BasisPair::FF => "FF",
            BasisPair::TF => "TF",
            BasisPair::FT => "FT",
        }
    }

    pub fn from_label(s: &str) -> Result<BasisPair> {
        match s {
            "TT" => Ok(BasisPair::TT),
            "FF" => Ok(BasisPair::FF),
            "TF" => Ok(BasisPair::TF),
            "FT" => Ok(BasisPair::FT),
            other => Err(Error::data(format!("unknown basis pair {other:?}"))),
        }
    }

    /// Whether this is one of the two cross-basis combinations.
    pub fn is_cross(&self) -> bool {
        matches!(self, BasisPair::TF | BasisPair::FT)
    }
}

impl std::fmt::Display for BasisPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// d x d nonnegative integer coincidence counts for one basis pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceMatrix {
    counts: Array2<u64>,
    basis_pair: BasisPair,
    duration_ps: u64,
}

impl CoincidenceMatrix {
    pub fn new(counts: Array2<u64>, basis_pair: BasisPair, duration_ps: u64) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::data(format!(
                "coincidence matrix must be square, got {}x{}",
                counts.nrows(),
                counts.ncols()
            )));
        }
        if counts.nrows() < 2 {
            return Err(Error::data(
                "coincidence matrix dimension must be at least 2",
            ));
        }
        if duration_ps == 0 {
            return Err(Error::data("acquisition duration must be positive"));
        }
        Ok(CoincidenceMatrix {
            counts,
            basis_pair,
            duration_ps,
        })
    }

    pub fn zeros(d: usize, basis_pair: BasisPair, duration_ps: u64) -> Result<Self> {
        CoincidenceMatrix::new(Array2::zeros((d, d)), basis_pair, duration_ps)
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn basis_pair(&self) -> BasisPair {
        self.basis_pair
    }

    pub fn d(&self) -> usize {
        self.counts.nrows()
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 * 1e-12
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Element-wise sum of two matrices from disjoint time segments of the
    /// same acquisition. Durations add so rates stay meaningful.
    pub fn merge(&self, other: &CoincidenceMatrix) -> Result<CoincidenceMatrix> {
        if self.d() != other.d() || self.basis_pair != other.basis_pair {
            return Err(Error::data(
                "cannot merge matrices with different shape or basis pair",
            ));
        }
        CoincidenceMatrix::new(
            &self.counts + &other.counts,
            self.basis_pair,
            self.duration_ps + other.duration_ps,
        )
    }

    /// Normalized joint probability distribution, `probs = counts / total`.
    pub fn normalize(&self) -> Result<JointDistribution> {
        let total = self.total();
        if total == 0 {
            return Err(Error::data(
                "cannot normalize an empty coincidence matrix (no coincidences recorded)",
            ));
        }
        let t = total as f64;
        let probs = self.counts.mapv(|c| c as f64 / t);
        JointDistribution::new(probs, self.basis_pair)
    }
}

/// Normalized d x d joint probability distribution for one basis pair.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    probs: Array2<f64>,
    basis_pair: BasisPair,
}

/// Compensated (Kahan) summation; the plain fold accumulates error beyond
/// the normalization tolerance on megacell matrices.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

impl JointDistribution {
    pub fn new(probs: Array2<f64>, basis_pair: BasisPair) -> Result<Self> {
        if probs.nrows() != probs.ncols() {
            return Err(Error::data("joint distribution must be square"));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::data(
                "joint distribution entries must be finite and nonnegative",
            ));
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::data(format!(
                "joint distribution must sum to 1 (got {sum})"
            )));
        }
        Ok(JointDistribution { probs, basis_pair })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn basis_pair(&self) -> BasisPair {
        self.basis_pair
    }

    pub fn d(&self) -> usize {
        self.probs.nrows()
    }

    /// Row-sum and column-sum marginal vectors (Alice, Bob).
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let rows = self.probs.rows().into_iter().map(|r| r.sum()).collect();
        let cols = self.probs.columns().into_iter().map(|c| c.sum()).collect();
        (rows, cols)
    }

    pub fn diagonal_sum(&self) -> f64 {
        (0..self.d()).map(|i| self.probs[(i, i)]).sum()
    }

    /// Relabel Bob's outcomes by a cyclic shift: `p'[m][n] = p[m][(n+s) mod d]`.
    pub fn shift_columns(&self, shift: usize) -> JointDistribution {
        let d = self.d();
        let s = shift % d;
        let mut out = Array2::zeros((d, d));
        for m in 0..d {
            for n in 0..d {
                out[(m, n)] = self.probs[(m, (n + s) % d)];
            }
        }
        JointDistribution {
            probs: out,
            basis_pair: self.basis_pair,
        }
    }
}
