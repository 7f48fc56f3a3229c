//! Mutual-unbiasedness diagnostics from cross-basis (TF/FT) coincidences.
//!
//! Two tests back the MUB overlap hypothesis used downstream: the
//! normalized Frobenius distance of the cross-basis correlation matrix from
//! the ideal flat matrix, and a chi-square goodness-of-fit of the raw
//! counts against the uniform multinomial.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::matrix::{BasisPair, CoincidenceMatrix, JointDistribution};

/// Default acceptance threshold on the Frobenius distance.
pub const DEFAULT_DELTA_M_THRESHOLD: f64 = 0.05;
/// Default significance level for the uniformity test.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// `delta_M = 1/2 * sqrt(sum_ij |p_ij - 1/d^2|^2)`: half the Frobenius norm
/// of the difference between the cross-basis probability matrix and the
/// ideal MUB correlation matrix.
pub fn delta_m(cross: &JointDistribution) -> f64 {
    let d = cross.d();
    let ideal = 1.0 / (d * d) as f64;
    let sum: f64 = cross
        .probs()
        .iter()
        .map(|&p| (p - ideal) * (p - ideal))
        .sum();
    0.5 * sum.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    /// Chi-square statistic against the uniform multinomial.
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

/// Chi-square goodness-of-fit of the counts against the uniform multinomial
/// over all d^2 cells; passes iff the p-value is at least `alpha`.
pub fn mub_consistency_test(cross: &CoincidenceMatrix, alpha: f64) -> Result<UniformityTest> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::config("significance level must lie in (0, 1)"));
    }
    let total = cross.total();
    if total == 0 {
        return Err(Error::data(
            "uniformity test needs at least one coincidence",
        ));
    }
    let d = cross.d();
    let cells = (d * d) as f64;
    let expected = total as f64 / cells;
    let statistic: f64 = cross
        .counts()
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            diff * diff / expected
        })
        .sum();
    let dof = d * d - 1;
    let chi2 =
        ChiSquared::new(dof as f64).map_err(|e| Error::numeric(format!("chi-square dof: {e}")))?;
    let p_value = 1.0 - chi2.cdf(statistic);
    Ok(UniformityTest {
        statistic,
        dof,
        p_value,
        alpha,
        pass: p_value >= alpha,
    })
}

/// Cross-basis assessment emitted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MubReport {
    pub schema: String,
    pub d: usize,
    pub basis_pair: BasisPair,
    /// Frobenius distance from the ideal MUB correlation matrix
    /// (dimensionless, in [0, 1]).
    pub delta_m: f64,
    pub delta_m_threshold: f64,
    pub delta_m_pass: bool,
    pub uniformity: UniformityTest,
    /// Maximum overlap adopted downstream when both checks pass (1/d).
    pub max_overlap_hypothesis: f64,
    /// Both checks passed; downstream may use the 1/d overlap.
    pub mub_hypothesis_accepted: bool,
}

/// Evaluate both MUB diagnostics on a cross-basis coincidence matrix.
pub fn assess(cross: &CoincidenceMatrix, alpha: f64, delta_m_threshold: f64) -> Result<MubReport> {
    if !cross.basis_pair().is_cross() {
        return Err(Error::data(format!(
            "MUB assessment expects a TF or FT matrix, got {}",
            cross.basis_pair()
        )));
    }
    let dm = delta_m(&cross.normalize()?);
    let uniformity = mub_consistency_test(cross, alpha)?;
    let d = cross.d();
    let delta_m_pass = dm <= delta_m_threshold;
    Ok(MubReport {
        schema: "mub_report.v1".to_string(),
        d,
        basis_pair: cross.basis_pair(),
        delta_m: dm,
        delta_m_threshold,
        delta_m_pass,
        mub_hypothesis_accepted: delta_m_pass && uniformity.pass,
        uniformity,
        max_overlap_hypothesis: 1.0 / d as f64,
    })
}
