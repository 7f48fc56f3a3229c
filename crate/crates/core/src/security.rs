//! Composable finite-size key-length calculus for the two-MUB
//! entanglement-based protocol.
//!
//! The security statistic is the frequency-basis correlation
//! `W = sum_i P(ii|FF)`. Hoeffding's inequality widens the observed value
//! by `mu`, a closed form converts the widened estimate into a min-entropy
//! rate per key round, and the key length subtracts the error-correction
//! leakage and the privacy-amplification/verification cost `theta`.
//! Security against coherent attacks follows from the postselection
//! technique at the price of `2 log2 g_{n,x}` bits with `x = d^4`; the
//! binomial is evaluated entirely in the log domain.
//!
//! Round bookkeeping: with splitting ratio `q` (probability of routing to
//! the frequency basis), a block of `N` coincidences yields
//! `n = N (1-q)^2` key rounds (both parties in T) and `k_W = N q^2` test
//! rounds (both in F); mixed-basis rounds are sifted out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix::JointDistribution;
use crate::witness::conditional_entropy;

/// Parenthesization used for the privacy-amplification cost term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaConvention {
    /// `alpha/(alpha-1) * log2(1/(4 eps_PA) + 2/alpha)` - the printed form.
    #[default]
    ArgumentSum,
    /// `alpha/(alpha-1) * (log2(1/(4 eps_PA)) + 2/alpha)` - alternative reading.
    SplitLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Statistical-estimation failure probability.
    pub eps_at: f64,
    /// Privacy-amplification failure probability.
    pub eps_pa: f64,
    /// Error-verification failure probability.
    pub eps_ev: f64,
    /// Free parameter of the coherent-attack lift.
    pub eps_tilde: f64,
    /// Renyi parameter; `None` picks `min(1 + 1/sqrt(n), cap - 1e-6)`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub theta_convention: ThetaConvention,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            eps_at: 0.5e-10,
            eps_pa: 0.5e-10,
            eps_ev: 0.5e-10,
            eps_tilde: 1e-10,
            alpha: None,
            theta_convention: ThetaConvention::ArgumentSum,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, eps) in [
            ("eps_at", self.eps_at),
            ("eps_pa", self.eps_pa),
            ("eps_ev", self.eps_ev),
            ("eps_tilde", self.eps_tilde),
        ] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::config(format!(
                    "{name} must lie in (0, 1), got {eps}"
                )));
            }
        }
        Ok(())
    }

    /// Renyi parameter for `n` key rounds at dimension `d`: the explicit
    /// value when set, otherwise `1 + 1/sqrt(n)` capped just below the
    /// validity limit.
    pub fn resolve_alpha(&self, n: f64, d: usize) -> Result<f64> {
        let cap = alpha_cap(d);
        let alpha = match self.alpha {
            Some(a) => a,
            None => (1.0 + 1.0 / n.max(1.0).sqrt()).min(cap - 1e-6),
        };
        if !(alpha > 1.0 && alpha < cap) {
            return Err(Error::numeric(format!(
                "Renyi parameter {alpha} outside the valid range (1, {cap}) for d = {d}"
            )));
        }
        Ok(alpha)
    }
}

/// Upper validity limit for the Renyi parameter, `1 + 1/log2(2d + 1)`.
pub fn alpha_cap(d: usize) -> f64 {
    1.0 + 1.0 / ((2 * d + 1) as f64).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Total coincidence rounds N in the block.
    pub n_total: f64,
    /// Splitting ratio: probability of the frequency basis per party.
    pub q: f64,
    /// Local dimension.
    pub d: usize,
    /// Error-correction inefficiency, >= 1.
    pub f_ec: f64,
    /// Coincidence rounds per second, for per-second rates.
    pub coincidence_rate: f64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_total.is_finite() && self.n_total >= 1.0) {
            return Err(Error::config("block size must be at least 1"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::config("splitting ratio must lie strictly in (0, 1)"));
        }
        if self.d < 2 {
            return Err(Error::config("dimension must be at least 2"));
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(Error::config(
                "error-correction efficiency must be at least 1",
            ));
        }
        if !(self.coincidence_rate.is_finite() && self.coincidence_rate > 0.0) {
            return Err(Error::config("coincidence rate must be positive"));
        }
        Ok(())
    }

    /// Key rounds `n = N (1-q)^2`.
    pub fn key_rounds(&self) -> f64 {
        self.n_total * (1.0 - self.q) * (1.0 - self.q)
    }

    /// Test rounds `k_W = N q^2`.
    pub fn test_rounds(&self) -> f64 {
        self.n_total * self.q * self.q
    }

    /// Wall-clock seconds to accumulate the block.
    pub fn block_seconds(&self) -> f64 {
        self.n_total / self.coincidence_rate
    }
}

/// Attack model the key length is secure against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Asymptotic,
    Collective,
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KeyRateComponents {
    /// Observed frequency-basis correlation (dimensionless).
    pub w: f64,
    /// Hoeffding confidence widening (dimensionless).
    pub mu: f64,
    /// Min-entropy rate per key round (bits).
    pub h_min: f64,
    /// Statistical estimator (bits).
    pub b_stat: f64,
    /// Error-correction leakage (bits).
    pub lambda_ec: f64,
    /// Privacy-amplification and verification cost (bits).
    pub theta: f64,
    /// Postselection penalty exponent log2 g_{n,x} (bits), coherent only.
    pub log2_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub regime: Regime,
    /// Secret key length for the block (bits).
    pub ell: f64,
    /// Key throughput `ell / (N / coincidence_rate)` (bits per second).
    pub rate_bps: f64,
    pub components: KeyRateComponents,
}

/// Observed frequency-basis correlation: the diagonal sum of the aligned
/// FF distribution.
pub fn w_observable(ff: &JointDistribution) -> f64 {
    ff.diagonal_sum()
}

/// Hoeffding confidence widening
/// `mu = sqrt(2 ||W||_inf^2 / k_W * ln(2/eps_AT))` with `||W||_inf = 1`.
pub fn hoeffding_mu(k_w: f64, eps_at: f64) -> Result<f64> {
    if !(k_w.is_finite() && k_w >= 1.0) {
        return Err(Error::numeric("at least one test round is required"));
    }
    if !(eps_at > 0.0 && eps_at < 1.0) {
        return Err(Error::config(format!(
            "eps_AT must lie in (0, 1), got {eps_at}"
        )));
    }
    Ok((2.0 / k_w * (2.0 / eps_at).ln()).sqrt())
}

/// Closed-form min-entropy rate per key round,
/// `log2 d - 2 log2(sqrt(W - mu) + sqrt((d-1)(1 - W + mu)))`, in bits.
/// Negative values (possible for `W - mu < 1/d`) are returned raw.
pub fn h_min(w: f64, mu: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::numeric(format!("W must lie in [0, 1], got {w}")));
    }
    if mu < 0.0 {
        return Err(Error::numeric("mu must be nonnegative"));
    }
    let w_eff = w - mu;
    if w_eff < 0.0 {
        return Err(Error::numeric(format!(
            "W - mu = {w_eff} < 0: insufficient test statistics"
        )));
    }
    let df = d as f64;
    let root = w_eff.sqrt() + ((df - 1.0) * (1.0 - w_eff)).sqrt();
    Ok(df.log2() - 2.0 * root.log2())
}

/// Statistical estimator `b_stat = n h_min - n (alpha - 1) log2^2(d + 1)`.
pub fn b_stat(n: f64, w: f64, mu: f64, d: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha < alpha_cap(d)) {
        return Err(Error::numeric(format!(
            "Renyi parameter {alpha} outside (1, {}) for d = {d}",
            alpha_cap(d)
        )));
    }
    let log_term = ((d + 1) as f64).log2();
    Ok(n * h_min(w, mu, d)? - n * (alpha - 1.0) * log_term * log_term)
}

/// Privacy-amplification plus error-verification cost in bits.
pub fn theta_with(alpha: f64, eps_pa: f64, eps_ev: f64, convention: ThetaConvention) -> f64 {
    let pa = match convention {
        ThetaConvention::ArgumentSum => (1.0 / (4.0 * eps_pa) + 2.0 / alpha).log2(),
        ThetaConvention::SplitLog => (1.0 / (4.0 * eps_pa)).log2() + 2.0 / alpha,
    };
    alpha / (alpha - 1.0) * pa + (1.0 / eps_ev).log2().ceil()
}

/// [`theta_with`] under the printed parenthesization.
pub fn theta(alpha: f64, eps_pa: f64, eps_ev: f64) -> f64 {
    theta_with(alpha, eps_pa, eps_ev, ThetaConvention::ArgumentSum)
}

/// Error-correction leakage `lambda_EC = n f_ec H(A_T|B_T)` in bits.
pub fn ec_leakage(n: f64, tt: &JointDistribution, f_ec: f64) -> f64 {
    ec_leakage_bits(n, conditional_entropy(tt), f_ec)
}

pub fn ec_leakage_bits(n: f64, h_tt: f64, f_ec: f64) -> f64 {
    n * f_ec * h_tt
}

/// `log2 C(n + x - 1, n)` via log-gamma; the binomial itself is never
/// materialized.
pub fn log2_postselection_g(n: f64, x: f64) -> f64 {
    (ln_gamma(n + x) - ln_gamma(n + 1.0) - ln_gamma(x)) / std::f64::consts::LN_2
}

fn key_result(
    cfg: &ProtocolConfig,
    regime: Regime,
    ell: f64,
    components: KeyRateComponents,
) -> KeyRateResult {
    KeyRateResult {
        regime,
        ell,
        rate_bps: ell / cfg.block_seconds(),
        components,
    }
}

/// Key length secure against i.i.d. collective attacks:
/// `ell = max(0, b_stat - lambda_EC - theta)`.
pub fn key_length_collective(
    cfg: &ProtocolConfig,
    sec: &SecurityParams,
    w: f64,
    mu: f64,
    lambda_ec: f64,
) -> Result<KeyRateResult> {
    cfg.validate()?;
    sec.validate()?;
    let n = cfg.key_rounds();
    let alpha = sec.resolve_alpha(n, cfg.d)?;
    let b = b_stat(n, w, mu, cfg.d, alpha)?;
    let th = theta_with(alpha, sec.eps_pa, sec.eps_ev, sec.theta_convention);
    let ell = (b - lambda_ec - th).max(0.0);
    let components = KeyRateComponents {
        w,
        mu,
        h_min: h_min(w, mu, cfg.d)?,
        b_stat: b,
        lambda_ec,
        theta: th,
        log2_g: 0.0,
    };
    Ok(key_result(cfg, Regime::Collective, ell, components))
}

/// Key length secure against coherent attacks via postselection:
/// the collective length minus `2 log2 g_{n,x} + 2 log2(1/eps~)`,
/// with `x = d^4`.
pub fn key_length_coherent(
    cfg: &ProtocolConfig,
    sec: &SecurityParams,
    w: f64,
    mu: f64,
    lambda_ec: f64,
) -> Result<KeyRateResult> {
    let collective = key_length_collective(cfg, sec, w, mu, lambda_ec)?;
    let n = cfg.key_rounds();
    let x = (cfg.d as f64).powi(4);
    let log2_g = log2_postselection_g(n, x);
    let penalty = 2.0 * log2_g + 2.0 * (1.0 / sec.eps_tilde).log2();
    let raw = collective.components.b_stat - lambda_ec - collective.components.theta - penalty;
    let ell = raw.max(0.0);
    let components = KeyRateComponents {
        log2_g,
        ..collective.components
    };
    Ok(key_result(cfg, Regime::Coherent, ell, components))
}

/// Two-MUB entropic asymptotic rate per key round,
/// `max(0, log2 d - H(A_F|B_F) - f_ec H(A_T|B_T))` bits. At `f_ec = 1`
/// this is the distillable-entanglement bound.
pub fn asymptotic_rate(
    tt: &JointDistribution,
    ff: &JointDistribution,
    d: usize,
    f_ec: f64,
) -> Result<f64> {
    if tt.d() != d || ff.d() != d {
        return Err(Error::data("distribution dimensions must match d"));
    }
    Ok(asymptotic_rate_bits(
        conditional_entropy(tt),
        conditional_entropy(ff),
        d,
        f_ec,
    ))
}

pub fn asymptotic_rate_bits(h_tt: f64, h_ff: f64, d: usize, f_ec: f64) -> f64 {
    ((d as f64).log2() - h_ff - f_ec * h_tt).max(0.0)
}

/// Infinite-block limit of the collective key rate per protocol round
/// (`mu`, the Renyi correction, and `theta/N` all vanish):
/// `(1-q)^2 * max(0, h_min(W, 0, d) - f_ec H(A_T|B_T))`.
pub fn collective_rate_limit(cfg: &ProtocolConfig, w: f64, h_tt: f64) -> Result<f64> {
    cfg.validate()?;
    let sift = (1.0 - cfg.q) * (1.0 - cfg.q);
    Ok(sift * (h_min(w, 0.0, cfg.d)? - cfg.f_ec * h_tt).max(0.0))
}

/// Measured per-dimension inputs a sweep evaluates rates from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub d: usize,
    /// Aligned FF diagonal sum.
    pub w: f64,
    /// H(A_T|B_T) in bits.
    pub h_tt: f64,
    /// H(A_F|B_F) in bits.
    pub h_ff: f64,
}

/// Evaluate one regime at one parameter point.
pub fn evaluate_rate(
    cfg: &ProtocolConfig,
    sec: &SecurityParams,
    inputs: &RateInputs,
    regime: Regime,
) -> Result<KeyRateResult> {
    cfg.validate()?;
    if inputs.d != cfg.d {
        return Err(Error::config("rate inputs and protocol dimension disagree"));
    }
    match regime {
        Regime::Asymptotic => {
            let per_round = asymptotic_rate_bits(inputs.h_tt, inputs.h_ff, cfg.d, cfg.f_ec);
            let ell = cfg.n_total * per_round;
            let components = KeyRateComponents {
                w: inputs.w,
                ..KeyRateComponents::default()
            };
            Ok(key_result(cfg, Regime::Asymptotic, ell, components))
        }
        Regime::Collective | Regime::Coherent => {
            let mu = hoeffding_mu(cfg.test_rounds(), sec.eps_at)?;
            let lambda = ec_leakage_bits(cfg.key_rounds(), inputs.h_tt, cfg.f_ec);
            match regime {
                Regime::Collective => key_length_collective(cfg, sec, inputs.w, mu, lambda),
                _ => key_length_coherent(cfg, sec, inputs.w, mu, lambda),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Dimension,
    BlockSize,
    SplittingRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Value of the swept variable at this grid point.
    pub value: f64,
    pub ell: f64,
    pub rate_bps: f64,
    pub components: KeyRateComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub regime: Regime,
    pub points: Vec<SweepPoint>,
    /// Index of the maximal rate_bps (first on ties).
    pub argmax: usize,
}

impl SweepTable {
    pub fn best(&self) -> &SweepPoint {
        &self.points[self.argmax]
    }

    fn from_points(
        variable: SweepVariable,
        regime: Regime,
        points: Vec<SweepPoint>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        let mut argmax = 0;
        for (i, p) in points.iter().enumerate() {
            if p.rate_bps > points[argmax].rate_bps {
                argmax = i;
            }
        }
        Ok(SweepTable {
            variable,
            regime,
            points,
            argmax,
        })
    }
}

/// Rate versus dimension, one measured input set per dimension.
pub fn sweep_dimension(
    data: &[RateInputs],
    template: &ProtocolConfig,
    sec: &SecurityParams,
    regime: Regime,
) -> Result<SweepTable> {
    let points = data
        .par_iter()
        .map(|inputs| {
            let cfg = ProtocolConfig {
                d: inputs.d,
                ..*template
            };
            let r = evaluate_rate(&cfg, sec, inputs, regime)?;
            Ok(SweepPoint {
                value: inputs.d as f64,
                ell: r.ell,
                rate_bps: r.rate_bps,
                components: r.components,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::from_points(SweepVariable::Dimension, regime, points)
}

/// Rate versus block size N at fixed dimension and splitting ratio.
pub fn sweep_block_size(
    inputs: &RateInputs,
    n_grid: &[f64],
    template: &ProtocolConfig,
    sec: &SecurityParams,
    regime: Regime,
) -> Result<SweepTable> {
    let points = n_grid
        .par_iter()
        .map(|&n_total| {
            let cfg = ProtocolConfig {
                n_total,
                d: inputs.d,
                ..*template
            };
            let r = evaluate_rate(&cfg, sec, inputs, regime)?;
            Ok(SweepPoint {
                value: n_total,
                ell: r.ell,
                rate_bps: r.rate_bps,
                components: r.components,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::from_points(SweepVariable::BlockSize, regime, points)
}

/// Rate versus splitting ratio q at fixed dimension and block size.
pub fn sweep_splitting(
    inputs: &RateInputs,
    q_grid: &[f64],
    template: &ProtocolConfig,
    sec: &SecurityParams,
    regime: Regime,
) -> Result<SweepTable> {
    let points = q_grid
        .par_iter()
        .map(|&q| {
            let cfg = ProtocolConfig {
                q,
                d: inputs.d,
                ..*template
            };
            let r = evaluate_rate(&cfg, sec, inputs, regime)?;
            Ok(SweepPoint {
                value: q,
                ell: r.ell,
                rate_bps: r.rate_bps,
                components: r.components,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::from_points(SweepVariable::SplittingRatio, regime, points)
}
