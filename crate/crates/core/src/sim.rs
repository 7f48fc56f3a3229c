//! Phenomenological generator of correlated timestamp streams.
//!
//! Models the SPDC source, per-path losses, detector jitter and darks, and
//! the time-to-frequency dispersion mapping. Emission times follow a
//! Poisson process; each pair carries a Gaussian frequency detuning that is
//! perfectly anti-correlated between signal and idler (CW pump). Photons
//! routed to the frequency arm acquire an arrival-time shift proportional
//! to their detuning; the two arms carry opposite-sign dispersion so the
//! shift is common to both photons and cancels in the arrival-time
//! difference while mapping detuning onto absolute arrival time.
//!
//! Jitter and the spectrum are Gaussian surrogates parameterized by their
//! FWHM, which is all the downstream observables use. Imperfect non-local
//! cancellation is exposed as a single residual-dispersion knob applied to
//! the signal arm.
//!
//! Generation is partitioned into fixed 100 ms time segments with seeds
//! derived per segment, so output is bit-identical for a given
//! (config, seed) regardless of how many threads run the segments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::derive_seed;
use crate::error::{Error, Result};
use crate::matrix::BasisPair;
use crate::tags::{Channel, TagStream};

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;
/// Telecom C-band reference wavelength used for dispersion conversions.
pub const DEFAULT_WAVELENGTH_NM: f64 = 1550.0;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)
const SEGMENT_PS: u64 = 100_000_000_000; // 100 ms

/// Wavelength shift per unit frequency detuning, nm per GHz.
pub fn nm_per_ghz(wavelength_nm: f64) -> f64 {
    wavelength_nm * wavelength_nm / SPEED_OF_LIGHT_M_PER_S
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Generated pairs per second.
    pub pair_rate: f64,
    /// FWHM bandwidth of the biphoton spectrum, GHz.
    pub spectral_fwhm_ghz: f64,
    /// Intrinsic FWHM of the signal-idler arrival-time difference, ps.
    pub correlation_time_ps: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel {
            pair_rate: 1e6,
            spectral_fwhm_ghz: 250.0,
            correlation_time_ps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// System timing jitter FWHM, ps.
    pub jitter_fwhm_ps: f64,
    /// Detection efficiency in [0, 1].
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate_hz: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            jitter_fwhm_ps: 15.0,
            efficiency: 0.8,
            dark_rate_hz: 100.0,
        }
    }
}

/// One time-to-frequency converter: a large chromatic dispersion plus its
/// insertion loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    /// Signed dispersion, ps/nm.
    pub dispersion_ps_per_nm: f64,
    pub loss_db: f64,
}

impl Default for DispersionModel {
    fn default() -> Self {
        DispersionModel {
            dispersion_ps_per_nm: 10_000.0,
            loss_db: 3.0,
        }
    }
}

/// Characterized optical losses common to every photon path, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub spdc_coupling_db: f64,
    pub fiber_bench_db: f64,
    pub longpass_filter_db: f64,
    pub bandpass_filter_db: f64,
    pub polarization_controller_db: f64,
    pub pbs_db: f64,
    pub connector_db: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        LossBudget {
            spdc_coupling_db: 3.0,
            fiber_bench_db: 0.97,
            longpass_filter_db: 0.8,
            bandpass_filter_db: 0.2,
            polarization_controller_db: 1.0,
            pbs_db: 1.1,
            connector_db: 1.0,
        }
    }
}

impl LossBudget {
    /// No optical loss anywhere; useful for ideal-data oracles.
    pub fn lossless() -> Self {
        LossBudget {
            spdc_coupling_db: 0.0,
            fiber_bench_db: 0.0,
            longpass_filter_db: 0.0,
            bandpass_filter_db: 0.0,
            polarization_controller_db: 0.0,
            pbs_db: 0.0,
            connector_db: 0.0,
        }
    }

    pub fn common_db(&self) -> f64 {
        self.spdc_coupling_db
            + self.fiber_bench_db
            + self.longpass_filter_db
            + self.bandpass_filter_db
            + self.polarization_controller_db
            + self.pbs_db
            + self.connector_db
    }
}

fn db_to_efficiency(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Detector models for the four arm/basis combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorBank {
    pub alice_t: DetectorModel,
    pub alice_f: DetectorModel,
    pub bob_t: DetectorModel,
    pub bob_f: DetectorModel,
}

impl DetectorBank {
    pub fn uniform(model: DetectorModel) -> Self {
        DetectorBank {
            alice_t: model,
            alice_f: model,
            bob_t: model,
            bob_f: model,
        }
    }
}

impl Default for DetectorBank {
    fn default() -> Self {
        DetectorBank::uniform(DetectorModel::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub source: SourceModel,
    pub detectors: DetectorBank,
    /// Dispersion module on Alice's (signal) frequency arm.
    pub dispersion_alice: DispersionModel,
    /// Dispersion module on Bob's (idler) frequency arm.
    pub dispersion_bob: DispersionModel,
    /// Residual uncompensated dispersion on the signal arm, ps/nm.
    #[serde(default)]
    pub residual_dispersion_ps_per_nm: f64,
    /// Probability of routing a photon to the frequency basis.
    pub basis_split: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub loss: LossBudget,
    #[serde(default = "default_wavelength")]
    pub center_wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            source: SourceModel::default(),
            detectors: DetectorBank::default(),
            dispersion_alice: DispersionModel {
                dispersion_ps_per_nm: 10_000.0,
                loss_db: 3.0,
            },
            dispersion_bob: DispersionModel {
                dispersion_ps_per_nm: -10_000.0,
                loss_db: 3.0,
            },
            residual_dispersion_ps_per_nm: 0.0,
            basis_split: 0.5,
            duration_s: 1.0,
            seed: 0,
            loss: LossBudget::default(),
            center_wavelength_nm: DEFAULT_WAVELENGTH_NM,
        }
    }
}

impl SimConfig {
    /// Noise-free configuration: no jitter, no darks, no loss, exactly
    /// matched dispersion. Every generated pair is detected in the same
    /// time bin on both sides.
    pub fn ideal(pair_rate: f64, duration_s: f64, seed: u64) -> Self {
        let det = DetectorModel {
            jitter_fwhm_ps: 0.0,
            efficiency: 1.0,
            dark_rate_hz: 0.0,
        };
        SimConfig {
            source: SourceModel {
                pair_rate,
                spectral_fwhm_ghz: 250.0,
                correlation_time_ps: 0.0,
            },
            detectors: DetectorBank::uniform(det),
            dispersion_alice: DispersionModel {
                dispersion_ps_per_nm: 10_000.0,
                loss_db: 0.0,
            },
            dispersion_bob: DispersionModel {
                dispersion_ps_per_nm: -10_000.0,
                loss_db: 0.0,
            },
            residual_dispersion_ps_per_nm: 0.0,
            duration_s,
            seed,
            loss: LossBudget::lossless(),
            ..SimConfig::default()
        }
    }

    /// Pair rate for certification/key-rate studies at 3 s acquisitions:
    /// with frame-wide pairing the accidental-to-true ratio is
    /// `pair_rate * 2 * frame`, and this value puts the accidental floor
    /// near 30% at the full 1024-bin frame, which is what makes both the
    /// distillable entanglement and the key rate roll over at high
    /// dimension.
    pub const CALIBRATED_WITNESS_PAIR_RATE: f64 = 7.5e5;

    /// Pair rate for cross-basis unbiasedness runs: high enough that a 3 s
    /// acquisition collects order 10^6 cross-basis coincidences.
    pub const CALIBRATED_CROSS_PAIR_RATE: f64 = 1.2e8;

    /// Configuration reproducing the measured correlation-peak widths:
    /// detector jitter set so the TT difference FWHM comes out at
    /// `tt_fwhm_ps`, and the residual-dispersion knob fitted in closed form
    /// so the FF difference FWHM comes out at `ff_fwhm_ps`.
    pub fn calibrated(pair_rate: f64, duration_s: f64, seed: u64) -> Self {
        let tt_fwhm_ps = 32.9;
        let ff_fwhm_ps = 125.5;
        let source = SourceModel {
            pair_rate,
            ..SourceModel::default()
        };
        let per_detector_jitter =
            ((tt_fwhm_ps * tt_fwhm_ps - source.correlation_time_ps.powi(2)) / 2.0).sqrt();
        let residual = (ff_fwhm_ps * ff_fwhm_ps - tt_fwhm_ps * tt_fwhm_ps).sqrt()
            / (nm_per_ghz(DEFAULT_WAVELENGTH_NM) * source.spectral_fwhm_ghz);
        let det = DetectorModel {
            jitter_fwhm_ps: per_detector_jitter,
            ..DetectorModel::default()
        };
        SimConfig {
            source,
            detectors: DetectorBank::uniform(det),
            dispersion_alice: DispersionModel {
                dispersion_ps_per_nm: 10_000.0,
                loss_db: 2.61,
            },
            dispersion_bob: DispersionModel {
                dispersion_ps_per_nm: -10_000.0,
                loss_db: 3.67,
            },
            residual_dispersion_ps_per_nm: residual,
            duration_s,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source.pair_rate.is_finite() && self.source.pair_rate > 0.0) {
            return Err(Error::config("pair rate must be positive"));
        }
        if !(self.source.spectral_fwhm_ghz.is_finite() && self.source.spectral_fwhm_ghz > 0.0) {
            return Err(Error::config("spectral bandwidth must be positive"));
        }
        if self.source.correlation_time_ps < 0.0 {
            return Err(Error::config("correlation time must be nonnegative"));
        }
        for det in [
            self.detectors.alice_t,
            self.detectors.alice_f,
            self.detectors.bob_t,
            self.detectors.bob_f,
        ] {
            if !(0.0..=1.0).contains(&det.efficiency) {
                return Err(Error::config("detector efficiency must lie in [0, 1]"));
            }
            if det.jitter_fwhm_ps < 0.0 || det.dark_rate_hz < 0.0 {
                return Err(Error::config(
                    "detector jitter and dark rate must be nonnegative",
                ));
            }
        }
        if self.basis_split <= 0.0 || self.basis_split >= 1.0 {
            return Err(Error::config(
                "basis splitting ratio must lie strictly in (0, 1)",
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if self.dispersion_alice.dispersion_ps_per_nm == 0.0
            || self.dispersion_bob.dispersion_ps_per_nm == 0.0
        {
            return Err(Error::config("frequency-basis dispersion must be nonzero"));
        }
        Ok(())
    }

    fn duration_ps(&self) -> u64 {
        (self.duration_s * 1e12).round() as u64
    }

    /// Per-path efficiency: common losses, dispersion-module loss on the
    /// frequency arms, and the detector efficiency.
    pub fn path_efficiency(&self, channel: Channel) -> f64 {
        let common = db_to_efficiency(self.loss.common_db());
        let (det, disp_db) = match channel {
            Channel::ALICE_T => (self.detectors.alice_t, 0.0),
            Channel::ALICE_F => (self.detectors.alice_f, self.dispersion_alice.loss_db),
            Channel::BOB_T => (self.detectors.bob_t, 0.0),
            Channel::BOB_F => (self.detectors.bob_f, self.dispersion_bob.loss_db),
        };
        common * db_to_efficiency(disp_db) * det.efficiency
    }
}

/// The four detector streams of one simulated acquisition.
#[derive(Debug, Clone)]
pub struct SimStreams {
    pub alice_t: TagStream,
    pub alice_f: TagStream,
    pub bob_t: TagStream,
    pub bob_f: TagStream,
}

impl SimStreams {
    /// Alice/Bob stream pair for a basis-pair measurement.
    pub fn pair(&self, basis_pair: BasisPair) -> (&TagStream, &TagStream) {
        match basis_pair {
            BasisPair::TT => (&self.alice_t, &self.bob_t),
            BasisPair::FF => (&self.alice_f, &self.bob_f),
            BasisPair::TF => (&self.alice_t, &self.bob_f),
            BasisPair::FT => (&self.alice_f, &self.bob_t),
        }
    }
}

#[derive(Default)]
struct SegmentEvents {
    alice_t: Vec<u64>,
    alice_f: Vec<u64>,
    bob_t: Vec<u64>,
    bob_f: Vec<u64>,
}

fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

/// Generate the timestamp streams for one acquisition.
pub fn simulate(cfg: &SimConfig) -> Result<SimStreams> {
    cfg.validate()?;
    let duration_ps = cfg.duration_ps();
    let n_segments = duration_ps.div_ceil(SEGMENT_PS);
    let k = nm_per_ghz(cfg.center_wavelength_nm);
    let sigma_nu = sigma_from_fwhm(cfg.source.spectral_fwhm_ghz);
    let sigma_corr = sigma_from_fwhm(cfg.source.correlation_time_ps);
    // Identical dispersion-induced shift on both photons requires
    // D_bob * (-detuning) == D_alice * detuning; the residual knob breaks
    // the signal-arm match deliberately.
    let disp_alice = cfg.dispersion_alice.dispersion_ps_per_nm + cfg.residual_dispersion_ps_per_nm;
    let disp_bob = cfg.dispersion_bob.dispersion_ps_per_nm;
    let eta = [
        cfg.path_efficiency(Channel::ALICE_T),
        cfg.path_efficiency(Channel::ALICE_F),
        cfg.path_efficiency(Channel::BOB_T),
        cfg.path_efficiency(Channel::BOB_F),
    ];
    let q = cfg.basis_split;

    let segments: Vec<SegmentEvents> = (0..n_segments)
        .into_par_iter()
        .map(|seg| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, seg));
            let seg_start = seg * SEGMENT_PS;
            let seg_end = (seg_start + SEGMENT_PS).min(duration_ps);
            let seg_s = (seg_end - seg_start) as f64 * 1e-12;
            let mut ev = SegmentEvents::default();

            let mean_pairs = cfg.source.pair_rate * seg_s;
            let n_pairs = if mean_pairs > 0.0 {
                Poisson::new(mean_pairs)
                    .expect("positive mean")
                    .sample(&mut rng) as u64
            } else {
                0
            };
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            for _ in 0..n_pairs {
                let t0 = rng.random_range(seg_start..seg_end) as f64;
                let detuning = normal.sample(&mut rng) * sigma_nu;
                let dt = if sigma_corr > 0.0 {
                    normal.sample(&mut rng) * sigma_corr
                } else {
                    0.0
                };
                // (photon base time, detuning sign, arm dispersion, channels)
                let photons = [
                    (t0 + dt / 2.0, detuning, disp_alice, 0usize, 1usize),
                    (t0 - dt / 2.0, -detuning, disp_bob, 2usize, 3usize),
                ];
                for (base, nu, disp, t_idx, f_idx) in photons {
                    let freq_basis = rng.random::<f64>() < q;
                    let idx = if freq_basis { f_idx } else { t_idx };
                    if rng.random::<f64>() >= eta[idx] {
                        continue;
                    }
                    let jitter_fwhm = match idx {
                        0 => cfg.detectors.alice_t.jitter_fwhm_ps,
                        1 => cfg.detectors.alice_f.jitter_fwhm_ps,
                        2 => cfg.detectors.bob_t.jitter_fwhm_ps,
                        _ => cfg.detectors.bob_f.jitter_fwhm_ps,
                    };
                    let mut t = base;
                    if freq_basis {
                        t += disp * k * nu;
                    }
                    if jitter_fwhm > 0.0 {
                        t += normal.sample(&mut rng) * sigma_from_fwhm(jitter_fwhm);
                    }
                    let t = t.round();
                    if t < 0.0 || t > duration_ps as f64 {
                        continue;
                    }
                    let t = t as u64;
                    match idx {
                        0 => ev.alice_t.push(t),
                        1 => ev.alice_f.push(t),
                        2 => ev.bob_t.push(t),
                        _ => ev.bob_f.push(t),
                    }
                }
            }

            // Dark counts, uniform over the segment.
            let darks = [
                (cfg.detectors.alice_t.dark_rate_hz, 0usize),
                (cfg.detectors.alice_f.dark_rate_hz, 1),
                (cfg.detectors.bob_t.dark_rate_hz, 2),
                (cfg.detectors.bob_f.dark_rate_hz, 3),
            ];
            for (rate, idx) in darks {
                if rate <= 0.0 {
                    continue;
                }
                let n = Poisson::new(rate * seg_s)
                    .expect("positive mean")
                    .sample(&mut rng) as u64;
                for _ in 0..n {
                    let t = rng.random_range(seg_start..seg_end);
                    match idx {
                        0 => ev.alice_t.push(t),
                        1 => ev.alice_f.push(t),
                        2 => ev.bob_t.push(t),
                        _ => ev.bob_f.push(t),
                    }
                }
            }
            ev
        })
        .collect();

    let collect =
        |select: fn(&SegmentEvents) -> &Vec<u64>, channel: Channel| -> Result<TagStream> {
            let mut tags: Vec<u64> = segments
                .iter()
                .flat_map(|s| select(s).iter().copied())
                .collect();
            tags.par_sort_unstable();
            TagStream::new(channel, tags, duration_ps)
        };

    Ok(SimStreams {
        alice_t: collect(|s| &s.alice_t, Channel::ALICE_T)?,
        alice_f: collect(|s| &s.alice_f, Channel::ALICE_F)?,
        bob_t: collect(|s| &s.bob_t, Channel::BOB_T)?,
        bob_f: collect(|s| &s.bob_f, Channel::BOB_F)?,
    })
}

/// Effective spectral resolution of a dispersive arrival-time measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveResolution {
    pub delta_lambda_nm: f64,
    pub delta_nu_ghz: f64,
}

/// Timing-jitter FWHM divided by the applied dispersion, converted to
/// frequency units at the given center wavelength.
pub fn effective_resolution_at(
    disp: &DispersionModel,
    jitter_fwhm_ps: f64,
    wavelength_nm: f64,
) -> Result<EffectiveResolution> {
    if disp.dispersion_ps_per_nm == 0.0 {
        return Err(Error::numeric(
            "effective resolution undefined at zero dispersion",
        ));
    }
    if jitter_fwhm_ps < 0.0 {
        return Err(Error::config("jitter must be nonnegative"));
    }
    let delta_lambda_nm = jitter_fwhm_ps / disp.dispersion_ps_per_nm.abs();
    let delta_nu_ghz = delta_lambda_nm / nm_per_ghz(wavelength_nm);
    Ok(EffectiveResolution {
        delta_lambda_nm,
        delta_nu_ghz,
    })
}

/// [`effective_resolution_at`] at the default 1550 nm reference wavelength.
pub fn effective_resolution(
    disp: &DispersionModel,
    jitter_fwhm_ps: f64,
) -> Result<EffectiveResolution> {
    effective_resolution_at(disp, jitter_fwhm_ps, DEFAULT_WAVELENGTH_NM)
}
