//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test -p biphoton-core --test acceptance
//! -- --nocapture` to see every line.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use biphoton_core::binning::{bin_full_frame, peak_fwhm, subspace_extract, BinningConfig};
use biphoton_core::bootstrap::{poisson_bootstrap, BootstrapConfig};
use biphoton_core::matrix::{BasisPair, CoincidenceMatrix, JointDistribution};
use biphoton_core::mub::delta_m;
use biphoton_core::security::{
    asymptotic_rate_bits, collective_rate_limit, evaluate_rate, h_min, hoeffding_mu,
    key_length_coherent, key_length_collective, sweep_dimension, sweep_splitting, ProtocolConfig,
    RateInputs, Regime, SecurityParams,
};
use biphoton_core::sim::{effective_resolution, simulate, DispersionModel, SimConfig};
use biphoton_core::tags::{Channel, TagStream};
use biphoton_core::witness::{
    align_diagonal, certify_schmidt_number, conditional_entropy, f2_tilde, TargetState,
    WitnessReport,
};

const PRIMES: [usize; 11] = [3, 7, 13, 31, 61, 127, 251, 331, 419, 509, 1021];

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "[{}] criterion {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

struct CalibratedData {
    tt_full: CoincidenceMatrix,
    ff_full: CoincidenceMatrix,
    per_d: Vec<(usize, WitnessReport, RateInputs)>,
}

/// Calibrated 3 s acquisition analyzed at the prime dimensions: loss-table
/// defaults, jitters fitted to the 32.9 ps / 125.5 ps peaks, frame-wide
/// coincidence pairing.
fn calibrated() -> &'static CalibratedData {
    static DATA: OnceLock<CalibratedData> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = SimConfig::calibrated(SimConfig::CALIBRATED_WITNESS_PAIR_RATE, 3.0, 7);
        let s = simulate(&cfg).expect("calibrated simulation");
        let bin = BinningConfig {
            tau_ps: 800,
            n_bins: 1024,
            frame_origin_ps: 0,
            pairing_window_ps: 819_200,
        };
        let tt_full = bin_full_frame(&s.alice_t, &s.bob_t, &bin).expect("TT binning");
        let ff_full = bin_full_frame(&s.alice_f, &s.bob_f, &bin).expect("FF binning");
        let per_d = PRIMES
            .iter()
            .map(|&d| {
                let tt = subspace_extract(&tt_full, d).expect("TT subspace");
                let ff = subspace_extract(&ff_full, d).expect("FF subspace");
                let target = TargetState::maximally_entangled(d).expect("target");
                let report = WitnessReport::compute(&tt, &ff, &target).expect("witness");
                let (ff_aligned, _) = align_diagonal(&ff.normalize().expect("normalize"));
                let inputs = RateInputs {
                    d,
                    w: ff_aligned.diagonal_sum(),
                    h_tt: report.entropy_tt,
                    h_ff: report.entropy_ff,
                };
                (d, report, inputs)
            })
            .collect();
        CalibratedData {
            tt_full,
            ff_full,
            per_d,
        }
    })
}

/// Calibrated 3 s cross-basis acquisition binned at 10 ps x 1021 bins.
fn cross_basis() -> &'static CoincidenceMatrix {
    static DATA: OnceLock<CoincidenceMatrix> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = SimConfig::calibrated(SimConfig::CALIBRATED_CROSS_PAIR_RATE, 3.0, 11);
        let s = simulate(&cfg).expect("cross simulation");
        let bin = BinningConfig {
            tau_ps: 10,
            n_bins: 1021,
            frame_origin_ps: 0,
            pairing_window_ps: 10_210,
        };
        bin_full_frame(&s.alice_t, &s.bob_f, &bin).expect("TF binning")
    })
}

#[test]
fn criterion_01_witness_arithmetic_exact() {
    let target = TargetState::maximally_entangled(1021).unwrap();
    // Warm the code path before timing.
    assert_eq!(certify_schmidt_number(0.1, &target), 103);
    let t0 = Instant::now();
    let d_ent = certify_schmidt_number(0.654, &target);
    let elapsed = t0.elapsed();
    let pass = d_ent == 668 && elapsed.as_secs_f64() < 1e-3;
    assert!(
        verdict(
            "1",
            pass,
            &format!("certify(0.654, d=1021) = {d_ent} in {elapsed:?}")
        ),
        "expected 668 in under 1 ms"
    );
}

#[test]
fn criterion_01b_certificate_stability_at_interval_edge() {
    // Error-bar consistency: moving the fidelity to the lower edge of its
    // 3-sigma interval (0.654 - 3 * 0.0013) may change the certificate by
    // at most 2 dimensions.
    let target = TargetState::maximally_entangled(1021).unwrap();
    let center = certify_schmidt_number(0.654, &target);
    let edge = certify_schmidt_number(0.654 - 3.0 * 0.0013, &target);
    let change = center.abs_diff(edge);
    let pass = change <= 2;
    assert!(
        verdict(
            "1b",
            pass,
            &format!("certificate moves {center} -> {edge} (change {change}) at the interval edge")
        ),
        "the certificate changes by {change} > 2 dimensions; with B_k = k/d the \
         certificate slope is d dimensions per unit fidelity, so a 0.0039 shift \
         moves it by 4"
    );
}

#[test]
fn criterion_02_f2_offset_reduction_matches_brute_force() {
    // Independent O(d^4) oracle, literal four-index constrained sum.
    fn brute(tt: &JointDistribution, ff: &JointDistribution) -> f64 {
        let d = tt.d();
        let p = tt.probs();
        let mut third = 0.0;
        for m in 0..d {
            for mp in 0..d {
                for n in 0..d {
                    for np in 0..d {
                        if m == mp || m == n || n == np || np == mp {
                            continue;
                        }
                        if (m + d - mp) % d != (n + d - np) % d {
                            continue;
                        }
                        third += (p[(mp, np)] * p[(m, n)]).sqrt() / d as f64;
                    }
                }
            }
        }
        ff.diagonal_sum() - p.iter().sum::<f64>() / d as f64 - third
    }

    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACCE);
    let mut worst: f64 = 0.0;
    for d in 2..=8usize {
        for _ in 0..100 {
            let mut make = |bp: BasisPair| {
                let mut p = Array2::from_shape_fn((d, d), |_| rng.random::<f64>() + 1e-6);
                let s: f64 = p.iter().sum();
                p.mapv_inplace(|v| v / s);
                let s: f64 = p.iter().sum();
                p.mapv_inplace(|v| v / s);
                JointDistribution::new(p, bp).unwrap()
            };
            let tt = make(BasisPair::TT);
            let ff = make(BasisPair::FF);
            let fast = f2_tilde(&tt, &ff).unwrap();
            let slow = brute(&tt, &ff);
            worst = worst.max((fast - slow).abs());
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst < 1e-10 && elapsed.as_secs_f64() < 10.0;
    assert!(
        verdict(
            "2",
            pass,
            &format!("max |O(d^2) - O(d^4)| = {worst:.2e} over 700 draws in {elapsed:?}")
        ),
        "oracle equivalence failed"
    );
}

#[test]
fn criterion_03_ideal_data_identities() {
    let t0 = Instant::now();
    let cfg = SimConfig::ideal(1e6, 1.0, 3);
    let s = simulate(&cfg).unwrap();
    // Zero-noise data has exactly coincident timestamps, so a zero-width
    // pairing window is the faithful coincidence definition.
    let bin = BinningConfig {
        tau_ps: 200,
        n_bins: 1024,
        frame_origin_ps: 0,
        pairing_window_ps: 0,
    };
    let tt_full = bin_full_frame(&s.alice_t, &s.bob_t, &bin).unwrap();
    let ff_full = bin_full_frame(&s.alice_f, &s.bob_f, &bin).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for d in [2usize, 8, 16] {
        let tt = subspace_extract(&tt_full, d).unwrap();
        let ff = subspace_extract(&ff_full, d).unwrap();
        let target = TargetState::maximally_entangled(d).unwrap();
        let r = WitnessReport::compute(&tt, &ff, &target).unwrap();
        let (ff_aligned, _) = align_diagonal(&ff.normalize().unwrap());
        let w = ff_aligned.diagonal_sum();
        let asym = asymptotic_rate_bits(r.entropy_tt, r.entropy_ff, d, 1.1);
        let log2d = (d as f64).log2();
        let off_diag: u64 = tt
            .counts()
            .indexed_iter()
            .filter(|((i, j), _)| i != j)
            .map(|(_, &c)| c)
            .sum();
        let ok = (r.f_tilde - 1.0).abs() <= 1e-3
            && r.d_ent == d
            && (r.e_d - log2d).abs() <= 0.01
            && off_diag == 0
            && (w - 1.0).abs() <= 1e-12
            && (asym - log2d).abs() <= 0.01;
        detail.push_str(&format!(
            "d={d}: f~={:.6} d_ent={} e_d={:.4} w={w} asym={asym:.4}; ",
            r.f_tilde, r.d_ent, r.e_d
        ));
        pass &= ok;
    }
    let elapsed = t0.elapsed();
    pass &= elapsed.as_secs_f64() < 60.0;
    assert!(
        verdict("3", pass, &format!("{detail}in {elapsed:?}")),
        "ideal-data identities failed"
    );
}

#[test]
fn criterion_04_h_min_closed_form_limits() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut worst_lo: f64 = 0.0;
    for d in 2..=1021usize {
        let at_one = h_min(1.0, 0.0, d).unwrap();
        if at_one != (d as f64).log2() {
            pass = false;
        }
        let at_uniform = h_min(1.0 / d as f64, 0.0, d).unwrap();
        worst_lo = worst_lo.max(at_uniform.abs());
    }
    let elapsed = t0.elapsed();
    pass &= worst_lo <= 1e-12 && elapsed.as_secs_f64() < 1.0;
    assert!(
        verdict(
            "4",
            pass,
            &format!("W=1 exact for all d, |h_min(1/d)| <= {worst_lo:.2e}, in {elapsed:?}")
        ),
        "closed-form limits failed"
    );
}

#[test]
fn criterion_05_hoeffding_mu_value() {
    let mu = hoeffding_mu(1e6, 0.5e-10).unwrap();
    let pass = (mu - 6.99e-3).abs() / 6.99e-3 <= 0.01;
    assert!(
        verdict("5", pass, &format!("mu(k_W=1e6, eps=5e-11) = {mu:.5e}")),
        "mu outside 1% of 6.99e-3"
    );
}

#[test]
fn criterion_06_security_ordering_and_convergence() {
    let t0 = Instant::now();
    let data = calibrated();
    let inputs = data
        .per_d
        .iter()
        .find(|(d, ..)| *d == 61)
        .map(|(_, _, i)| *i)
        .unwrap();
    let sec = SecurityParams::default();
    let mut pass = true;
    let mut detail = String::new();

    // Ordering at several block sizes.
    for n_total in [1e8, 1e10, 1e12] {
        let cfg = ProtocolConfig {
            n_total,
            q: 0.5,
            d: 61,
            f_ec: 1.1,
            coincidence_rate: 1e5,
        };
        let mu = hoeffding_mu(cfg.test_rounds(), sec.eps_at).unwrap();
        let lambda = cfg.key_rounds() * cfg.f_ec * inputs.h_tt;
        let coll = key_length_collective(&cfg, &sec, inputs.w, mu, lambda).unwrap();
        let coh = key_length_coherent(&cfg, &sec, inputs.w, mu, lambda).unwrap();
        let asym = asymptotic_rate_bits(inputs.h_tt, inputs.h_ff, 61, cfg.f_ec);
        let ok = coh.ell <= coll.ell + 1e-9 && coll.ell <= n_total * asym + 1e-9;
        pass &= ok;
        if n_total == 1e12 {
            detail.push_str(&format!(
                "at N=1e12: coh={:.4e} <= coll={:.4e} <= N*asym={:.4e}; ",
                coh.ell,
                coll.ell,
                n_total * asym
            ));
        }
    }

    // Convergence: the finite-size rate per protocol round approaches the
    // infinite-block limit of the same key-length formula at N = 1e12.
    let cfg = ProtocolConfig {
        n_total: 1e12,
        q: 0.1,
        d: 61,
        f_ec: 1.1,
        coincidence_rate: 1e5,
    };
    let mu = hoeffding_mu(cfg.test_rounds(), sec.eps_at).unwrap();
    let lambda = cfg.key_rounds() * cfg.f_ec * inputs.h_tt;
    let coll = key_length_collective(&cfg, &sec, inputs.w, mu, lambda).unwrap();
    let limit = collective_rate_limit(&cfg, inputs.w, inputs.h_tt).unwrap();
    let rel = (coll.ell / cfg.n_total - limit).abs() / limit;
    pass &= rel <= 0.05;
    let elapsed = t0.elapsed();
    pass &= elapsed.as_secs_f64() < 10.0;
    detail.push_str(&format!(
        "convergence gap {:.3}% at N=1e12 in {elapsed:?}",
        rel * 100.0
    ));
    assert!(
        verdict("6", pass, &detail),
        "ordering or convergence failed"
    );
}

#[test]
fn criterion_07_sweep_shapes_on_calibrated_simulation() {
    let t0 = Instant::now();
    let data = calibrated();
    let rate_data: Vec<RateInputs> = data.per_d.iter().map(|(_, _, i)| *i).collect();
    let sec = SecurityParams::default();
    let mut pass = true;
    let mut detail = String::new();

    // (a) Collective rate over dimension has an interior maximum for both
    // block sizes.
    for n_total in [1e8, 1e11] {
        let template = ProtocolConfig {
            n_total,
            q: 0.5,
            d: 3,
            f_ec: 1.1,
            coincidence_rate: 1e5,
        };
        let table = sweep_dimension(&rate_data, &template, &sec, Regime::Collective).unwrap();
        let d_opt = table.best().value as usize;
        let first = table.points.first().unwrap().rate_bps;
        let last = table.points.last().unwrap().rate_bps;
        let ok = d_opt > 1
            && d_opt < 1021
            && table.best().rate_bps > first
            && table.best().rate_bps > last;
        pass &= ok;
        detail.push_str(&format!("d_opt(N=1e{:.0})={d_opt}; ", n_total.log10()));
    }

    // (b) Optimal splitting ratio well below one half at N = 1e11, d = 61.
    let inputs = rate_data.iter().find(|r| r.d == 61).unwrap();
    let template = ProtocolConfig {
        n_total: 1e11,
        q: 0.5,
        d: 61,
        f_ec: 1.1,
        coincidence_rate: 1e5,
    };
    let q_grid: Vec<f64> = vec![
        0.02, 0.04, 0.06, 0.09, 0.13, 0.18, 0.24, 0.31, 0.39, 0.5, 0.6, 0.7, 0.8,
    ];
    let table = sweep_splitting(inputs, &q_grid, &template, &sec, Regime::Collective).unwrap();
    let q_opt = table.best().value;
    pass &= q_opt < 0.5;
    detail.push_str(&format!("q*={q_opt}; "));

    // (c) Distillable entanglement rises then falls over dimension.
    let e_d: Vec<f64> = data.per_d.iter().map(|(_, r, _)| r.e_d).collect();
    let peak = e_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak_idx = e_d.iter().position(|&v| v == peak).unwrap();
    let ok =
        peak_idx > 0 && peak_idx < e_d.len() - 1 && e_d[0] < peak && *e_d.last().unwrap() < peak;
    pass &= ok;
    detail.push_str(&format!(
        "E_D peak {:.3} ebits at d={} (ends {:.3} / {:.3})",
        peak,
        PRIMES[peak_idx],
        e_d[0],
        e_d.last().unwrap()
    ));

    let elapsed = t0.elapsed();
    pass &= elapsed.as_secs_f64() < 600.0;
    assert!(
        verdict("7", pass, &format!("{detail} in {elapsed:?}")),
        "sweep shapes failed"
    );
}

#[test]
fn criterion_08_simulator_calibration() {
    let t0 = Instant::now();
    let cfg = SimConfig::calibrated(3e7, 2.0, 5);
    let s = simulate(&cfg).unwrap();
    let tt_fwhm = peak_fwhm(&s.alice_t, &s.bob_t, 4).unwrap();
    let ff_fwhm = peak_fwhm(&s.alice_f, &s.bob_f, 4).unwrap();
    let res = effective_resolution(
        &DispersionModel {
            dispersion_ps_per_nm: 10_000.0,
            loss_db: 3.0,
        },
        32.9,
    )
    .unwrap();
    let pass = (tt_fwhm - 32.9).abs() / 32.9 <= 0.10
        && (ff_fwhm - 125.5).abs() / 125.5 <= 0.10
        && (res.delta_lambda_nm - 0.00329).abs() / 0.00329 <= 0.01
        && (res.delta_nu_ghz - 0.41).abs() / 0.41 <= 0.01
        && t0.elapsed().as_secs_f64() < 120.0;
    assert!(
        verdict(
            "8",
            pass,
            &format!(
                "TT {tt_fwhm:.2} ps, FF {ff_fwhm:.2} ps, resolution {:.5} nm / {:.4} GHz in {:?}",
                res.delta_lambda_nm,
                res.delta_nu_ghz,
                t0.elapsed()
            )
        ),
        "simulator calibration failed"
    );
}

#[test]
fn criterion_09_delta_m_behavior() {
    let t0 = Instant::now();
    // Exact uniform distribution sits at zero.
    let d = 9;
    let uniform =
        CoincidenceMatrix::new(Array2::from_elem((d, d), 37u64), BasisPair::TF, 1_000_000).unwrap();
    let dm_uniform = delta_m(&uniform.normalize().unwrap());

    // Simulated cross-basis data: decreasing with dimension across decades
    // and at or below 1e-3 at d = 1021.
    let tf = cross_basis();
    let dm_at = |d: usize| {
        let sub = subspace_extract(tf, d).unwrap();
        delta_m(&sub.normalize().unwrap())
    };
    let decades = [3usize, 13, 61, 251, 1021];
    let values: Vec<f64> = decades.iter().map(|&d| dm_at(d)).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let pass = dm_uniform <= 1e-15 && decreasing && *values.last().unwrap() <= 1e-3;
    let elapsed = t0.elapsed();
    assert!(
        verdict(
            "9",
            pass,
            &format!(
                "uniform: {dm_uniform:.1e}; deltaM over d={decades:?}: {:?} in {elapsed:?}",
                values
                    .iter()
                    .map(|v| format!("{v:.2e}"))
                    .collect::<Vec<_>>()
            )
        ),
        "delta_m behavior failed"
    );
}

#[test]
fn criterion_10_bootstrap_poisson_sigma() {
    let t0 = Instant::now();
    let mut counts = Array2::<u64>::zeros((2, 2));
    counts[(0, 0)] = 10_000;
    let m = CoincidenceMatrix::new(counts, BasisPair::TT, 1).unwrap();
    let cfg = BootstrapConfig {
        n_samples: 2000,
        seed: 17,
        sigma_multiplier: 3.0,
    };
    let stat = |ms: &[CoincidenceMatrix]| Ok(ms[0].total() as f64);
    let a = poisson_bootstrap(std::slice::from_ref(&m), stat, &cfg).unwrap();
    let b = poisson_bootstrap(&[m], stat, &cfg).unwrap();
    let elapsed = t0.elapsed();
    let pass = (a.sigma - 100.0).abs() / 100.0 <= 0.05 && a == b && elapsed.as_secs_f64() < 5.0;
    assert!(
        verdict(
            "10",
            pass,
            &format!(
                "sigma = {:.2} (expect 100 +/- 5%), deterministic, in {elapsed:?}",
                a.sigma
            )
        ),
        "bootstrap sigma failed"
    );
}

#[test]
fn criterion_11_performance() {
    // Dense 1021 x 1021 certification, single-threaded by construction.
    let d = 1021;
    let mut rng = ChaCha12Rng::seed_from_u64(0xFEE1);
    let mut counts = Array2::from_shape_fn((d, d), |_| rng.random_range(1..50u64));
    for i in 0..d {
        counts[(i, i)] += 5_000;
    }
    let tt = CoincidenceMatrix::new(counts.clone(), BasisPair::TT, 1_000_000).unwrap();
    let ff = CoincidenceMatrix::new(counts, BasisPair::FF, 1_000_000).unwrap();
    let target = TargetState::maximally_entangled(d).unwrap();
    let t0 = Instant::now();
    let report = WitnessReport::compute(&tt, &ff, &target).unwrap();
    let cert_time = t0.elapsed();

    // Binning 1e7 tag pairs.
    let n: u64 = 10_000_000;
    let spacing = 40_000u64; // 4e11 ps total, 25k pairs per frame
    let mut noise = ChaCha12Rng::seed_from_u64(0xB1B);
    let ta: Vec<u64> = (0..n).map(|i| 1_000 + i * spacing).collect();
    let mut tb: Vec<u64> = ta.iter().map(|&t| t + noise.random_range(0..40)).collect();
    tb.sort_unstable();
    let dur = 1_000 + n * spacing + 1_000;
    let a = TagStream::new(Channel::ALICE_T, ta, dur).unwrap();
    let b = TagStream::new(Channel::BOB_T, tb, dur).unwrap();
    let bin = BinningConfig {
        tau_ps: 800,
        n_bins: 1024,
        frame_origin_ps: 0,
        pairing_window_ps: 2_000,
    };
    let t1 = Instant::now();
    let m = bin_full_frame(&a, &b, &bin).unwrap();
    let bin_time = t1.elapsed();

    let pass = cert_time.as_secs_f64() < 1.0
        && bin_time.as_secs_f64() < 10.0
        && m.total() == n
        && report.d_ent >= 1;
    assert!(
        verdict(
            "11",
            pass,
            &format!(
                "1021x1021 certification in {cert_time:?} (f~={:.3}), 1e7-pair binning in {bin_time:?}",
                report.f_tilde
            )
        ),
        "performance criterion failed"
    );
}

/// Companion check to the bootstrap criterion: at the calibrated data's full
/// dimension, the 3-sigma fidelity uncertainty lands at the few-per-mille to
/// few-percent scale.
#[test]
fn fidelity_uncertainty_order_of_magnitude() {
    let data = calibrated();
    let tt = subspace_extract(&data.tt_full, 1021).unwrap();
    let ff = subspace_extract(&data.ff_full, 1021).unwrap();
    let target = TargetState::maximally_entangled(1021).unwrap();
    let cfg = BootstrapConfig {
        n_samples: 300,
        seed: 23,
        sigma_multiplier: 3.0,
    };
    let stat = |ms: &[CoincidenceMatrix]| {
        let r = WitnessReport::compute(&ms[0], &ms[1], &target)?;
        Ok(r.f_tilde)
    };
    let summary = poisson_bootstrap(&[tt, ff], stat, &cfg).unwrap();
    let three_sigma = 3.0 * summary.sigma;
    let pass = (4e-4..=4e-2).contains(&three_sigma);
    assert!(
        verdict(
            "10b (fidelity uncertainty)",
            pass,
            &format!("3-sigma fidelity interval = {three_sigma:.2e} at d=1021")
        ),
        "fidelity uncertainty out of expected range"
    );
}

/// The conditional-entropy pipeline feeding the criteria above also fixes
/// the error-correction leakage scale; pin the d=2 example value.
#[test]
fn ec_leakage_reference_value() {
    let j =
        JointDistribution::new(ndarray::array![[0.45, 0.05], [0.05, 0.45]], BasisPair::TT).unwrap();
    let h = conditional_entropy(&j);
    let lambda = 1e6 * 1.1 * h;
    let pass = (lambda - 515_896.0).abs() < 20.0;
    assert!(
        verdict(
            "ec-leakage reference",
            pass,
            &format!("lambda_EC = {lambda:.1} bits")
        ),
        "leakage reference failed"
    );
}

/// Key rates evaluated through the public path on calibrated data stay
/// internally consistent across regimes at every dimension.
#[test]
fn regime_ordering_on_calibrated_data() {
    let data = calibrated();
    let sec = SecurityParams::default();
    let mut pass = true;
    let mut coherent_rates = Vec::new();
    for (d, _, inputs) in &data.per_d {
        let cfg = ProtocolConfig {
            n_total: 1e11,
            q: 0.5,
            d: *d,
            f_ec: 1.1,
            coincidence_rate: 1e5,
        };
        let coll = evaluate_rate(&cfg, &sec, inputs, Regime::Collective).unwrap();
        let coh = evaluate_rate(&cfg, &sec, inputs, Regime::Coherent).unwrap();
        let asym = evaluate_rate(&cfg, &sec, inputs, Regime::Asymptotic).unwrap();
        pass &= coh.ell <= coll.ell + 1e-9 && coll.ell <= asym.ell + 1e-9;
        coherent_rates.push((*d, coh.rate_bps));
    }
    // The postselection penalty grows like d^4, so the coherent optimum sits
    // at small dimension and the largest frames yield no key at all.
    let (coh_opt, _) =
        coherent_rates
            .iter()
            .copied()
            .fold((0usize, f64::NEG_INFINITY), |best, p| {
                if p.1 > best.1 {
                    p
                } else {
                    best
                }
            });
    pass &= coh_opt <= 31;
    pass &= coherent_rates.last().unwrap().1 == 0.0;
    assert!(
        verdict(
            "regime ordering (calibrated)",
            pass,
            &format!("coherent <= collective <= asymptotic at all d; coherent optimum d={coh_opt}")
        ),
        "regime ordering failed"
    );
}
