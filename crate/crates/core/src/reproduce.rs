//! Acceptance checks: each function runs one end-to-end check and reports
//! pass/fail with the numbers behind the verdict.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{detection_efficiency, extract_lifetime, hole_to_homogeneous, match_resonances, survey_pipeline, SurveyOptions};
use crate::cavity::{kappa_for_quality, CavityDesign, CavityInputs, SILICON_INDEX};
use crate::dynamics::{
    background_trace, decay_trace, eq1_reference, reverse_field_check, rho_res, sample_trace, simulate_hole, zeeman_lines, BranchWeight,
    HoleBurnConfig, ZeemanSite, ZeemanSubsite,
};
use crate::fit::{
    detect_peaks_in, finite_difference_gradient, least_squares_fit, Biexponential, FitOptions, Lorentzian, LorentzianDip, ModelFunction,
    SingleExponential,
};
use crate::model::{frequency_to_wavelength, wavelength_to_frequency, Catalog, DetectorModel, ScanProtocol};
use crate::synth::{expected_spectrum, sample_spectrum, Spectrum};

/// Repetitions per lifetime trace that give a ~2.5 µs single-exponential fit
/// error at 1527.565 nm, the level of the measured background study.
pub const PAPER_LIFETIME_REPETITIONS: u32 = 14_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub details: Vec<String>,
}

impl CriterionOutcome {
    fn new(id: u32, title: &str) -> Self {
        CriterionOutcome { id, title: title.to_string(), passed: true, details: Vec::new() }
    }

    /// Records a sub-check; any failed sub-check fails the criterion.
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.passed &= ok;
        self.details.push(format!("[{}] {}", if ok { "ok" } else { "FAIL" }, detail.into()));
    }

    fn note(&mut self, detail: impl Into<String>) {
        self.details.push(format!("[info] {}", detail.into()));
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        format!("criterion {} {}: {}", self.id, if self.passed { "PASS" } else { "FAIL" }, self.title)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceOptions {
    pub survey_seed: u64,
    pub lifetime_seeds: u64,
    pub lifetime_repetitions: u32,
    /// Random cases per property suite.
    pub property_cases: usize,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions { survey_seed: 7, lifetime_seeds: 20, lifetime_repetitions: PAPER_LIFETIME_REPETITIONS, property_cases: 200 }
    }
}

/// Survey round trip on the full bundled catalog.
pub fn survey_round_trip(seed: u64) -> CriterionOutcome {
    let mut out = CriterionOutcome::new(1, "survey round-trip (70 peaks, centers, widths, runtime)");
    let start = Instant::now();
    let truth = Catalog::table1();
    let protocol = ScanProtocol::default();
    let detector = DetectorModel::default();
    let result = expected_spectrum(&truth, &protocol, &detector)
        .and_then(|e| sample_spectrum(&e, seed))
        .and_then(|s| survey_pipeline(&s, &SurveyOptions::default()));
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            out.check(false, format!("pipeline error: {e}"));
            return out;
        }
    };
    let found = result.lines.len();
    out.check(found == truth.len(), format!("{found} peaks at prominence >= 0.15 counts/pulse (expected {})", truth.len()));
    let failed: Vec<_> = result.lines.iter().filter(|l| l.error.is_some()).collect();
    out.check(failed.is_empty(), format!("{} peak fits failed", failed.len()));

    let mut center_bad = Vec::new();
    let mut width_bad = Vec::new();
    let mut missing = Vec::new();
    for line in &truth {
        let f = line.center_frequency_hz();
        let nearest = result.catalog.iter().map(|r| (r.center_frequency_hz() - f, r)).min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        let Some((dc, fitted)) = nearest.filter(|(d, _)| d.abs() <= 0.5 * line.inhomogeneous_fwhm_hz) else {
            missing.push(format!("{:.3}", line.center_wavelength_nm));
            continue;
        };
        let dw = fitted.inhomogeneous_fwhm_hz / line.inhomogeneous_fwhm_hz - 1.0;
        let tol = if line.amplitude >= 1.0 { 0.10 } else { 0.20 };
        if dc.abs() > 100e6 {
            center_bad.push(format!("{:.3} nm off by {:.0} MHz", line.center_wavelength_nm, dc / 1e6));
        }
        if dw.abs() > tol {
            width_bad.push(format!("{:.3} nm width off by {:.1}%", line.center_wavelength_nm, 100.0 * dw));
        }
    }
    out.check(missing.is_empty(), format!("undetected lines: [{}]", missing.join(", ")));
    out.check(center_bad.is_empty(), format!("centers within 100 MHz; violations: [{}]", center_bad.join("; ")));
    out.check(width_bad.is_empty(), format!("FWHM within 10%/20%; violations: [{}]", width_bad.join("; ")));
    let elapsed = start.elapsed().as_secs_f64();
    out.check(elapsed < 300.0, format!("runtime {elapsed:.1} s (limit 300 s)"));
    out
}

/// Background-subtracted lifetime fits on two fixtures, noiseless and noisy.
pub fn lifetime_round_trip(seeds: u64, repetitions: u32) -> CriterionOutcome {
    let mut out = CriterionOutcome::new(2, "lifetime round-trip (2% noiseless, 3 standard errors noisy)");
    let catalog = Catalog::table1();
    let detector = DetectorModel::default();
    for wl in [1527.565, 1538.685] {
        let Some(site) = catalog.find(wl, 1e-6) else {
            out.check(false, format!("{wl} nm missing from the catalog"));
            continue;
        };
        let tau = site.lifetime_s.unwrap_or(f64::NAN);
        let run = |protocol: &ScanProtocol, seed: Option<u64>| -> crate::Result<(f64, f64)> {
            let mut on = decay_trace(site, &detector, protocol, 5e-3)?;
            let mut off = background_trace(&detector, protocol, 5e-3)?;
            if let Some(s) = seed {
                on = sample_trace(&on, 2 * s);
                off = sample_trace(&off, 2 * s + 1);
            }
            extract_lifetime(&on, &off)?.lifetime().ok_or_else(|| crate::Error::ModelSelection("no single-exponential fit".into()))
        };
        match run(&ScanProtocol::default(), None) {
            Ok((fitted, _)) => {
                let rel = fitted / tau - 1.0;
                out.check(rel.abs() < 0.02, format!("{wl} nm noiseless: tau {:.4} ms vs {:.3} ms ({:+.2e})", fitted * 1e3, tau * 1e3, rel));
            }
            Err(e) => out.check(false, format!("{wl} nm noiseless: {e}")),
        }
        let protocol = ScanProtocol { repetitions, ..ScanProtocol::default() };
        let mut worst: f64 = 0.0;
        let mut mean_se = 0.0;
        let mut outside = 0;
        let mut errors = 0;
        for s in 0..seeds {
            match run(&protocol, Some(s)) {
                Ok((fitted, se)) => {
                    let z = (fitted - tau) / se;
                    worst = worst.max(z.abs());
                    mean_se += se / seeds as f64;
                    outside += usize::from(z.abs() > 3.0);
                }
                Err(_) => errors += 1,
            }
        }
        out.check(
            outside == 0 && errors == 0,
            format!(
                "{wl} nm, {seeds} seeds at {repetitions} repetitions: mean standard error {:.2} us, max |z| {worst:.2}, {outside} beyond 3 sigma, {errors} failed fits",
                mean_se * 1e6
            ),
        );
    }
    out
}

/// Hole width and homogeneous bound from the simulator.
pub fn hole_round_trip() -> CriterionOutcome {
    let mut out = CriterionOutcome::new(3, "hole-burning round-trip (1.5 MHz, 2.8 MHz, 90 us delay)");
    let lifetime = 0.764e-3;
    let width = |homogeneous: f64, delay: f64| -> crate::Result<(f64, f64)> {
        let cfg = HoleBurnConfig { delay_s: delay, ..HoleBurnConfig::weak_pump(homogeneous, lifetime) };
        let profile = simulate_hole(&cfg)?;
        let a = hole_to_homogeneous(&profile.detunings_hz, &profile.signal_norm)?;
        Ok((a.hole_fwhm_hz, a.homogeneous_bound_hz))
    };
    match width(0.75e6, 0.0) {
        Ok((fwhm, bound)) => {
            out.check((fwhm / 1.5e6 - 1.0).abs() <= 0.05, format!("gamma 0.75 MHz: hole FWHM {:.4} MHz (1.5 +- 5%)", fwhm / 1e6));
            out.check((bound / 0.75e6 - 1.0).abs() <= 0.05, format!("gamma 0.75 MHz: bound {:.4} MHz (0.75 +- 5%)", bound / 1e6));
            match width(0.75e6, 90e-6) {
                Ok((delayed, _)) => {
                    let change = delayed / fwhm - 1.0;
                    out.check(change.abs() < 0.05, format!("90 us delay: FWHM {:.4} MHz, change {:+.3}%", delayed / 1e6, 100.0 * change));
                }
                Err(e) => out.check(false, format!("90 us delay: {e}")),
            }
        }
        Err(e) => out.check(false, format!("gamma 0.75 MHz: {e}")),
    }
    match width(1.4e6, 0.0) {
        Ok((fwhm, _)) => {
            out.check((fwhm / 2.8e6 - 1.0).abs() <= 0.05, format!("gamma 1.4 MHz: hole FWHM {:.4} MHz (2.8 +- 5%)", fwhm / 1e6))
        }
        Err(e) => out.check(false, format!("gamma 1.4 MHz: {e}")),
    }
    out
}

/// Simulator endpoints against the pump/probe closed forms.
pub fn endpoint_checks() -> CriterionOutcome {
    let mut out = CriterionOutcome::new(4, "pump/probe endpoint checks");
    let (tp, tau, gamma) = (20e-6, 0.764e-3, 0.75e6);
    for r0_tp in [1e-3, 1e-2, 0.1] {
        let r0 = r0_tp / tp;
        // long period: every sequence starts from the ground state
        let cfg =
            HoleBurnConfig { pump_rate_hz: r0, repetition_period_s: 1.0, detuning_points: 41, ..HoleBurnConfig::weak_pump(gamma, tau) };
        let profile = match simulate_hole(&cfg) {
            Ok(p) => p,
            Err(e) => {
                out.check(false, format!("R0 tp = {r0_tp}: {e}"));
                continue;
            }
        };
        let e = &profile.endpoints;
        let reference = eq1_reference(tp, 0.0, tau, r0, gamma).unwrap_or(f64::NAN);
        let rel = e.simulated_resonant / reference - 1.0;
        out.check(
            rel.abs() <= 0.01,
            format!("R0 tp = {r0_tp}: resonant occupation {:.6e} vs rho_res(2 tp) {reference:.6e} ({rel:+.2e})", e.simulated_resonant),
        );
        let rel_far = e.simulated_far / e.rate_equation_far - 1.0;
        out.check(
            rel_far.abs() <= 0.01,
            format!(
                "R0 tp = {r0_tp}: far plateau {:.6e} vs rate-equation closed form {:.6e} ({rel_far:+.2e})",
                e.simulated_far, e.rate_equation_far
            ),
        );
        out.note(format!(
            "R0 tp = {r0_tp}: far-detuned closed form 2 rho_res(tp)(1 - exp(-tp/tau)/2) = {:.6e}, discrepancy vs simulator {:+.1}%",
            e.reference_far,
            100.0 * e.far_discrepancy
        ));
    }
    let cfg = HoleBurnConfig { detuning_points: 41, ..HoleBurnConfig::weak_pump(gamma, tau) };
    if let Ok(p) = simulate_hole(&cfg) {
        out.note(format!(
            "3 ms repetition: resonant occupation exceeds rho_res(2 tp) by {:+.2}% (carry-over between sequences)",
            100.0 * (p.endpoints.simulated_resonant / rho_res(2.0 * tp, cfg.pump_rate_hz, tau) - 1.0)
        ));
    }
    out
}

fn zeeman_subsite(g_ground: f64, g_excited: f64, weights: [f64; 4]) -> ZeemanSubsite {
    ZeemanSubsite { g_ground, g_excited, weights: weights.map(BranchWeight::constant) }
}

/// Six subsites with vanishing ground g-factor and three distinct excited
/// g-factors: the branches pair up into six resolved lines.
pub fn six_line_site() -> ZeemanSite {
    let weights = [1.0, 0.4, 0.7, 0.2];
    ZeemanSite {
        zero_field_frequency_hz: wavelength_to_frequency(1536.215).unwrap_or(1.95e14),
        subsites: [1.0, 1.0, 2.5, 2.5, 4.0, 4.0].iter().map(|&ge| zeeman_subsite(0.0, ge, weights)).collect(),
        max_field_t: 0.060,
    }
}

pub fn zeeman_checks() -> CriterionOutcome {
    let mut out = CriterionOutcome::new(5, "Zeeman line counts and field reversal");
    let single = ZeemanSite { zero_field_frequency_hz: 1.95e14, subsites: vec![zeeman_subsite(1.2, 3.1, [1.0; 4])], max_field_t: 0.060 };
    match zeeman_lines(&single, 0.05, 0.0) {
        Ok(lines) => {
            let symmetric = lines.iter().zip(lines.iter().rev()).all(|(a, b)| a.offset_hz == -b.offset_hz);
            out.check(lines.len() == 4 && symmetric, format!("one subsite at 50 mT: {} lines, symmetric {symmetric}", lines.len()));
        }
        Err(e) => out.check(false, format!("one subsite: {e}")),
    }
    let six = six_line_site();
    match zeeman_lines(&six, 0.05, 0.0) {
        Ok(lines) => out.check(lines.len() == 6, format!("six-line configuration at 50 mT: {} lines", lines.len())),
        Err(e) => out.check(false, format!("six-line configuration: {e}")),
    }
    match reverse_field_check(&six, 0.05, 0.0) {
        Ok((plus, minus)) => {
            let mut pos_plus: Vec<f64> = plus.iter().map(|l| l.offset_hz).collect();
            let mut pos_minus: Vec<f64> = minus.iter().map(|l| l.offset_hz).collect();
            pos_plus.sort_by(f64::total_cmp);
            pos_minus.sort_by(f64::total_cmp);
            out.check(pos_plus == pos_minus, "positions identical under field reversal");
            let swapped = plus.iter().all(|l| minus.iter().any(|m| m.offset_hz == -l.offset_hz && m.intensity == l.intensity));
            let asymmetric = plus.iter().any(|l| minus.iter().any(|m| m.offset_hz == l.offset_hz && m.intensity != l.intensity));
            out.check(swapped && asymmetric, "arm intensities swap under field reversal");
        }
        Err(e) => out.check(false, format!("field reversal: {e}")),
    }
    out
}

pub fn purcell_checks() -> CriterionOutcome {
    let mut out = CriterionOutcome::new(6, "Purcell mode volume and cavity damping");
    let design =
        CavityDesign::new(CavityInputs { wavelength_nm: 1540.0, refractive_index: SILICON_INDEX, gamma_bulk_hz: 1e3, purcell_factor: 1e6 });
    match design {
        Ok(d) => out.check(
            (0.085..=0.105).contains(&d.mode_volume_cubic_wavelengths),
            format!("V_m = {:.4} (lambda/n)^3, {:.3e} m^3", d.mode_volume_cubic_wavelengths, d.mode_volume_m3),
        ),
        Err(e) => out.check(false, e.to_string()),
    }
    match kappa_for_quality(1540.0, 1e5) {
        Ok(k) => out.check((1.9e9..=2.0e9).contains(&k), format!("Q = 1e5 gives kappa = {:.4} GHz", k / 1e9)),
        Err(e) => out.check(false, e.to_string()),
    }
    out
}

pub fn efficiency_checks() -> CriterionOutcome {
    let mut out = CriterionOutcome::new(7, "detector efficiency formula");
    let eta = detection_efficiency(662_720.0, 20.0, 1e6);
    out.check(
        eta.as_ref().is_ok_and(|e| *e == 0.6627),
        match &eta {
            Ok(e) => format!("(662720 - 20)/1e6 = {e}"),
            Err(e) => format!("(662720 - 20)/1e6 failed: {e}"),
        },
    );
    let zero = detection_efficiency(20.0, 20.0, 1e6);
    out.check(
        zero.as_ref().is_ok_and(|e| *e == 0.0),
        match &zero {
            Ok(e) => format!("CR = DCR gives {e}"),
            Err(e) => format!("CR = DCR failed: {e}"),
        },
    );
    out
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// Seeded randomized property checks; the same properties run under proptest
/// in the test suite.
pub fn property_checks(cases: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new(8, "property suites");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    // exact recovery from ±30% starts
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..cases {
        let truth = [rng.random_range(-1e9..1e9), rng.random_range(0.5e9..4e9), rng.random_range(0.2..30.0), rng.random_range(0.0..2.0)];
        let x: Vec<f64> = (0..301).map(|i| -15e9 + 1e8 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| Lorentzian.eval(x, &truth)).collect();
        let init = [
            truth[0] + rng.random_range(-0.3..0.3) * truth[1],
            truth[1] * rng.random_range(0.7..1.3),
            truth[2] * rng.random_range(0.7..1.3),
            truth[3] + rng.random_range(-0.3..0.3) * truth[2],
        ];
        match least_squares_fit(&Lorentzian, &x, &y, None, &init, &FitOptions::default()) {
            Ok(f) => {
                // center and offset relative to the width and height scales
                let denominators = [truth[1], truth[1], truth[2], truth[2]];
                let err = f.values().iter().zip(truth).zip(denominators).map(|((v, t), d)| (v - t).abs() / d).fold(0.0, f64::max);
                worst = worst.max(err);
                failures += usize::from(err > 1e-6);
            }
            Err(_) => failures += 1,
        }
    }
    out.check(failures == 0, format!("exact recovery: {cases} Lorentzians, worst relative error {worst:.1e}, {failures} failures"));

    // analytic Jacobians vs central differences
    type Draw = fn(&mut ChaCha8Rng) -> (Vec<f64>, f64);
    let models: [(&dyn ModelFunction, Draw); 4] = [
        (&Lorentzian, |r| {
            (
                vec![r.random_range(-1e9..1e9), r.random_range(0.5e9..4e9), r.random_range(0.1..10.0), r.random_range(0.1..1.0)],
                r.random_range(-3e9..3e9),
            )
        }),
        (&LorentzianDip, |r| {
            (
                vec![r.random_range(0.5..1.5), r.random_range(0.01..0.5), r.random_range(-1e6..1e6), r.random_range(0.5e6..5e6)],
                r.random_range(-5e6..5e6),
            )
        }),
        (&SingleExponential, |r| (vec![r.random_range(1.0..1e4), r.random_range(0.2e-3..2e-3)], r.random_range(0.0..5e-3))),
        (&Biexponential, |r| {
            (
                vec![r.random_range(1.0..1e4), r.random_range(0.1e-3..0.4e-3), r.random_range(1.0..1e4), r.random_range(0.6e-3..2e-3)],
                r.random_range(0.0..5e-3),
            )
        }),
    ];
    let mut jac_fail = 0;
    for (model, draw) in models {
        for _ in 0..cases {
            let (p, x) = draw(&mut rng);
            let mut a = vec![0.0; p.len()];
            let mut f = vec![0.0; p.len()];
            model.gradient(x, &p, &mut a);
            finite_difference_gradient(model, x, &p, &mut f);
            let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
            jac_fail += usize::from(a.iter().zip(&f).any(|(a, f)| (a - f).abs() > 1e-6 * norm.max(1e-300)));
        }
    }
    out.check(jac_fail == 0, format!("Jacobian vs finite differences: {} points, {jac_fail} beyond 1e-6", 4 * cases));

    // Poisson sampling preserves the mean
    let mut poisson_fail = 0;
    let trials = (cases / 10).max(5);
    for k in 0..trials {
        let lambda = rng.random_range(0.5..500.0);
        let n = 20_000;
        let s = Spectrum::new((0..n).map(|i| i as f64).collect(), vec![lambda; n], ScanProtocol::default(), DetectorModel::default(), None)
            .and_then(|e| sample_spectrum(&e, k as u64));
        match s {
            Ok(s) => {
                let mean = s.counts().iter().sum::<f64>() / n as f64;
                poisson_fail += usize::from((mean - lambda).abs() > 5.0 * (lambda / n as f64).sqrt());
            }
            Err(_) => poisson_fail += 1,
        }
    }
    out.check(poisson_fail == 0, format!("Poisson mean within 5 sigma: {trials} rates, {poisson_fail} failures"));

    // prominence scales with the signal
    let mut prom_fail = 0;
    for _ in 0..cases {
        let v: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let k = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let threshold = rng.random_range(0.0..0.5);
        let a = detect_peaks_in(&v, &[], threshold);
        let b = detect_peaks_in(&scaled, &[], threshold * k);
        let same =
            a.len() == b.len() && a.iter().zip(&b).all(|(p, q)| p.index == q.index && rel_close(q.prominence, k * p.prominence, 1e-12));
        prom_fail += usize::from(!same);
    }
    out.check(prom_fail == 0, format!("prominence scale-equivariance: {cases} signals, {prom_fail} failures"));

    // matching fraction grows with tolerance
    let catalog = Catalog::table1();
    let mut mono_fail = 0;
    for _ in 0..(cases / 4).max(5) {
        let electrical: Vec<f64> = (0..100).map(|_| rng.random_range(193.4e12..197.8e12)).collect();
        let tolerances = [0.0, 1e8, 5e8, 1e9, 2e9, 5e9, 2e10];
        let fractions: Vec<f64> =
            tolerances.iter().map(|&t| match_resonances(&catalog, &electrical, t).map(|r| r.fraction).unwrap_or(f64::NAN)).collect();
        mono_fail += usize::from(!fractions.windows(2).all(|w| w[0] <= w[1]));
    }
    out.check(mono_fail == 0, format!("matching fraction monotone in tolerance: {mono_fail} failures"));

    // wavelength/frequency conversion is an involution
    let mut conv_fail = 0;
    for _ in 0..cases {
        let wl = rng.random_range(1000.0..2000.0);
        let back = wavelength_to_frequency(wl).and_then(frequency_to_wavelength);
        conv_fail += usize::from(!back.is_ok_and(|b| rel_close(b, wl, 1e-12)));
    }
    out.check(conv_fail == 0, format!("conversion involution at 1e-12: {cases} wavelengths, {conv_fail} failures"));
    out
}

/// Runs every criterion in order.
pub fn run_all(options: &ReproduceOptions) -> Vec<CriterionOutcome> {
    vec![
        survey_round_trip(options.survey_seed),
        lifetime_round_trip(options.lifetime_seeds, options.lifetime_repetitions),
        hole_round_trip(),
        endpoint_checks(),
        zeeman_checks(),
        purcell_checks(),
        efficiency_checks(),
        property_checks(options.property_cases),
    ]
}
