use ple_core::analysis::*;
use ple_core::cavity::*;
use ple_core::dynamics::*;
use ple_core::fit::*;
use ple_core::model::*;
use ple_core::synth::*;
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorentzian_exact_recovery(
        center in -1e9..1e9f64, fwhm in 0.5e9..4e9f64, amp in 0.2..30.0f64, offset in 0.0..2.0f64,
        dc in -0.3..0.3f64, dw in 0.7..1.3f64, da in 0.7..1.3f64, doff in -0.3..0.3f64,
    ) {
        let truth = [center, fwhm, amp, offset];
        let x: Vec<f64> = (0..301).map(|i| -15e9 + 1e8 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| Lorentzian.eval(x, &truth)).collect();
        let init = [center + dc * fwhm, fwhm * dw, amp * da, offset + doff * amp];
        let fit = least_squares_fit(&Lorentzian, &x, &y, None, &init, &FitOptions::default()).unwrap();
        let v = fit.values();
        prop_assert!((v[0] - center).abs() <= 1e-6 * fwhm);
        prop_assert!(rel_close(v[1], fwhm, 1e-6));
        prop_assert!(rel_close(v[2], amp, 1e-6));
        prop_assert!((v[3] - offset).abs() <= 1e-6 * amp);
    }

    #[test]
    fn exponential_exact_recovery(amp in 10.0..1e5f64, tau in 0.3e-3..2e-3f64, start in 0.7..1.3f64) {
        let x: Vec<f64> = (0..400).map(|i| 10e-6 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| SingleExponential.eval(x, &[amp, tau])).collect();
        let fit = least_squares_fit(&SingleExponential, &x, &y, None, &[amp * start, tau / start], &FitOptions::default()).unwrap();
        prop_assert!(rel_close(fit.value("amplitude"), amp, 1e-6));
        prop_assert!(rel_close(fit.value("tau"), tau, 1e-6));
    }

    #[test]
    fn jacobians_match_finite_differences(
        center in -1e9..1e9f64, fwhm in 0.5e9..4e9f64, amp in 0.1..10.0f64, x in -3e9..3e9f64,
        t in 0.0..5e-3f64, a1 in 1.0..1e4f64, t1 in 0.1e-3..0.4e-3f64, a2 in 1.0..1e4f64, t2 in 0.6e-3..2e-3f64,
    ) {
        let cases: [(&dyn ModelFunction, Vec<f64>, f64); 4] = [
            (&Lorentzian, vec![center, fwhm, amp, 0.3], x),
            (&LorentzianDip, vec![1.0, 0.2, center * 1e-3, fwhm * 1e-3], x * 1e-3),
            (&SingleExponential, vec![a1, t2], t),
            (&Biexponential, vec![a1, t1, a2, t2], t),
        ];
        for (model, p, x) in cases {
            let mut analytic = vec![0.0; p.len()];
            let mut numeric = vec![0.0; p.len()];
            model.gradient(x, &p, &mut analytic);
            finite_difference_gradient(model, x, &p, &mut numeric);
            let norm = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            for (a, n) in analytic.iter().zip(&numeric) {
                prop_assert!((a - n).abs() <= 1e-6 * norm, "{}: {analytic:?} vs {numeric:?}", model.name());
            }
        }
    }

    #[test]
    fn poisson_sampling_preserves_mean(lambda in 0.5..500.0f64, seed in any::<u64>()) {
        let n = 20_000;
        let expected = Spectrum::new((0..n).map(|i| i as f64).collect(), vec![lambda; n], ScanProtocol::default(), DetectorModel::default(), None).unwrap();
        let s = sample_spectrum(&expected, seed).unwrap();
        let mean = s.counts().iter().sum::<f64>() / n as f64;
        prop_assert!((mean - lambda).abs() <= 5.0 * (lambda / n as f64).sqrt());
        prop_assert!(s.counts().iter().all(|&c| c >= 0.0 && c.fract() == 0.0));
    }

    #[test]
    fn prominence_is_scale_equivariant(v in prop::collection::vec(0.0..1.0f64, 10..200), k in 0.01..100.0f64, threshold in 0.0..0.5f64) {
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let a = detect_peaks_in(&v, &[], threshold);
        let b = detect_peaks_in(&scaled, &[], threshold * k);
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.index, q.index);
            prop_assert!(rel_close(q.prominence, k * p.prominence, 1e-12));
        }
    }

    #[test]
    fn matching_fraction_is_monotone(electrical in prop::collection::vec(193.4e12..197.8e12f64, 1..120), t1 in 0.0..5e9f64, t2 in 0.0..5e9f64) {
        let catalog = Catalog::table1();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = match_resonances(&catalog, &electrical, lo).unwrap();
        let b = match_resonances(&catalog, &electrical, hi).unwrap();
        prop_assert!(a.fraction <= b.fraction);
        prop_assert!(a.pairs.iter().all(|p| p.separation_hz <= lo));
    }

    #[test]
    fn conversion_is_an_involution(wl in 1000.0..2000.0f64) {
        let back = frequency_to_wavelength(wavelength_to_frequency(wl).unwrap()).unwrap();
        prop_assert!(rel_close(back, wl, 1e-12));
    }

    #[test]
    fn purcell_mode_volume_round_trip(f in 1.0..1e8f64, gamma in 10.0..1e5f64, wl in 1400.0..1700.0f64) {
        let (v, _) = mode_volume(wl, SILICON_INDEX, f, gamma).unwrap();
        prop_assert!(rel_close(purcell_for_mode_volume(wl, SILICON_INDEX, v, gamma).unwrap(), f, 1e-12));
    }

    #[test]
    fn occupation_stays_below_half(t in 0.0..10e-3f64, rate in 0.0..1e7f64, tau in 0.1e-3..3e-3f64) {
        let rho = rho_res(t, rate, tau);
        prop_assert!((0.0..=0.5).contains(&rho));
    }

    #[test]
    fn lifetime_ignores_common_additive_trace(level in 0.0..500.0f64, slope in 0.0..1e5f64) {
        let site = SiteResonance::new(1527.565, 1.43e9, 25.0, Some(0.807e-3)).unwrap();
        let det = DetectorModel::default();
        let p = ScanProtocol::default();
        let on = decay_trace(&site, &det, &p, 5e-3).unwrap();
        let off = background_trace(&det, &p, 5e-3).unwrap();
        let common: Vec<f64> = off.bin_starts().iter().map(|t| level + slope * t).collect();
        let common = TimeTrace::new(off.bin_width_s, common, p).unwrap();
        let base = extract_lifetime(&on, &off).unwrap().lifetime().unwrap().0;
        let shifted = extract_lifetime(&on.added(&common).unwrap(), &off.added(&common).unwrap()).unwrap().lifetime().unwrap().0;
        prop_assert!(rel_close(base, shifted, 1e-9));
    }

    #[test]
    fn traces_are_nonnegative(amp in 0.0..50.0f64, tau in 0.1e-3..3e-3f64, dark in 0.0..1e3f64, seed in any::<u64>()) {
        let site = SiteResonance::new(1530.0, 1e9, amp, Some(tau)).unwrap();
        let det = DetectorModel { dark_count_rate_hz: dark, ..DetectorModel::default() };
        let expected = decay_trace(&site, &det, &ScanProtocol::default(), 5e-3).unwrap();
        prop_assert!(expected.counts.iter().all(|&c| c >= 0.0));
        prop_assert!(sample_trace(&expected, seed).counts.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn zeeman_lines_bounded_and_reversal_symmetric(
        subsites in prop::collection::vec((0.0..5.0f64, 0.0..15.0f64, prop::array::uniform4(0.0..1.0f64)), 1..24),
        field in -0.06..0.06f64,
        pol in 0.0..std::f64::consts::PI,
    ) {
        let site = ZeemanSite {
            zero_field_frequency_hz: 195e12,
            subsites: subsites
                .iter()
                .map(|&(g_ground, g_excited, w)| ZeemanSubsite { g_ground, g_excited, weights: w.map(BranchWeight::constant) })
                .collect(),
            max_field_t: 0.060,
        };
        let lines = zeeman_lines(&site, field, pol).unwrap();
        prop_assert!(lines.len() <= 4 * site.subsites.len());
        let (plus, minus) = reverse_field_check(&site, field, pol).unwrap();
        prop_assert_eq!(plus.len(), minus.len());
        for (a, b) in plus.iter().zip(minus.iter().rev()) {
            prop_assert!((a.offset_hz + b.offset_hz).abs() <= 1e-6, "{a:?} vs {b:?}");
            prop_assert!(rel_close(a.intensity, b.intensity, 1e-12));
        }
    }
}
