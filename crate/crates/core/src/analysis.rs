//! End-to-end analyses: survey to catalog, background-subtracted lifetimes,
//! hole width to homogeneous linewidth, optical/electrical matching, the
//! background-choice study and detector-efficiency calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{decay_trace_at, sample_trace, TimeTrace};
use crate::error::{domain, Error, Result};
use crate::fit::{
    blended_clusters, detect_peaks_in, fit_lorentzian_cluster, least_squares_fit, sandwich_standard_errors, select_decay_model_xy,
    Biexponential, DecaySelection, FitOptions, Lorentzian, LorentzianDip, ModelFunction, PeakCandidate, SingleExponential, Weighting,
};
use crate::model::{
    frequency_to_wavelength, listed_offresonant_for, wavelength_to_frequency, Catalog, DetectorModel, FitResult, ScanProtocol,
    SiteResonance,
};
use crate::synth::{smooth_gaussian, Spectrum};

/// Minimum peak prominence of the survey, counts per pulse.
pub const SURVEY_MIN_PROMINENCE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveyOptions {
    pub min_prominence: f64,
    /// Gaussian smoothing applied before peak detection, in grid steps.
    pub smoothing_steps: f64,
    /// Refits with the other lines' models subtracted.
    pub refinement_passes: usize,
}

impl Default for SurveyOptions {
    fn default() -> Self {
        SurveyOptions { min_prominence: SURVEY_MIN_PROMINENCE, smoothing_steps: 2.0, refinement_passes: 2 }
    }
}

/// One detected peak with its fit or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyLine {
    pub candidate: PeakCandidate,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResult {
    pub catalog: Catalog,
    pub lines: Vec<SurveyLine>,
}

fn line_model(fit: &FitResult, freqs: &[f64]) -> Vec<f64> {
    let p = [fit.value("center"), fit.value("fwhm"), fit.value("amplitude"), 0.0];
    freqs.iter().map(|&f| Lorentzian.eval(f, &p)).collect()
}

fn usable(fit: &FitResult) -> bool {
    fit.converged && fit.value("fwhm") > 0.0 && fit.value("amplitude") > 0.0
}

/// Peak detection on the smoothed spectrum followed by one Lorentzian fit per
/// peak. Failed fits are reported per line and left out of the catalog.
pub fn survey_pipeline(spectrum: &Spectrum, options: &SurveyOptions) -> Result<SurveyResult> {
    if spectrum.is_empty() {
        return domain("spectrum is empty");
    }
    let freqs = spectrum.frequencies_hz();
    let smoothed = smooth_gaussian(&spectrum.counts_per_pulse(), options.smoothing_steps);
    let candidates = detect_peaks_in(&smoothed, freqs, options.min_prominence);

    let clusters = blended_clusters(spectrum, &candidates);
    log::debug!("{} candidates in {} clusters", candidates.len(), clusters.len());

    // one entry per candidate, in candidate order
    let fit_all = |models: Option<&Vec<Option<Vec<f64>>>>| -> Vec<Result<FitResult>> {
        let mut first = 0;
        let offsets: Vec<usize> = clusters
            .iter()
            .map(|g| {
                let o = first;
                first += g.len();
                o
            })
            .collect();
        clusters
            .par_iter()
            .zip(offsets)
            .flat_map_iter(|(group, first)| {
                let others = models.map(|m| {
                    let mut sum = vec![0.0; freqs.len()];
                    for (j, model) in m.iter().enumerate() {
                        if let (false, Some(model)) = ((first..first + group.len()).contains(&j), model) {
                            sum.iter_mut().zip(model).for_each(|(s, v)| *s += v);
                        }
                    }
                    sum
                });
                match fit_lorentzian_cluster(spectrum, group, &candidates, others.as_deref()) {
                    Ok(fits) => fits.into_iter().map(Ok).collect::<Vec<_>>(),
                    Err(e) => group.iter().map(|_| Err(Error::Domain(e.to_string()))).collect(),
                }
            })
            .collect()
    };

    let mut fits = fit_all(None);
    for _ in 0..options.refinement_passes {
        let models: Vec<Option<Vec<f64>>> =
            fits.iter().map(|f| f.as_ref().ok().filter(|f| usable(f)).map(|f| line_model(f, freqs))).collect();
        let refined = fit_all(Some(&models));
        // keep a refined fit only where it succeeded
        fits = fits
            .into_iter()
            .zip(refined)
            .map(|(old, new)| match new {
                Ok(n) if usable(&n) => Ok(n),
                _ => old,
            })
            .collect();
    }

    let mut lines = Vec::with_capacity(candidates.len());
    let mut sites = Vec::new();
    for (c, fit) in candidates.iter().zip(fits) {
        match fit {
            Ok(f) if usable(&f) => {
                let site = frequency_to_wavelength(f.value("center"))
                    .and_then(|wl| SiteResonance::new(wl, f.value("fwhm"), f.value("amplitude"), None));
                match site {
                    Ok(s) => {
                        sites.push(s);
                        lines.push(SurveyLine { candidate: *c, fit: Some(f), error: None });
                    }
                    Err(e) => lines.push(SurveyLine { candidate: *c, fit: Some(f), error: Some(e.to_string()) }),
                }
            }
            Ok(f) => lines.push(SurveyLine { candidate: *c, fit: Some(f), error: Some("fit did not converge to a positive peak".into()) }),
            Err(e) => lines.push(SurveyLine { candidate: *c, fit: None, error: Some(e.to_string()) }),
        }
        if let Some(e) = &lines.last().and_then(|l| l.error.as_ref()) {
            log::warn!("peak at {:.0} Hz: {e}", c.center_hz);
        }
    }
    // two fits collapsing onto one center would make the catalog invalid
    sites.sort_by(|a, b| b.center_wavelength_nm.total_cmp(&a.center_wavelength_nm));
    sites.dedup_by(|a, b| (a.center_frequency_hz() - b.center_frequency_hz()).abs() < crate::model::CENTER_UNIQUENESS_HZ);
    let catalog = Catalog::new(sites, "survey fit")?;
    Ok(SurveyResult { catalog, lines })
}

/// Background-subtracted lifetime of one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    pub selection: Option<DecaySelection>,
    /// Summed difference counts over the fitted bins and its Poisson sigma.
    pub signal_sum: f64,
    pub signal_sigma: f64,
    pub no_signal: bool,
    pub warnings: Vec<String>,
}

impl LifetimeResult {
    /// Single-exponential lifetime and its standard error.
    pub fn lifetime(&self) -> Option<(f64, f64)> {
        let fit = self.selection.as_ref()?.single.as_ref()?;
        Some((fit.value("tau"), fit.error("tau")))
    }
}

/// First bin used by lifetime fits, seconds after the end of the pulse.
pub const LIFETIME_FIT_START_S: f64 = 10e-6;

/// Subtracts the off-resonant trace from the on-resonant one and fits the
/// difference. The fit is unweighted so the estimates depend on the difference
/// only; standard errors use the Poisson variance of each bin.
pub fn extract_lifetime(on_res: &TimeTrace, off_res: &TimeTrace) -> Result<LifetimeResult> {
    if on_res.len() != off_res.len() || (on_res.bin_width_s - off_res.bin_width_s).abs() > 1e-15 {
        return domain("on- and off-resonant traces differ in binning or duration");
    }
    let start = (0..on_res.len())
        .find(|&i| i as f64 * on_res.bin_width_s >= LIFETIME_FIT_START_S * (1.0 - 1e-9))
        .ok_or(Error::InsufficientData { needed: 20, got: 0 })?;
    let x: Vec<f64> = on_res.bin_starts()[start..].to_vec();
    let diff: Vec<f64> = on_res.counts[start..].iter().zip(&off_res.counts[start..]).map(|(a, b)| a - b).collect();
    let var: Vec<f64> = on_res.counts[start..].iter().zip(&off_res.counts[start..]).map(|(a, b)| a + b).collect();

    let signal_sum: f64 = diff.iter().sum();
    let signal_sigma = var.iter().sum::<f64>().sqrt();
    let no_signal = signal_sum.abs() <= 3.0 * signal_sigma;

    let mut warnings = Vec::new();
    let tail = diff.len() / 2;
    let tail_sum: f64 = diff[tail..].iter().sum();
    let tail_sigma = var[tail..].iter().sum::<f64>().sqrt();
    if tail_sum < -3.0 * tail_sigma.max(1e-300) || signal_sum < -3.0 * signal_sigma.max(1e-300) {
        warnings.push(format!("background mismatch: difference goes negative ({tail_sum:.1} counts in the tail, sigma {tail_sigma:.1})"));
    }

    let selection = match select_decay_model_xy(&x, &diff, Weighting::Uniform) {
        Ok(mut s) => {
            // errors from the Poisson variance of the difference, bin by bin
            for fit in s.single.iter_mut().chain(s.biexponential.iter_mut()) {
                let errors = match fit.model.as_str() {
                    "single_exponential" => sandwich_standard_errors(&SingleExponential, &x, &fit.values(), &var),
                    _ => sandwich_standard_errors(&Biexponential, &x, &fit.values(), &var),
                };
                if let Ok(errors) = errors {
                    for (name, e) in fit.names.clone().iter().zip(errors) {
                        if let Some(p) = fit.parameters.get_mut(name) {
                            p.standard_error = e;
                        }
                    }
                }
            }
            Some(s)
        }
        Err(e) if no_signal => {
            warnings.push(format!("no fit: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    if no_signal {
        warnings.push("no signal: difference is consistent with zero".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LifetimeResult { selection, signal_sum, signal_sigma, no_signal, warnings })
}

/// Default off-resonant reference: the listed wavelength when available,
/// otherwise two linewidths above the line center.
pub fn off_resonant_frequency(site: &SiteResonance) -> f64 {
    listed_offresonant_for(site)
        .and_then(|wl| wavelength_to_frequency(wl).ok())
        .unwrap_or(site.center_frequency_hz() + 2.0 * site.inhomogeneous_fwhm_hz)
}

/// Hole width and the homogeneous linewidth bound derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleAnalysis {
    pub hole_fwhm_hz: f64,
    /// Upper bound on the homogeneous linewidth, half the hole width.
    pub homogeneous_bound_hz: f64,
    pub depth: f64,
    pub plateau_noise: f64,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Fits an inverted Lorentzian to a hole profile.
pub fn hole_to_homogeneous(detunings_hz: &[f64], signal: &[f64]) -> Result<HoleAnalysis> {
    if detunings_hz.len() != signal.len() {
        return domain("detuning and signal columns differ in length");
    }
    if detunings_hz.len() < 8 {
        return Err(Error::InsufficientData { needed: 8, got: detunings_hz.len() });
    }
    let mut order: Vec<usize> = (0..detunings_hz.len()).collect();
    order.sort_by(|&a, &b| detunings_hz[a].total_cmp(&detunings_hz[b]));
    let x: Vec<f64> = order.iter().map(|&i| detunings_hz[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| signal[i]).collect();
    let n = x.len();

    // outer quarter on each side is taken as plateau
    let q = (n / 4).max(2);
    let outer: Vec<f64> = y[..q].iter().chain(&y[n - q..]).copied().collect();
    let plateau = outer.iter().sum::<f64>() / outer.len() as f64;
    let noise = std_dev(&outer);
    let (imin, &ymin) = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let raw_depth = plateau - ymin;
    if !(raw_depth > 3.0 * noise) {
        return Err(Error::NoHole { depth: raw_depth, noise });
    }
    let half = plateau - 0.5 * raw_depth;
    let left = (0..imin).rev().find(|&k| y[k] > half).unwrap_or(0);
    let right = (imin..n).find(|&k| y[k] > half).unwrap_or(n - 1);
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let width0 = (x[right] - x[left]).max(2.0 * step);
    let initial = [plateau, raw_depth, x[imin], width0];
    let scales = vec![plateau.abs().max(raw_depth), raw_depth, width0, width0];
    let fit = least_squares_fit(&LorentzianDip, &x, &y, None, &initial, &FitOptions { scales: Some(scales), ..FitOptions::default() })
        .map_err(|e| match e {
            Error::RankDeficient => Error::NoHole { depth: raw_depth, noise },
            other => other,
        })?;
    let depth = fit.value("depth");
    let fwhm = fit.value("fwhm").abs();
    if !(depth > 3.0 * noise) {
        return Err(Error::NoHole { depth, noise });
    }
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push("hole fit did not converge".into());
    }
    let reach = x[0].abs().min(x[n - 1].abs());
    if reach < 5.0 * fwhm {
        warnings.push(format!("profile covers ±{reach:.3e} Hz, less than 5 hole widths"));
    }
    Ok(HoleAnalysis { hole_fwhm_hz: fwhm, homogeneous_bound_hz: fwhm / 2.0, depth, plateau_noise: noise, fit, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub optical_wavelength_nm: f64,
    pub optical_hz: f64,
    pub electrical_hz: f64,
    pub separation_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchPair>,
    /// Matched optical lines over all optical lines.
    pub fraction: f64,
    pub tolerance_hz: f64,
}

pub const DEFAULT_MATCH_TOLERANCE_HZ: f64 = 1e9;

/// Greedy one-to-one matching, closest pairs first; ties go to the lower frequency.
pub fn match_resonances(optical: &Catalog, electrical_hz: &[f64], tolerance_hz: f64) -> Result<MatchReport> {
    if optical.is_empty() || electrical_hz.is_empty() {
        return domain("matching needs nonempty optical and electrical lists");
    }
    if !(tolerance_hz >= 0.0) {
        return domain("tolerance must be nonnegative");
    }
    let opt: Vec<(f64, f64)> = optical.iter().map(|r| (r.center_frequency_hz(), r.center_wavelength_nm)).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (fo, _)) in opt.iter().enumerate() {
        for (j, fe) in electrical_hz.iter().enumerate() {
            let d = (fo - fe).abs();
            if d <= tolerance_hz {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(opt[a.1].0.total_cmp(&opt[b.1].0)).then(electrical_hz[a.2].total_cmp(&electrical_hz[b.2]))
    });
    let mut used_o = vec![false; opt.len()];
    let mut used_e = vec![false; electrical_hz.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in candidates {
        if !used_o[i] && !used_e[j] {
            used_o[i] = true;
            used_e[j] = true;
            pairs.push(MatchPair {
                optical_wavelength_nm: opt[i].1,
                optical_hz: opt[i].0,
                electrical_hz: electrical_hz[j],
                separation_hz: d,
            });
        }
    }
    pairs.sort_by(|a, b| a.optical_hz.total_cmp(&b.optical_hz));
    Ok(MatchReport { fraction: pairs.len() as f64 / opt.len() as f64, pairs, tolerance_hz })
}

/// Offsets of the six background traces from the line center.
pub const BACKGROUND_OFFSETS_HZ: [f64; 6] = [-2.5e9, -1.5e9, -0.5e9, 0.5e9, 1.5e9, 2.5e9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub offset_hz: f64,
    pub lifetime_s: Option<f64>,
    pub standard_error_s: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundStudy {
    pub entries: Vec<BackgroundEntry>,
    pub mean_fit_error_s: f64,
    /// Sample standard deviation of the lifetimes.
    pub lifetime_spread_s: f64,
    pub spread_to_error_ratio: f64,
    pub excluded: usize,
}

/// Lifetimes from one on-resonant trace and six background traces.
pub fn background_choice_study(on_res: &TimeTrace, off_res: &[TimeTrace]) -> Result<BackgroundStudy> {
    if off_res.len() != BACKGROUND_OFFSETS_HZ.len() {
        return domain(format!("need exactly 6 background traces, got {}", off_res.len()));
    }
    let entries: Vec<BackgroundEntry> = off_res
        .par_iter()
        .zip(BACKGROUND_OFFSETS_HZ.par_iter())
        .map(|(off, &offset_hz)| match extract_lifetime(on_res, off) {
            Ok(r) => match (r.lifetime(), r.selection.as_ref().and_then(|s| s.single.as_ref()).is_some_and(|f| f.converged)) {
                (Some((tau, se)), true) => BackgroundEntry { offset_hz, lifetime_s: Some(tau), standard_error_s: Some(se), note: None },
                _ => BackgroundEntry {
                    offset_hz,
                    lifetime_s: None,
                    standard_error_s: None,
                    note: Some("fit did not converge; excluded".into()),
                },
            },
            Err(e) => BackgroundEntry { offset_hz, lifetime_s: None, standard_error_s: None, note: Some(format!("{e}; excluded")) },
        })
        .collect();
    let good: Vec<(f64, f64)> = entries.iter().filter_map(|e| Some((e.lifetime_s?, e.standard_error_s?))).collect();
    if good.is_empty() {
        return Err(Error::ModelSelection("no background choice gave a converged lifetime".into()));
    }
    let mean_fit_error_s = good.iter().map(|g| g.1).sum::<f64>() / good.len() as f64;
    let lifetimes: Vec<f64> = good.iter().map(|g| g.0).collect();
    let lifetime_spread_s = std_dev(&lifetimes);
    let spread_to_error_ratio = if mean_fit_error_s > 0.0 { lifetime_spread_s / mean_fit_error_s } else { 0.0 };
    Ok(BackgroundStudy { excluded: entries.len() - good.len(), entries, mean_fit_error_s, lifetime_spread_s, spread_to_error_ratio })
}

/// Synthetic input for [`background_choice_study`]: the trace at the line
/// center and the six offset traces, Poisson-sampled with consecutive seeds.
pub fn background_study_traces(
    catalog: &Catalog,
    site: &SiteResonance,
    detectors: &[DetectorModel; 6],
    on_detector: &DetectorModel,
    protocol: &ScanProtocol,
    duration_s: f64,
    seed: Option<u64>,
) -> Result<(TimeTrace, Vec<TimeTrace>)> {
    let f0 = site.center_frequency_hz();
    let sample = |t: TimeTrace, k: u64| match seed {
        Some(s) => sample_trace(&t, s.wrapping_add(k)),
        None => t,
    };
    let on = sample(decay_trace_at(catalog, f0, on_detector, protocol, duration_s)?, 0);
    let offs = BACKGROUND_OFFSETS_HZ
        .iter()
        .zip(detectors)
        .enumerate()
        .map(|(k, (off, det))| Ok(sample(decay_trace_at(catalog, f0 + off, det, protocol, duration_s)?, k as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((on, offs))
}

/// Per-study aggregates over several lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyAggregate {
    pub mean_of_ratios: f64,
    pub ratio_of_means: f64,
}

/// Aggregates (mean fit error, lifetime spread) pairs both ways.
pub fn aggregate_studies(pairs: &[(f64, f64)]) -> Result<StudyAggregate> {
    if pairs.is_empty() {
        return domain("no studies to aggregate");
    }
    let n = pairs.len() as f64;
    let mean_of_ratios = pairs.iter().map(|(e, s)| s / e).sum::<f64>() / n;
    let ratio_of_means = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.iter().map(|p| p.0).sum::<f64>();
    Ok(StudyAggregate { mean_of_ratios, ratio_of_means })
}

/// The bundled per-line background-choice results (mean fit error, spread), seconds.
pub fn bundled_background_studies() -> Vec<(f64, f64, f64)> {
    let mut rdr = csv::Reader::from_reader(include_str!("../data/lifetime_uncertainty.csv").as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("bundled table is valid");
            let v = |k: usize| r[k].parse::<f64>().expect("number");
            (v(0), v(1) * 1e-6, v(2) * 1e-6)
        })
        .collect()
}

/// System detection efficiency (CR − DCR) / N.
pub fn detection_efficiency(count_rate_hz: f64, dark_rate_hz: f64, photon_rate_hz: f64) -> Result<f64> {
    if !(photon_rate_hz > 0.0) {
        return domain("photon rate must be positive");
    }
    if !(dark_rate_hz >= 0.0) {
        return domain("dark count rate must be nonnegative");
    }
    if count_rate_hz < dark_rate_hz {
        return domain(format!("count rate {count_rate_hz} Hz below dark rate {dark_rate_hz} Hz gives a negative efficiency"));
    }
    Ok((count_rate_hz - dark_rate_hz) / photon_rate_hz)
}
